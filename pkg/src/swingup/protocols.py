"""Closed-form design rules for swing-up excitation.

Rabi parameters of a detuned constant drive, the matching detuning of the
second colour, the Bessel side-band estimate for frequency-modulated
pulses, and the rectangular dwell-time scheduler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import BlochState, IntegratorSettings, integrate
from .pulses import SQRT_2PI, RectangularSwitched


@dataclass(frozen=True)
class RabiParams:
    """Generalized Rabi frequency and oscillation amplitude."""

    omega_r: float
    amplitude_a: float

    @property
    def period(self):
        return 2 * math.pi / self.omega_r


def rabi_params(omega0, delta) -> RabiParams:
    """Rabi frequency sqrt(omega0^2 + delta^2) and amplitude (omega0/omega_r)^2.

    f(t) = a sin^2(omega_r t / 2) for a constant drive switched on at t=0.
    """
    if omega0 == 0 and delta == 0:
        raise ValueError("omega0 and delta cannot both vanish")
    wr = math.hypot(omega0, delta)
    return RabiParams(wr, (omega0 / wr) ** 2)


def second_detuning(delta1, omega1_peak):
    """Detuning of the second colour, delta1 - sqrt(omega1_peak^2 + delta1^2).

    The second pulse is placed one peak Rabi frequency of the first pulse
    below it, so ``|delta2| > 2 |delta1|`` always.
    """
    if delta1 >= 0:
        warnings.warn(
            "the two-colour rule is designed for a first pulse below the "
            f"transition (delta1 < 0); got delta1={delta1}",
            RuntimeWarning,
            stacklevel=2,
        )
    return delta1 - math.hypot(omega1_peak, delta1)


def second_detuning_for(alpha1, sigma1, delta1):
    """``second_detuning`` with the peak amplitude of a Gaussian first pulse."""
    return second_detuning(delta1, alpha1 / (SQRT_2PI * sigma1))


def fm_modulation_frequency_hint(omega0_peak, delta_c):
    """Rabi frequency at the pulse maximum, a starting point for omega_m."""
    return math.hypot(omega0_peak, delta_c)


# --- Bessel functions ---------------------------------------------------------

_SERIES_LIMIT = 12.0


def _bessel_series(n, x):
    half = 0.5 * x
    term = half ** n / math.factorial(n)
    total = term
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * max(abs(total), 1e-300) and k > 2:
            return total


def _bessel_miller(n, x):
    # backward recurrence J_{k-1} = (2k/x) J_k - J_{k+1}, normalised with
    # J_0 + 2 sum J_{2k} = 1
    ax = abs(x)
    start = 2 * ((max(n, int(ax)) + 15 + int(math.sqrt(40.0 * max(n, ax)))) // 2)
    jp, j = 0.0, 1e-30
    norm = 0.0
    out = 0.0
    for k in range(start, 0, -1):
        jm = 2.0 * k / ax * j - jp
        jp, j = j, jm
        if abs(j) > 1e250:
            j *= 1e-250
            jp *= 1e-250
            out *= 1e-250
            norm *= 1e-250
        if k - 1 == n:
            out = j
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
    norm += j
    val = out / norm
    if x < 0 and n % 2 == 1:
        val = -val
    return val


def bessel_jn(n: int, x: float) -> float:
    """Bessel function of the first kind J_n(x) for integer n.

    Power series for |x| <= 12 (absolute error well below 1e-12 there) and
    Miller's backward recurrence beyond.
    """
    n = int(n)
    if n < 0:
        return (-1) ** n * bessel_jn(-n, x)
    if x == 0:
        return 1.0 if n == 0 else 0.0
    if abs(x) <= _SERIES_LIMIT:
        return _bessel_series(n, x)
    return _bessel_miller(n, x)


def bessel_j1(x):
    """J_1(x); accepts scalars or arrays."""
    if np.ndim(x):
        return np.array([bessel_jn(1, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
    return bessel_jn(1, float(x))


def effective_sideband_area(alpha, delta_m, omega_m):
    """Pulse area carried by the first FM side-band, alpha * J_1(delta_m / omega_m)."""
    if omega_m == 0:
        raise ValueError("omega_m must be non-zero")
    return alpha * bessel_j1(delta_m / omega_m)


# --- rectangular detuning switching -----------------------------------------


def half_period_dwells(omega0, delta_low, delta_high):
    """Half a generalized Rabi period at each detuning."""
    d_low = math.pi / rabi_params(omega0, delta_low).omega_r
    d_high = math.pi / rabi_params(omega0, delta_high).omega_r
    return d_low, d_high


def rectangular_schedule(omega0, delta_low, delta_high, n_cycles, scale_low=1.0, scale_high=1.0,
                         t_start=0.0) -> RectangularSwitched:
    """Alternating detuning schedule starting at ``delta_low``.

    Each segment lasts half a generalized Rabi period of its detuning,
    optionally scaled by ``scale_low`` / ``scale_high``. A cycle is one
    low-high pair.
    """
    if abs(delta_low) > abs(delta_high):
        raise ValueError("|delta_low| must not exceed |delta_high|")
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    d_low, d_high = half_period_dwells(omega0, delta_low, delta_high)
    segs = [(delta_low, scale_low * d_low), (delta_high, scale_high * d_high)] * int(n_cycles)
    return RectangularSwitched(omega0, tuple(segs), t_start)


@dataclass(frozen=True)
class ScheduleScan:
    schedule: RectangularSwitched
    final_f: float
    n_cycles: int
    scale_low: float
    scale_high: float


def scan_rectangular_schedule(omega0, delta_low, delta_high, total_duration=None,
                              n_cycles=(9, 10), correction=0.2, n_grid=401,
                              settings: IntegratorSettings | None = None) -> ScheduleScan:
    """Brute-force search for the best dwell correction.

    With ``total_duration`` given, the low dwell scale is scanned over
    ``1 +- correction`` and the high dwell scale is fixed by the duration;
    otherwise one common scale is scanned. Candidates whose scales leave
    the correction band are skipped.
    """
    d_low, d_high = half_period_dwells(omega0, delta_low, delta_high)
    settings = settings or IntegratorSettings()
    best = None
    for n in n_cycles:
        for s in np.linspace(1 - correction, 1 + correction, n_grid):
            if total_duration is None:
                sl = sh = s
            else:
                sl = s
                sh = (total_duration / n - sl * d_low) / d_high
                if abs(sh - 1) > correction + 1e-12:
                    continue
            sch = rectangular_schedule(omega0, delta_low, delta_high, n, sl, sh)
            f = integrate(BlochState(), sch, *sch.window(), settings).final.f
            if best is None or f > best.final_f:
                best = ScheduleScan(sch, f, n, float(sl), float(sh))
    if best is None:
        raise ValueError("no schedule within the correction band matches the duration")
    return best


def cycle_end_occupations(schedule: RectangularSwitched, settings: IntegratorSettings | None = None):
    """Occupation at the end of every low-high pair of a schedule."""
    settings = settings or IntegratorSettings()
    state = BlochState()
    edges = schedule.switch_times()
    out = []
    for k in range(2, len(edges), 2):
        state = integrate(state, schedule, edges[k - 2], edges[k], settings).final
        out.append(state.f)
    return np.array(out)
