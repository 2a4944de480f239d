"""Rotating-frame drive constructors and pulse spectra.

Every pulse maps to a small component table (see ``_kernels``) evaluated
by the compiled integrator, and also provides a direct numpy evaluation
of its closed form ``spec(t)``. Parameters are stored in internal units:
rates and detunings in 1/ps, times in ps, pulse areas in rad. Use
``mev()`` to convert energies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import _kernels as K
from .core import HBAR

SQRT_2PI = math.sqrt(2.0 * math.pi)
TRUNCATION = 8.0  # Gaussian window half-width in units of sigma


def mev(e):
    """Energy in meV to angular frequency in 1/ps."""
    return e / HBAR


def to_mev(w):
    return w * HBAR


# physical kind of each parameter, used for display units and config I/O
TIME, RATE, AREA, ANGLE, COUNT = "time", "rate", "area", "angle", "count"


def gaussian_envelope(alpha, sigma, t, center=0.0):
    """Gaussian envelope with pulse area ``alpha`` and width ``sigma``.

    ``alpha / (sqrt(2 pi) sigma) * exp(-(t - center)^2 / (2 sigma^2))``
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = (np.asarray(t, dtype=float) - center) / sigma
    return alpha / (SQRT_2PI * sigma) * np.exp(-0.5 * x * x)


def _row(kind, amp, a, b, delta=0.0, t_ref=0.0, phase0=0.0, delta_m=0.0, omega_m=0.0, closed=0.0):
    r = np.zeros(K.N_COLS)
    r[K.KIND] = kind
    r[K.AMP] = amp
    r[K.A] = a
    r[K.B] = b
    r[K.DELTA] = delta
    r[K.T_REF] = t_ref
    r[K.PHASE0] = phase0
    r[K.DELTA_M] = delta_m
    r[K.OMEGA_M] = omega_m
    r[K.CLOSED_END] = closed
    return r


def evaluate_table(comps, t):
    """Vectorised numpy evaluation of a component table."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for c in comps:
        if c[K.KIND] == K.GAUSSIAN:
            env = c[K.AMP] * np.exp(-0.5 * ((t - c[K.A]) / c[K.B]) ** 2)
        else:
            on = (t >= c[K.A]) & ((t < c[K.B]) | ((t == c[K.B]) & (c[K.CLOSED_END] != 0)))
            env = np.where(on, c[K.AMP], 0.0)
        s = t - c[K.T_REF]
        th = c[K.DELTA] * s + c[K.PHASE0]
        if c[K.OMEGA_M] != 0:
            th = th - c[K.DELTA_M] / c[K.OMEGA_M] * (np.cos(c[K.OMEGA_M] * s) - 1.0)
        out += env * np.exp(-1j * th)
    return out


def _table_derivative(comps, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for c in comps:
        s = t - c[K.T_REF]
        th = c[K.DELTA] * s + c[K.PHASE0]
        dth = np.full(t.shape, c[K.DELTA])
        if c[K.OMEGA_M] != 0:
            wm = c[K.OMEGA_M]
            th = th - c[K.DELTA_M] / wm * (np.cos(wm * s) - 1.0)
            dth = dth + c[K.DELTA_M] * np.sin(wm * s)
        if c[K.KIND] == K.GAUSSIAN:
            x = (t - c[K.A]) / c[K.B]
            env = c[K.AMP] * np.exp(-0.5 * x * x)
            denv = -x / c[K.B] * env
        else:
            on = (t >= c[K.A]) & (t <= c[K.B])
            env = np.where(on, c[K.AMP], 0.0)
            denv = 0.0
        out += (denv - 1j * dth * env) * np.exp(-1j * th)
    return out


class PulseSpec:
    """Common behaviour of the pulse families.

    Subclasses provide ``components()``, ``window()`` and ``feature_width()``.
    """

    FIELD_KINDS: dict = {}

    def components(self) -> np.ndarray:
        raise NotImplementedError

    def window(self) -> tuple:
        raise NotImplementedError

    def breakpoints(self):
        """Times where the drive or its derivative jumps."""
        return []

    def impulses(self):
        """Instantaneous rotations as (time, area, phase) triples."""
        return []

    def feature_width(self):
        """Narrowest spectral feature to resolve, in meV."""
        t0, t1 = self.window()
        return 2 * math.pi * HBAR / max(t1 - t0, 1e-12)

    def __call__(self, t):
        return evaluate_table(self.components(), t)

    def derivative(self, t):
        return _table_derivative(self.components(), t)

    def instantaneous_detuning(self, t):
        """d theta/dt for Omega = |Omega| exp(-i theta), in 1/ps (NaN where Omega = 0)."""
        om = self(t)
        dom = self.derivative(t)
        mag2 = np.abs(om) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(mag2 > 0, -(dom * np.conj(om)).imag / mag2, np.nan)

    def with_(self, **kw):
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class ConstantDrive(PulseSpec):
    """Constant amplitude ``omega0`` at detuning ``detuning`` on [t_on, t_off]."""

    omega0: float
    detuning: float = 0.0
    t_on: float = 0.0
    t_off: float = 1.0

    FIELD_KINDS = {"omega0": RATE, "detuning": RATE, "t_on": TIME, "t_off": TIME}

    def __post_init__(self):
        if self.t_off < self.t_on:
            raise ValueError("t_off must not precede t_on")

    def components(self):
        return np.array([_row(K.RECTANGULAR, self.omega0, self.t_on, self.t_off,
                              self.detuning, self.t_on, closed=1.0)])

    def window(self):
        return (self.t_on, self.t_off)

    def breakpoints(self):
        return [self.t_on, self.t_off]


@dataclass(frozen=True)
class RectangularSwitched(PulseSpec):
    """Constant amplitude with piecewise-constant detuning.

    ``segments`` is a tuple of (detuning, dwell) pairs played in order from
    ``t_start``. The accumulated phase is continuous across switches.
    """

    omega0: float
    segments: tuple = ()
    t_start: float = 0.0

    FIELD_KINDS = {"omega0": RATE, "t_start": TIME}

    def __post_init__(self):
        segs = tuple((float(d), float(w)) for d, w in self.segments)
        if not segs:
            raise ValueError("at least one segment is required")
        if any(w <= 0 for _, w in segs):
            raise ValueError("all dwell times must be positive")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self):
        return sum(w for _, w in self.segments)

    def switch_times(self):
        return self.t_start + np.concatenate([[0.0], np.cumsum([w for _, w in self.segments])])

    def components(self):
        rows = []
        edges = self.switch_times()
        theta = 0.0
        n = len(self.segments)
        for k, (d, w) in enumerate(self.segments):
            rows.append(_row(K.RECTANGULAR, self.omega0, edges[k], edges[k + 1], d,
                             edges[k], theta, closed=1.0 if k == n - 1 else 0.0))
            theta += d * w
        return np.array(rows)

    def window(self):
        return (self.t_start, self.t_start + self.duration)

    def breakpoints(self):
        return list(self.switch_times())


@dataclass(frozen=True)
class FmGaussian(PulseSpec):
    """Gaussian pulse with sinusoidally modulated detuning.

    Detuning ``delta_c + delta_m sin(omega_m t)``; the phase is the exact
    integral with theta(0) = 0.
    """

    alpha: float
    sigma: float
    delta_c: float = 0.0
    delta_m: float = 0.0
    omega_m: float = 0.0
    center: float = 0.0

    FIELD_KINDS = {"alpha": AREA, "sigma": TIME, "delta_c": RATE, "delta_m": RATE,
                   "omega_m": RATE, "center": TIME}

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    def components(self):
        return np.array([_row(K.GAUSSIAN, self.alpha / (SQRT_2PI * self.sigma), self.center,
                              self.sigma, self.delta_c, self.center, 0.0,
                              self.delta_m, self.omega_m)])

    def window(self):
        h = TRUNCATION * self.sigma
        return (self.center - h, self.center + h)

    def feature_width(self):
        return HBAR / self.sigma

    def peak_amplitude(self):
        return self.alpha / (SQRT_2PI * self.sigma)


@dataclass(frozen=True)
class TwoColor(PulseSpec):
    """Sum of two detuned Gaussians, the second delayed by ``tau`` with phase ``phi``."""

    alpha1: float
    sigma1: float
    delta1: float
    alpha2: float
    sigma2: float
    delta2: float
    tau: float = 0.0
    phi: float = 0.0

    FIELD_KINDS = {"alpha1": AREA, "sigma1": TIME, "delta1": RATE, "alpha2": AREA,
                   "sigma2": TIME, "delta2": RATE, "tau": TIME, "phi": ANGLE}

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigma1 and sigma2 must be positive")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("pulse areas must be non-negative")

    def components(self):
        return np.array([
            _row(K.GAUSSIAN, self.alpha1 / (SQRT_2PI * self.sigma1), 0.0, self.sigma1, self.delta1),
            _row(K.GAUSSIAN, self.alpha2 / (SQRT_2PI * self.sigma2), self.tau, self.sigma2,
                 self.delta2, 0.0, -self.phi),
        ])

    def window(self):
        lo = min(-TRUNCATION * self.sigma1, self.tau - TRUNCATION * self.sigma2)
        hi = max(TRUNCATION * self.sigma1, self.tau + TRUNCATION * self.sigma2)
        return (lo, hi)

    def feature_width(self):
        return HBAR / max(self.sigma1, self.sigma2)

    def first_peak_amplitude(self):
        return self.alpha1 / (SQRT_2PI * self.sigma1)


@dataclass(frozen=True)
class DeltaPulse(PulseSpec):
    """Instantaneous resonant rotation by ``area`` at time ``t0``."""

    area: float = math.pi
    t0: float = 0.0
    phase: float = 0.0

    FIELD_KINDS = {"area": AREA, "t0": TIME, "phase": ANGLE}

    def components(self):
        return np.zeros((0, K.N_COLS))

    def window(self):
        return (self.t0, self.t0)

    def impulses(self):
        return [(self.t0, self.area, self.phase)]

    def feature_width(self):
        return math.inf


PULSE_TYPES = {
    "constant": ConstantDrive,
    "rectangular": RectangularSwitched,
    "fm_gaussian": FmGaussian,
    "two_color": TwoColor,
    "delta": DeltaPulse,
}


def pulse_type_name(spec):
    for k, v in PULSE_TYPES.items():
        if type(spec) is v:
            return k
    raise TypeError(f"unknown pulse type {type(spec).__name__}")


# --- closed forms evaluated directly from the parameters -------------------


def fm_phase(spec: FmGaussian, t):
    """Accumulated phase of an FM pulse, theta(center) = 0."""
    s = np.asarray(t, dtype=float) - spec.center
    if spec.omega_m == 0:
        return spec.delta_c * s
    return spec.delta_c * s - spec.delta_m / spec.omega_m * (np.cos(spec.omega_m * s) - 1.0)


def fm_drive(spec: FmGaussian, t):
    env = gaussian_envelope(spec.alpha, spec.sigma, t, spec.center)
    return env * np.exp(-1j * fm_phase(spec, t))


def two_color_drive(spec: TwoColor, t):
    t = np.asarray(t, dtype=float)
    e1 = gaussian_envelope(spec.alpha1, spec.sigma1, t)
    e2 = gaussian_envelope(spec.alpha2, spec.sigma2, t - spec.tau)
    return e1 * np.exp(-1j * spec.delta1 * t) + e2 * np.exp(-1j * spec.delta2 * t + 1j * spec.phi)


def rectangular_drive(spec: RectangularSwitched, t):
    t = np.asarray(t, dtype=float)
    edges = spec.switch_times()
    dets = np.array([d for d, _ in spec.segments])
    dwells = np.diff(edges)
    theta0 = np.concatenate([[0.0], np.cumsum(dets * dwells)])
    k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(dets) - 1)
    theta = theta0[k] + dets[k] * (t - edges[k])
    on = (t >= edges[0]) & (t <= edges[-1])
    return np.where(on, spec.omega0 * np.exp(-1j * theta), 0.0)


# --- spectra -----------------------------------------------------------------


class SpectrumResolutionWarning(UserWarning):
    """Frequency resolution is too coarse for the pulse's spectral features."""


@dataclass
class Spectrum:
    """Fourier amplitude of the rotating-frame field on a detuning axis.

    ``S(w) = integral Omega(t) exp(+i w t) dt`` so that a carrier
    ``exp(-i Delta t)`` peaks at ``w = Delta``.
    """

    detuning: np.ndarray  # meV
    amplitude: np.ndarray  # ps (complex)
    magnitude: np.ndarray = field(init=False)

    def __post_init__(self):
        self.magnitude = np.abs(self.amplitude)

    @property
    def d_omega(self):
        return (self.detuning[1] - self.detuning[0]) / HBAR

    def energy(self):
        """Sum |S|^2 dw (equals 2 pi times the time-domain field energy)."""
        return float(np.sum(self.magnitude ** 2) * self.d_omega)

    def normalized(self):
        m = self.magnitude.max()
        return self.magnitude / m if m > 0 else self.magnitude

    def at(self, e_mev):
        """Magnitude interpolated at a detuning (meV)."""
        return float(np.interp(e_mev, self.detuning, self.magnitude))

    def peaks(self, rel_height=1e-3):
        """Detunings (meV) of local maxima above ``rel_height`` of the maximum."""
        m = self.magnitude
        thr = rel_height * m.max()
        i = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:]) & (m[1:-1] > thr)) + 1
        return self.detuning[i]


def spectrum(drive, window=None, resolution=0.01, step=2e-3):
    """Discrete Fourier transform of a drive.

    Parameters
    ----------
    drive : PulseSpec or callable
    window : (t0, t1), optional
        Sampling window in ps; defaults to ``drive.window()``.
    resolution : float
        Requested detuning spacing in meV; achieved by zero padding.
    step : float
        Time step in ps; the detuning axis spans +-pi*hbar/step.
    """
    if window is None:
        window = drive.window()
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("spectrum window must have positive length")
    n = int(math.ceil((t1 - t0) / step)) + 1
    t = t0 + step * np.arange(n)
    x = np.asarray(drive(t), dtype=complex)
    n_fft = max(n, int(math.ceil(2 * math.pi * HBAR / (resolution * step))))
    n_fft = 1 << (n_fft - 1).bit_length()
    width = getattr(drive, "feature_width", lambda: math.inf)()
    actual = 2 * math.pi * HBAR / (n_fft * step)
    if actual > 0.25 * width:
        warnings.warn(
            f"spectral resolution {actual:.3g} meV is coarse compared to the "
            f"feature width {width:.3g} meV",
            SpectrumResolutionWarning,
            stacklevel=2,
        )
    amp = step * np.fft.fft(x, n_fft)
    omega = -2 * math.pi * np.fft.fftfreq(n_fft, d=step)
    amp = amp * np.exp(1j * omega * t0)
    order = np.argsort(omega)
    return Spectrum(omega[order] * HBAR, amp[order])
