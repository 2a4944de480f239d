"""Single-photon figures of merit of a pulsed emitter.

A pulse train with period ``T`` drives the emitter, which decays
radiatively with rate ``gamma`` through the lowering operator
``s = |g><x|``. Two-time correlations follow from the quantum regression
theorem, which is exact for this Markovian model:

    G2(t, tau)  = rho_xx(t) * n(t + tau | ground state at t)
    g1(t, tau)  = <s^+(t + tau) s(t)>, propagating s rho(t)
    G2_HOM      = 1/2 [rho_xx(t) rho_xx(t + tau) - |g1|^2 + G2]

Time integrals are organised per period bin ``[a, a + T)`` where ``a`` is
the start of the drive window. The zero-delay peak collects pairs with
both times in the same bin, the side peak pairs in consecutive bins.
Inside the drive window the evolution uses RK4 step propagators on a
fine grid; after it the Liouvillian is drive free and the evolution is
applied in closed form. All double integrals reduce to backward
recursions over the step propagators, so a full period costs O(N).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .core import (
    DensityMatrix,
    IntegrationError,
    IntegratorSettings,
    InvariantViolation,
    _fixed_step,
    _local_table,
    _n_steps,
    delta_rotation,
)
from .pulses import PulseSpec, pulse_type_name

GROUND = np.array([1, 0, 0, 0], dtype=complex)
EXCITED_ROW = np.array([0, 0, 0, 1], dtype=complex)  # reads X_xx
COHERENCE_ROW = np.array([0, 1, 0, 0], dtype=complex)  # reads X_gx


class ConvergenceError(IntegrationError):
    """The periodic steady state was not reached within the period cap."""


@dataclass(frozen=True)
class PulseTrainSpec:
    """Periodic excitation of a decaying emitter.

    Parameters
    ----------
    pulse : PulseSpec
        Drive of one period; its window must be shorter than ``period``.
    period : float
        Pulse separation in ps.
    gamma : float
        Radiative decay rate in 1/ps.
    warmup_periods : int
        Minimum number of periods propagated from the ground state.
    max_periods : int
        Cap for the steady-state iteration.
    tol : float
        Max-norm change of the period-start state that counts as converged.
    """

    pulse: PulseSpec
    period: float
    gamma: float
    warmup_periods: int = 1
    max_periods: int = 50
    tol: float = 1e-10
    settings: IntegratorSettings = IntegratorSettings()

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive for a pulse train")
        if self.gamma * self.period < 8:
            raise ValueError(
                f"gamma*period = {self.gamma * self.period:.3g} < 8: the emitter "
                "does not relax between pulses"
            )
        a, b = self.pulse.window()
        if b - a >= self.period:
            raise ValueError("pulse window longer than the period")
        if self.warmup_periods < 1 or self.max_periods < self.warmup_periods:
            raise ValueError("need 1 <= warmup_periods <= max_periods")


def unitary_superop(u):
    """Superoperator of X -> u X u^+ on (X_gg, X_gx, X_xg, X_xx)."""
    return np.kron(u, np.conj(u))


def decay_superop(gamma, dt):
    """Drive-free evolution over ``dt``."""
    e = math.exp(-gamma * dt)
    e2 = math.exp(-0.5 * gamma * dt)
    d = np.zeros((4, 4), dtype=complex)
    d[0, 0] = 1.0
    d[0, 3] = 1.0 - e
    d[1, 1] = e2
    d[2, 2] = e2
    d[3, 3] = e
    return d


def lower(x):
    """s X for s = |g><x|, in vector form."""
    return np.array([x[2], x[3], 0.0, 0.0], dtype=complex)


class PeriodModel:
    """Step propagators of one period and the periodic steady state."""

    def __init__(self, train: PulseTrainSpec):
        self.train = train
        g = train.gamma
        a, b = train.pulse.window()
        self.a, self.b, self.T, self.gamma = a, b, train.period, g
        comps = train.pulse.components()
        kicks = {}
        for tk, area, phase in train.pulse.impulses():
            kicks.setdefault(tk, []).append(unitary_superop(delta_rotation(area, phase)))
        inner = [t for t in list(train.pulse.breakpoints()) + list(kicks) if a < t < b]
        edges = sorted({a, b, *inner})
        mats, steps, times = [], [], [a]
        for k, lo in enumerate(edges):
            for m in kicks.get(lo, []):
                mats.append(m[None])
                steps.append(np.zeros(1))
                times.append(lo)
            if k + 1 == len(edges):
                break
            hi = edges[k + 1]
            n = _n_steps(lo, hi, _fixed_step(comps, train.settings))
            h = (hi - lo) / n
            w = K.fill_drive(_local_table(comps, lo, hi), lo, 0.5 * h, 2 * n + 1)
            mats.append(K.rk4_step_matrices(w, h, n, g))
            steps.append(np.full(n, h))
            times.extend(lo + h * np.arange(1, n + 1))
        if mats:
            self.mats = np.ascontiguousarray(np.concatenate(mats))
            self.steps = np.concatenate(steps)
        else:
            self.mats = np.zeros((0, 4, 4), dtype=complex)
            self.steps = np.zeros(0)
        self.times = np.array(times)
        self.n = len(self.steps)
        self.L = self.T - (b - a)
        self.D = decay_superop(g, self.L)
        self.E = (1.0 - math.exp(-g * self.L)) / g
        w = np.zeros(self.n + 1)
        w[:-1] += 0.5 * self.steps
        w[1:] += 0.5 * self.steps
        self.weights = w
        self._steady_state()

    def _steady_state(self):
        tr = self.train
        P = self.D @ K.product(self.mats)
        x = GROUND.copy()
        for k in range(1, tr.max_periods + 1):
            xn = P @ x
            change = float(np.max(np.abs(xn - x)))
            x = xn
            if k >= tr.warmup_periods and change < tr.tol:
                break
        else:
            raise ConvergenceError(
                f"period-start state still changing by {change:.3e} after {tr.max_periods} periods"
            )
        self.n_periods = k
        self.residual = change
        self.x0 = x
        self.states = K.forward_states(self.mats, x)
        X = self.states
        self.trace_error = float(np.max(np.abs(X[:, 0] + X[:, 3] - 1.0)))
        # smallest eigenvalue of each density matrix
        pop_g, pop_x = X[:, 0].real, X[:, 3].real
        disc = np.sqrt(0.25 * (pop_g - pop_x) ** 2 + np.abs(X[:, 2]) ** 2)
        self.min_eigenvalue = float(np.min(0.5 * (pop_g + pop_x) - disc))
        tol = self.train.settings.invariant_tol
        if self.trace_error > tol:
            raise InvariantViolation(f"trace drifted by {self.trace_error:.3e}")
        if self.min_eigenvalue < -1e-9:
            raise InvariantViolation(f"negative eigenvalue {self.min_eigenvalue:.3e}")

    # --- time bookkeeping ---------------------------------------------------

    def locate(self, t):
        """(period index, grid index or None, time after window end)."""
        m = math.floor((t - self.a) / self.T + 1e-12)
        u = t - self.a - m * self.T
        w = self.b - self.a
        if u <= w + 1e-12:
            j = int(np.argmin(np.abs(self.times - (self.a + u))))
            return m, j, 0.0
        return m, None, u - w

    def state_at(self, t):
        m, j, v = self.locate(t)
        if j is not None:
            return self.states[j]
        return decay_superop(self.gamma, v) @ self.states[-1]

    def _move(self, x, src, dst):
        m0, j0, v0 = src
        m1, j1, v1 = dst
        while True:
            if m0 == m1:
                if j0 is not None and j1 is not None and j1 >= j0:
                    return K.apply_range(self.mats, j0, j1, x)
                if j0 is not None and j1 is None:
                    return decay_superop(self.gamma, v1) @ K.apply_range(self.mats, j0, self.n, x)
                if j0 is None and j1 is None and v1 >= v0:
                    return decay_superop(self.gamma, v1 - v0) @ x
            # run to the start of the next period
            if j0 is not None:
                x = K.apply_range(self.mats, j0, self.n, x)
                v0 = 0.0
            x = decay_superop(self.gamma, self.L - v0) @ x
            m0, j0, v0 = m0 + 1, 0, 0.0

    def propagate(self, x, t, tau):
        """Propagate an operator vector from ``t`` to ``t + tau`` (tau >= 0)."""
        return self._move(x, self.locate(t), self.locate(t + tau))

    def propagate_many(self, x, t, taus):
        """States at ``t + taus`` for ascending non-negative ``taus``."""
        src = self.locate(t)
        out = np.empty((len(taus), 4), dtype=complex)
        for k, tau in enumerate(taus):
            dst = self.locate(t + tau)
            x = self._move(x, src, dst)
            src = dst
            out[k] = x
        return out

    # --- figures of merit -----------------------------------------------------

    def integrals(self):
        M, h, E, D = self.mats, self.steps, self.E, self.D
        X = self.states
        rho = X[:, 3].real
        rb = rho[-1]
        wt = self.weights
        count = float(wt @ rho + rb * E)

        # G2: ordered pairs inside one bin, then pairs across neighbouring bins
        S, _ = K.backward_linear(M, h, EXCITED_ROW, EXCITED_ROW, E)
        g2_central = float(wt @ (rho * S[:, 0].real))
        phi = S[0]
        R = K.pullback_rows(M, phi @ D)
        g2_side = float(wt @ (rho * R[:, 0].real) + rb * E * phi[0].real)

        # |g1|^2 terms
        xs = np.zeros((self.n + 1, 4), dtype=complex)
        xs[:, 0] = X[:, 2]
        xs[:, 1] = X[:, 3]
        proj = np.outer(COHERENCE_ROW, COHERENCE_ROW).astype(complex)
        G = K.backward_quadratic(M, h, proj, E)
        g1_central = float(np.einsum("ni,nij,nj->n", xs.conj(), G, xs).real @ wt)
        H = K.pullback_forms(M, D.conj().T @ G[0] @ D)
        v = np.array([X[-1, 2], rb * math.exp(-0.5 * self.gamma * self.L), 0, 0])
        g1_side = float(np.einsum("ni,nij,nj->n", xs.conj(), H, xs).real @ wt
                        + (v.conj() @ G[0] @ v).real * E)

        # rho(t) rho(t + tau) terms; the tail-tail part equals the |g1|^2 one
        cum = np.concatenate([np.cumsum((0.5 * h * (rho[:-1] + rho[1:]))[::-1])[::-1], [0.0]])
        tail_tail = 0.5 * (rb * E) ** 2
        pp_central = float(wt @ (rho * (cum + rb * E)) + tail_tail)
        g1_central += tail_tail
        pp_side = count ** 2

        hom_central = 0.5 * (pp_central - g1_central + g2_central)
        hom_side = 0.5 * (pp_side - g1_side + g2_side)
        return {
            "count": count,
            "g2_central": 2 * g2_central,
            "g2_side": g2_side,
            "hom_central": 2 * hom_central,
            "hom_side": hom_side,
            "pp_central": 2 * pp_central,
            "g1sq_central": 2 * g1_central,
            "pp_side": pp_side,
            "g1sq_side": g1_side,
        }


@lru_cache(maxsize=16)
def period_model(train: PulseTrainSpec) -> PeriodModel:
    return PeriodModel(train)


def periodic_steady_state(train: PulseTrainSpec) -> DensityMatrix:
    """Density matrix at the start of a period once the train is periodic."""
    return DensityMatrix.from_vector(period_model(train).x0)


def delta_train_count(gamma, period):
    """Photons per period for a train of instantaneous pi pulses."""
    e = math.exp(-gamma * period)
    return (1.0 - e) / (1.0 + e)


@dataclass
class EmissionMetrics:
    """Purity, indistinguishability and photon output with raw integrals.

    Integrals of correlation functions are over both times of a period
    bin (not divided by the period); their ratios define the metrics.
    """

    purity: float
    indistinguishability: float
    photon_output: float
    raw: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)

    def percent(self):
        return {
            "purity_percent": 100 * self.purity,
            "indistinguishability_percent": 100 * self.indistinguishability,
            "photon_output_percent": 100 * self.photon_output,
        }


def emission_metrics(train: PulseTrainSpec) -> EmissionMetrics:
    model = period_model(train)
    r = model.integrals()
    if not r["g2_side"] > 0 or not r["hom_side"] > 0:
        raise ValueError("side-peak integral vanishes: the pulse does not excite the emitter")
    purity = 1.0 - r["g2_central"] / r["g2_side"]
    indist = 1.0 - r["hom_central"] / r["hom_side"]
    output = train.gamma * r["count"] / delta_train_count(train.gamma, train.period)
    raw = dict(r)
    raw.update(
        periods=model.n_periods,
        residual=model.residual,
        trace_error=model.trace_error,
        min_eigenvalue=model.min_eigenvalue,
        grid_points=model.n + 1,
        photons_per_period=train.gamma * r["count"],
    )
    return EmissionMetrics(purity, indist, output, raw)


def purity(train: PulseTrainSpec) -> float:
    return emission_metrics(train).purity


def indistinguishability(train: PulseTrainSpec) -> float:
    return emission_metrics(train).indistinguishability


def photon_output(train: PulseTrainSpec) -> float:
    """gamma * integral of rho_xx over a period, relative to an ideal pi-pulse train."""
    return emission_metrics(train).photon_output


def g2_two_time(train: PulseTrainSpec, t, tau):
    """<s^+(t) s^+(t+tau) s(t+tau) s(t)> in the periodic steady state.

    Times inside the drive window are snapped to the propagation grid.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    model = period_model(train)
    x = model.state_at(t)
    cond = model.propagate(GROUND, t, tau)
    return float(x[3].real * cond[3].real)


def g1_two_time(train: PulseTrainSpec, t, tau):
    """<s^+(t+tau) s(t)> in the periodic steady state."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    model = period_model(train)
    x = lower(model.state_at(t))
    return complex(model.propagate(x, t, tau)[1])


def g2_hom_two_time(train: PulseTrainSpec, t, tau):
    model = period_model(train)
    r0 = model.state_at(t)[3].real
    r1 = model.state_at(t + tau)[3].real
    return 0.5 * (r0 * r1 - abs(g1_two_time(train, t, tau)) ** 2 + g2_two_time(train, t, tau))


# --- time-averaged correlation functions -----------------------------------


@dataclass
class CorrelationTable:
    """Period-averaged G2(tau) and G2_HOM(tau) on a delay grid."""

    tau: np.ndarray
    g2: np.ndarray
    g2_hom: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau [ps]", "G2", "G2_HOM"])
            for row in zip(self.tau, self.g2, self.g2_hom):
                w.writerow([repr(float(x)) for x in row])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"tau": self.tau.tolist(), "g2": self.g2.tolist(),
                       "g2_hom": self.g2_hom.tolist(), "metadata": self.metadata}, fh, indent=1)


def default_tau_grid(train: PulseTrainSpec, n_fine=200, n_coarse=60):
    """Delays covering both peaks: dense near 0 and T, geometric in between."""
    a, b = train.pulse.window()
    w = max(b - a, 1e-3)
    T = train.period
    fine0 = np.linspace(0, 2 * w, n_fine)
    mid = np.geomspace(2 * w, T - 2 * w, n_coarse) if T > 4 * w else np.array([])
    fine1 = np.linspace(T - 2 * w, T + 2 * w, 2 * n_fine)
    far = T + 2 * w + np.geomspace(1e-3, 0.5 * T - 2 * w, n_coarse)
    return np.unique(np.concatenate([fine0, mid, fine1, far]))


def _sample_times(model: PeriodModel, stride, n_tail):
    idx = np.arange(0, model.n + 1, max(stride, 1))
    if idx[-1] != model.n:
        idx = np.append(idx, model.n)
    tw = model.times[idx]
    tail = model.b + np.concatenate([np.geomspace(1e-3, model.L, n_tail)])
    t = np.concatenate([tw, tail])
    wts = np.zeros(len(t))
    dt = np.diff(t)
    wts[:-1] += 0.5 * dt
    wts[1:] += 0.5 * dt
    return t, wts


def correlation_table(train: PulseTrainSpec, taus=None, stride=100, n_tail=120):
    """Average G2(t, tau) and G2_HOM(t, tau) over one period.

    The average uses a coarse trapezoid in ``t`` (every ``stride``-th grid
    point in the drive window, geometric points after it); it is meant for
    inspection and export. The figures of merit use the exact recursions.
    """
    model = period_model(train)
    taus = default_tau_grid(train) if taus is None else np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise ValueError("delays must be non-negative; use symmetry for tau < 0")
    order = np.argsort(taus)
    taus_sorted = taus[order]
    ts, wts = _sample_times(model, stride, n_tail)
    g2 = np.zeros(len(taus))
    g1sq = np.zeros(len(taus))
    pp = np.zeros(len(taus))
    for t, wt in zip(ts, wts):
        x = model.state_at(t)
        r0 = x[3].real
        cond = model.propagate_many(GROUND, t, taus_sorted)
        coh = model.propagate_many(lower(x), t, taus_sorted)
        r1 = np.array([model.state_at(t + tau)[3].real for tau in taus_sorted])
        g2[order] += wt * r0 * cond[:, 3].real
        g1sq[order] += wt * np.abs(coh[:, 1]) ** 2
        pp[order] += wt * r0 * r1
    T = train.period
    g2 /= T
    hom = 0.5 * (pp / T - g1sq / T + g2)
    meta = {"period": T, "gamma": train.gamma, "t_samples": len(ts), "stride": stride,
            "pulse_type": pulse_type_name(train.pulse)}
    return CorrelationTable(taus, g2, hom, meta)
