"""State types, rotating-frame equations of motion and time integration.

Everything runs in the frame rotating at the transition frequency, so a
drive sample is the complex Rabi frequency Omega(t) in 1/ps. Energies are
converted with ``HBAR`` (meV ps); a detuning of -8 meV enters the equations
as ``-8 / HBAR`` rad/ps.

The closed system uses the Bloch variables (p, f)

    df/dt = Im(conj(Omega) p)
    dp/dt = (i/2) Omega (1 - 2 f)

and radiative decay with rate gamma adds ``-gamma f`` and ``-gamma/2 p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K

HBAR = 0.6582119569  # meV ps


class Units:
    """Unit conventions: meV for energies, ps for times, 1/ps for rates."""

    hbar = HBAR

    @staticmethod
    def mev_to_rate(e_mev):
        return np.asarray(e_mev) / HBAR if np.ndim(e_mev) else e_mev / HBAR

    @staticmethod
    def rate_to_mev(rate):
        return np.asarray(rate) * HBAR if np.ndim(rate) else rate * HBAR


class IntegrationError(RuntimeError):
    """Base class for failures of the time integration."""


class StepSizeUnderflow(IntegrationError):
    """Adaptive step size fell below the configured minimum."""


class InvariantViolation(IntegrationError):
    """A conserved quantity drifted beyond tolerance during integration."""


@dataclass(frozen=True)
class BlochState:
    """Closed-system state: coherence ``p`` and excited occupation ``f``."""

    p: complex = 0j
    f: float = 0.0

    @classmethod
    def ground(cls):
        return cls(0j, 0.0)

    @classmethod
    def excited(cls):
        return cls(0j, 1.0)

    def bloch_vector(self):
        return np.array([2.0 * self.p.real, -2.0 * self.p.imag, 2.0 * self.f - 1.0])

    @classmethod
    def from_bloch_vector(cls, r):
        r = np.asarray(r, dtype=float)
        return cls(complex(0.5 * r[0], -0.5 * r[1]), 0.5 * (r[2] + 1.0))

    def purity_defect(self):
        """f(1-f) - |p|^2; zero for a pure state, positive for mixed ones."""
        return self.f * (1.0 - self.f) - abs(self.p) ** 2

    def is_valid(self, tol=1e-9):
        return (-tol <= self.f <= 1.0 + tol) and self.purity_defect() >= -tol


@dataclass(frozen=True)
class DensityMatrix:
    """Two-level density matrix.

    ``rho_gx`` is the coherence that plays the role of the Bloch ``p``,
    i.e. the expectation value of the lowering operator |g><x|.
    """

    rho_gg: float = 1.0
    rho_xx: float = 0.0
    rho_gx: complex = 0j

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0, 0j)

    @classmethod
    def from_bloch(cls, state: BlochState):
        return cls(1.0 - state.f, state.f, complex(state.p))

    def to_bloch(self):
        return BlochState(complex(self.rho_gx), float(self.rho_xx))

    @property
    def trace(self):
        return self.rho_gg + self.rho_xx

    def matrix(self):
        """2x2 matrix in the basis (|g>, |x>)."""
        c = complex(self.rho_gx)
        return np.array([[self.rho_gg, np.conj(c)], [c, self.rho_xx]], dtype=complex)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix())

    def to_vector(self):
        """Operator components (X_gg, X_gx, X_xg, X_xx) used by the superoperator."""
        c = complex(self.rho_gx)
        return np.array([self.rho_gg, np.conj(c), c, self.rho_xx], dtype=complex)

    @classmethod
    def from_vector(cls, x):
        return cls(float(x[0].real), float(x[3].real), complex(x[2]))


class DriveSample(complex):
    """Rotating-frame drive value in 1/ps; rejects non-finite input."""

    def __new__(cls, omega=0j):
        z = complex.__new__(cls, omega)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise ValueError(f"drive sample must be finite, got {omega!r}")
        return z

    @property
    def omega(self):
        return complex(self)


class BlochRate(NamedTuple):
    dp: complex
    df: float


class DensityRate(NamedTuple):
    d_rho_gg: float
    d_rho_xx: float
    d_rho_gx: complex


def bloch_rhs(state: BlochState, drive) -> BlochRate:
    """Time derivative of (p, f) under the closed rotating-frame equations."""
    om = complex(drive)
    p = complex(state.p)
    df = (np.conj(om) * p).imag
    dp = 0.5j * om * (1.0 - 2.0 * state.f)
    return BlochRate(dp, float(df))


def lindblad_rhs(rho: DensityMatrix, drive, gamma: float) -> DensityRate:
    """Time derivative of the density matrix with radiative decay ``gamma``."""
    if gamma < 0:
        raise ValueError(f"decay rate must be non-negative, got {gamma}")
    coh = bloch_rhs(BlochState(complex(rho.rho_gx), rho.rho_xx), drive)
    d_xx = coh.df - gamma * rho.rho_xx
    d_gx = coh.dp - 0.5 * gamma * complex(rho.rho_gx)
    return DensityRate(-d_xx, d_xx, d_gx)


@dataclass(frozen=True)
class IntegratorSettings:
    """Integrator configuration.

    Parameters
    ----------
    method : {"rk4", "dopri5"}
        Fixed-step classical Runge-Kutta (default) or the adaptive
        Dormand-Prince 5(4) pair.
    step : float
        Fixed step in ps (rk4) or initial step (dopri5).
    rtol, atol : float
        Local error tolerances of the adaptive pair.
    min_step : float
        Underflow threshold for the adaptive step.
    stride : int
        Keep every ``stride``-th step in the returned trajectory; 0 keeps
        only the end points.
    invariant_tol : float
        Allowed drift of |r| (closed, pure start) or of positivity.
    max_rotation : float
        Upper bound on ``h * sqrt(max|Omega|^2 + max|Delta|^2)`` for the
        compiled fixed-step path; the step is reduced for very strong or
        far-detuned drives. 0 disables the bound.
    """

    method: str = "rk4"
    step: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-12
    min_step: float = 1e-9
    stride: int = 0
    invariant_tol: float = 1e-8
    max_rotation: float = 0.03

    def __post_init__(self):
        if self.method not in ("rk4", "dopri5"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.stride < 0:
            raise ValueError("stride must be >= 0")


@dataclass
class Trajectory:
    """Sampled solution: times, occupations ``f`` and coherences ``p``."""

    t: np.ndarray
    f: np.ndarray
    p: np.ndarray
    gamma: float = 0.0

    @property
    def final(self) -> BlochState:
        return BlochState(complex(self.p[-1]), float(self.f[-1]))

    @property
    def final_density(self) -> DensityMatrix:
        return DensityMatrix.from_bloch(self.final)

    def bloch_vectors(self):
        return np.stack([2 * self.p.real, -2 * self.p.imag, 2 * self.f - 1], axis=1)

    def concat(self, other: "Trajectory"):
        return Trajectory(
            np.concatenate([self.t, other.t[1:]]),
            np.concatenate([self.f, other.f[1:]]),
            np.concatenate([self.p, other.p[1:]]),
            self.gamma,
        )


def _as_bloch(state):
    if isinstance(state, DensityMatrix):
        return state.to_bloch(), True
    if isinstance(state, BlochState):
        return state, False
    raise TypeError(f"expected BlochState or DensityMatrix, got {type(state).__name__}")


def integrate(state, drive, t0, t1, settings: IntegratorSettings | None = None, gamma=0.0):
    """Propagate ``state`` from ``t0`` to ``t1``.

    Parameters
    ----------
    state : BlochState or DensityMatrix
        Initial state; a DensityMatrix implies open dynamics with ``gamma``.
    drive : pulse spec or callable
        Either an object with a ``components()`` method (the pulse classes
        of :mod:`swingup.pulses`), which uses the compiled fast path, or any
        callable ``t -> Omega(t)``.
    settings : IntegratorSettings, optional
    gamma : float
        Radiative decay rate in 1/ps; 0 gives the closed dynamics exactly.

    Returns
    -------
    Trajectory
        Samples at the requested stride; the last row is the state at t1.

    Raises
    ------
    StepSizeUnderflow
        Adaptive mode could not meet the tolerance above ``min_step``.
    InvariantViolation
        |r| drifted (closed, pure start) or positivity was lost.
    """
    settings = settings or IntegratorSettings()
    if t1 < t0:
        raise ValueError(f"t1 ({t1}) must not precede t0 ({t0})")
    if gamma < 0:
        raise ValueError(f"decay rate must be non-negative, got {gamma}")
    b, _ = _as_bloch(state)
    p0, f0 = complex(b.p), float(b.f)
    if t1 == t0:
        return Trajectory(np.array([t0]), np.array([f0]), np.array([p0]), gamma)

    comps = drive.components() if hasattr(drive, "components") else None
    fn = drive if comps is None else drive.__call__
    kicks = {}
    for tk, area, phase in getattr(drive, "impulses", lambda: [])():
        if t0 <= tk < t1:
            kicks.setdefault(tk, []).append(delta_rotation(area, phase))
    traj = None
    for a, c in _split_at(drive, t0, t1, list(kicks)):
        for u in kicks.get(a, []):
            rot = apply_unitary(BlochState(p0, f0), u)
            p0, f0 = rot.p, rot.f
        if comps is not None and settings.method == "rk4":
            seg = _rk4_fast(comps, a, c, settings, gamma, f0, p0)
        elif settings.method == "rk4":
            seg = _rk4_generic(fn, a, c, settings, gamma, f0, p0)
        else:
            seg = _dopri5(fn, a, c, settings, gamma, f0, p0)
        f0, p0 = float(seg.f[-1]), complex(seg.p[-1])
        traj = seg if traj is None else traj.concat(seg)
    check_invariants(traj, b, settings.invariant_tol)
    return traj


def _split_at(drive, t0, t1, extra=()):
    """Sub-intervals of [t0, t1] between drive discontinuities."""
    bps = list(getattr(drive, "breakpoints", lambda: [])()) + list(extra)
    bps = set(t for t in bps if t0 < t < t1)
    edges = [t0] + sorted(bps) + [t1]
    return [(a, c) for a, c in zip(edges[:-1], edges[1:]) if c > a]


def _n_steps(t0, t1, h):
    n = int(math.ceil((t1 - t0) / h - 1e-9))
    return max(n, 1)


def rate_bound(comps):
    """Upper bound of the generalized Rabi frequency of a component table."""
    if len(comps) == 0:
        return 0.0
    amp = float(np.sum(np.abs(comps[:, K.AMP])))
    det = float(np.max(np.abs(comps[:, K.DELTA]) + np.abs(comps[:, K.DELTA_M])))
    return math.hypot(amp, det)


def _fixed_step(comps, settings):
    h = settings.step
    if settings.max_rotation > 0:
        w = rate_bound(comps)
        if w * h > settings.max_rotation:
            h = settings.max_rotation / w
    return h


def _rk4_fast(comps, t0, t1, settings, gamma, f0, p0):
    n = _n_steps(t0, t1, _fixed_step(comps, settings))
    hh = (t1 - t0) / n
    w = K.fill_drive(_local_table(comps, t0, t1), t0, 0.5 * hh, 2 * n + 1)
    stride = settings.stride if settings.stride > 0 else n
    idx, fs, ps = K.rk4_bloch(w, hh, n, gamma, f0, complex(p0), stride)
    return Trajectory(t0 + idx * hh, fs, ps, gamma)


def _local_table(comps, t0, t1):
    """Component table valid on a sub-interval without interior switches.

    Rectangular rows active at the midpoint are extended over the whole
    interval so that both end samples take the one-sided limit; inactive
    rows are dropped.
    """
    rect = comps[:, K.KIND] == K.RECTANGULAR
    if not rect.any():
        return comps
    mid = 0.5 * (t0 + t1)
    keep = ~rect | ((comps[:, K.A] <= mid) & (comps[:, K.B] >= mid))
    out = comps[keep].copy()
    r = out[:, K.KIND] == K.RECTANGULAR
    out[r, K.A] = t0 - 1.0
    out[r, K.B] = t1 + 1.0
    return out


def _vec_rhs(fn, gamma):
    def rhs(t, y):
        om = complex(fn(t))
        f, pr, pi = y
        q = 1.0 - 2.0 * f
        return np.array([
            om.real * pi - om.imag * pr - gamma * f,
            -0.5 * om.imag * q - 0.5 * gamma * pr,
            0.5 * om.real * q - 0.5 * gamma * pi,
        ])
    return rhs


def _pack(ts, ys, gamma):
    ys = np.asarray(ys)
    return Trajectory(np.asarray(ts), ys[:, 0].copy(), ys[:, 1] + 1j * ys[:, 2], gamma)


def _rk4_generic(fn, t0, t1, settings, gamma, f0, p0):
    rhs = _vec_rhs(fn, gamma)
    n = _n_steps(t0, t1, settings.step)
    h = (t1 - t0) / n
    stride = settings.stride if settings.stride > 0 else n
    y = np.array([f0, p0.real, p0.imag])
    ts, ys = [t0], [y]
    for i in range(n):
        t = t0 + i * h
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % stride == 0 or i + 1 == n:
            ts.append(t0 + (i + 1) * h)
            ys.append(y)
    return _pack(ts, ys, gamma)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_E = _DP_B - np.array(
    [5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dopri5(fn, t0, t1, settings, gamma, f0, p0):
    rhs = _vec_rhs(fn, gamma)
    y = np.array([f0, p0.real, p0.imag])
    t = t0
    h = min(settings.step, t1 - t0)
    ts, ys = [t0], [y]
    k = np.empty((7, 3))
    k[0] = rhs(t, y)
    n_acc = 0
    stride = settings.stride
    while t < t1:
        if h < settings.min_step:
            raise StepSizeUnderflow(
                f"adaptive step {h:.3e} ps below min_step {settings.min_step:.3e} at t={t:.6g} ps"
            )
        h = min(h, t1 - t)
        for s in range(1, 7):
            k[s] = rhs(t + _DP_C[s] * h, y + h * np.dot(_DP_A[s], k[:s]))
        y_new = y + h * (_DP_B @ k)
        err = h * (_DP_E @ k)
        scale = settings.atol + settings.rtol * np.maximum(np.abs(y), np.abs(y_new))
        e = math.sqrt(np.mean((err / scale) ** 2))
        if e <= 1.0:
            t = t + h if t1 - t > h else t1
            y = y_new
            k[0] = k[6]
            n_acc += 1
            if t == t1 or (stride and n_acc % stride == 0):
                ts.append(t)
                ys.append(y)
        fac = 0.9 * e ** -0.2 if e > 0 else 5.0
        h *= min(5.0, max(0.2, fac))
    return _pack(ts, ys, gamma)


def check_invariants(traj: Trajectory, start: BlochState, tol=1e-8):
    """Raise InvariantViolation if the trajectory left the physical region.

    For closed dynamics from a pure state |r| must stay 1; in every case the
    density matrix must stay positive semidefinite (to ``tol``). Nothing is
    renormalised.
    """
    f, p = traj.f, traj.p
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(p))):
        raise InvariantViolation("non-finite state encountered")
    defect = f * (1.0 - f) - np.abs(p) ** 2
    if traj.gamma == 0.0 and abs(start.purity_defect()) <= tol:
        r = np.sqrt((2 * f - 1) ** 2 + 4 * np.abs(p) ** 2)
        drift = float(np.max(np.abs(r - 1.0)))
        if drift > tol:
            raise InvariantViolation(f"Bloch vector norm drifted by {drift:.3e}")
    # smallest eigenvalue of the density matrix
    lam = 0.5 - np.sqrt(0.25 - defect.clip(max=0.25))
    if np.min(lam) < -max(tol, 1e-9) or np.min(f) < -tol or np.max(f) > 1 + tol:
        raise InvariantViolation(f"positivity lost (min eigenvalue {np.min(lam):.3e})")


def delta_rotation(area, phase=0.0):
    """2x2 unitary of an instantaneous pulse with the given area.

    Equivalent to integrating a resonant drive Omega = A exp(-i phase)
    delta(t - t0).
    """
    c = math.cos(0.5 * area)
    s = math.sin(0.5 * area)
    e = complex(math.cos(phase), -math.sin(phase))
    # basis (|g>, |x>); generator (Omega |x><g| + h.c.)/2
    return np.array([[c, 1j * s * np.conj(e)], [1j * s * e, c]])


def apply_unitary(state, u):
    """Apply a 2x2 unitary to a BlochState or DensityMatrix."""
    rho = DensityMatrix.from_bloch(state) if isinstance(state, BlochState) else state
    m = rho.matrix()
    r = u @ m @ u.conj().T
    out = DensityMatrix(float(r[0, 0].real), float(r[1, 1].real), complex(r[1, 0]))
    return out.to_bloch() if isinstance(state, BlochState) else out
