"""Compiled inner loops: drive evaluation, RK4 propagation, step matrices.

Drives are passed to the kernels as a component table (one row per
component, ``N_COLS`` columns, see ``pulses.Component``) so that a single
compiled routine serves every pulse family. A component contributes

    env(t) * exp(-1j * theta(t))

with a Gaussian or rectangular envelope ``env`` and the closed-form phase

    theta(t) = delta*(t - t_ref) + phase0 - (delta_m/omega_m)*(cos(omega_m*(t - t_ref)) - 1).
"""

import math

import numba
import numpy as np

GAUSSIAN = 0
RECTANGULAR = 1

# component table columns
KIND, AMP, A, B, DELTA, T_REF, PHASE0, DELTA_M, OMEGA_M, CLOSED_END = range(10)
N_COLS = 10

_jit = numba.njit(cache=True, nogil=True, fastmath=False)


@_jit
def _phase(c, t):
    s = t - c[T_REF]
    theta = c[DELTA] * s + c[PHASE0]
    wm = c[OMEGA_M]
    if wm != 0.0:
        theta -= c[DELTA_M] / wm * (math.cos(wm * s) - 1.0)
    return theta


@_jit
def _envelope(c, t):
    if c[KIND] == GAUSSIAN:
        x = (t - c[A]) / c[B]
        return c[AMP] * math.exp(-0.5 * x * x)
    if t < c[A] or t > c[B]:
        return 0.0
    if t == c[B] and c[CLOSED_END] == 0.0:
        return 0.0
    return c[AMP]


@_jit
def drive_at(comps, t):
    re = 0.0
    im = 0.0
    for k in range(comps.shape[0]):
        c = comps[k]
        env = _envelope(c, t)
        if env != 0.0:
            th = _phase(c, t)
            re += env * math.cos(th)
            im -= env * math.sin(th)
    return complex(re, im)


@_jit
def drive_samples(comps, ts):
    out = np.empty(ts.shape[0], dtype=np.complex128)
    for i in range(ts.shape[0]):
        out[i] = drive_at(comps, ts[i])
    return out


RESYNC = 256


@_jit
def fill_drive(comps, t0, dt, m):
    """Drive samples at ``t0 + j*dt`` for ``j < m``.

    Gaussian envelopes and linear carriers advance by multiplicative
    recurrences, re-seeded from the exact closed form every ``RESYNC``
    samples; relative drift stays at the 1e-13 level.
    """
    out = np.zeros(m, dtype=np.complex128)
    for k in range(comps.shape[0]):
        c = comps[k]
        gauss = c[KIND] == GAUSSIAN
        wm = c[OMEGA_M]
        beta = c[DELTA_M] / wm if wm != 0.0 else 0.0
        rot_carrier = complex(math.cos(c[DELTA] * dt), -math.sin(c[DELTA] * dt))
        rot_mod = complex(math.cos(wm * dt), math.sin(wm * dt))
        d = dt / c[B] if gauss else 0.0
        shrink = math.exp(-d * d)
        for j0 in range(0, m, RESYNC):
            t = t0 + j0 * dt
            s = t - c[T_REF]
            th = c[DELTA] * s + c[PHASE0]
            carrier = complex(math.cos(th), -math.sin(th))
            mod = complex(math.cos(wm * s), math.sin(wm * s))
            if gauss:
                x = (t - c[A]) / c[B]
                env = c[AMP] * math.exp(-0.5 * x * x)
                ratio = math.exp(-x * d - 0.5 * d * d)
            else:
                env = 0.0
                ratio = 1.0
            for j in range(j0, min(j0 + RESYNC, m)):
                if gauss:
                    e = env
                else:
                    e = _envelope(c, t0 + j * dt)
                if e != 0.0:
                    val = e * carrier
                    if wm != 0.0:
                        u = beta * (mod.real - 1.0)
                        val *= complex(math.cos(u), math.sin(u))
                    out[j] += val
                carrier *= rot_carrier
                mod *= rot_mod
                if gauss:
                    env *= ratio
                    ratio *= shrink
    return out


@_jit
def rk4_bloch(w, h, n_steps, gamma, f0, p0, stride):
    """Fixed-step RK4 for the (f, p) equations on pre-sampled drive ``w``.

    ``w`` holds the drive on the half-step grid (``2*n_steps + 1`` values).
    Returns (step index, f, p) every ``stride`` steps; the final state is
    always the last row.
    """
    n_out = n_steps // stride + 1
    if n_steps % stride != 0:
        n_out += 1
    idx = np.empty(n_out, dtype=np.int64)
    fs = np.empty(n_out)
    ps = np.empty(n_out, dtype=np.complex128)
    f = f0
    pr = p0.real
    pi = p0.imag
    g = gamma
    idx[0] = 0
    fs[0] = f
    ps[0] = p0
    j = 1
    for n in range(n_steps):
        ar = w[2 * n].real
        ai = w[2 * n].imag
        mr = w[2 * n + 1].real
        mi = w[2 * n + 1].imag
        br = w[2 * n + 2].real
        bi = w[2 * n + 2].imag
        # df = Im(conj(om) p) - g f ;  dp = (i/2) om (1 - 2f) - (g/2) p
        q = 1.0 - 2.0 * f
        k1f = ar * pi - ai * pr - g * f
        k1r = -0.5 * ai * q - 0.5 * g * pr
        k1i = 0.5 * ar * q - 0.5 * g * pi
        f2 = f + 0.5 * h * k1f
        r2 = pr + 0.5 * h * k1r
        i2 = pi + 0.5 * h * k1i
        q = 1.0 - 2.0 * f2
        k2f = mr * i2 - mi * r2 - g * f2
        k2r = -0.5 * mi * q - 0.5 * g * r2
        k2i = 0.5 * mr * q - 0.5 * g * i2
        f3 = f + 0.5 * h * k2f
        r3 = pr + 0.5 * h * k2r
        i3 = pi + 0.5 * h * k2i
        q = 1.0 - 2.0 * f3
        k3f = mr * i3 - mi * r3 - g * f3
        k3r = -0.5 * mi * q - 0.5 * g * r3
        k3i = 0.5 * mr * q - 0.5 * g * i3
        f4 = f + h * k3f
        r4 = pr + h * k3r
        i4 = pi + h * k3i
        q = 1.0 - 2.0 * f4
        k4f = br * i4 - bi * r4 - g * f4
        k4r = -0.5 * bi * q - 0.5 * g * r4
        k4i = 0.5 * br * q - 0.5 * g * i4
        f += h / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        pr += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        pi += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            idx[j] = n + 1
            fs[j] = f
            ps[j] = complex(pr, pi)
            j += 1
    return idx[:j], fs[:j], ps[:j]


# --- superoperator form ---------------------------------------------------
# Operators X are vectorised as (X_gg, X_gx, X_xg, X_xx) with X_ab = <a|X|b>.
# For a density matrix the Bloch coherence p equals X_xg and f equals X_xx.


@_jit
def liouvillian(om, gamma):
    h01 = -0.5 * np.conj(om)
    h10 = -0.5 * om
    L = np.zeros((4, 4), dtype=np.complex128)
    L[0, 1] = 1j * h10
    L[0, 2] = -1j * h01
    L[0, 3] = gamma
    L[1, 0] = 1j * h01
    L[1, 1] = -0.5 * gamma
    L[1, 3] = -1j * h01
    L[2, 0] = -1j * h10
    L[2, 2] = -0.5 * gamma
    L[2, 3] = 1j * h10
    L[3, 1] = -1j * h10
    L[3, 2] = 1j * h01
    L[3, 3] = -gamma
    return L


@_jit
def rk4_step_matrices(w, h, n_steps, gamma):
    """RK4 one-step propagators ``M[n]`` mapping X(t_n) to X(t_{n+1})."""
    out = np.empty((n_steps, 4, 4), dtype=np.complex128)
    eye = np.eye(4, dtype=np.complex128)
    La = liouvillian(w[0], gamma)
    for n in range(n_steps):
        Lm = liouvillian(w[2 * n + 1], gamma)
        Lb = liouvillian(w[2 * n + 2], gamma)
        K1 = La
        K2 = Lm @ (eye + 0.5 * h * K1)
        K3 = Lm @ (eye + 0.5 * h * K2)
        K4 = Lb @ (eye + h * K3)
        out[n] = eye + h / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        La = Lb
    return out


@_jit
def forward_states(mats, x0):
    n = mats.shape[0]
    out = np.empty((n + 1, 4), dtype=np.complex128)
    out[0] = x0
    for i in range(n):
        out[i + 1] = mats[i] @ out[i]
    return out


@_jit
def product(mats):
    """Ordered product ``M[n-1] @ ... @ M[0]``."""
    acc = np.eye(4, dtype=np.complex128)
    for i in range(mats.shape[0]):
        acc = mats[i] @ acc
    return acc


@_jit
def backward_linear(mats, steps, ell, tail_row, tail_weight):
    """Row vectors ``S[i]`` with ``S[i] @ x`` = quadrature of ``ell @ X(s)``.

    The quadrature runs over s from t_i to the window end (trapezoid on
    the step grid) and adds ``tail_weight * tail_row @ X(t_end)`` for the
    closed-form part after the window. Also returns ``R[i]``, the row
    ``tail_row`` pulled back to t_i.
    """
    n = mats.shape[0]
    S = np.empty((n + 1, 4), dtype=np.complex128)
    R = np.empty((n + 1, 4), dtype=np.complex128)
    S[n] = tail_weight * tail_row
    R[n] = tail_row
    for i in range(n - 1, -1, -1):
        M = mats[i]
        S[i] = 0.5 * steps[i] * (ell + ell @ M) + S[i + 1] @ M
        R[i] = R[i + 1] @ M
    return S, R


@_jit
def pullback_rows(mats, row):
    n = mats.shape[0]
    R = np.empty((n + 1, 4), dtype=np.complex128)
    R[n] = row
    for i in range(n - 1, -1, -1):
        R[i] = R[i + 1] @ mats[i]
    return R


@_jit
def backward_quadratic(mats, steps, proj, tail_weight):
    """Hermitian forms ``G[i]`` with ``x^H G[i] x`` = quadrature of |ell X(s)|^2.

    ``proj`` is ell^H ell. Same grid and tail convention as backward_linear.
    """
    n = mats.shape[0]
    G = np.empty((n + 1, 4, 4), dtype=np.complex128)
    G[n] = tail_weight * proj
    for i in range(n - 1, -1, -1):
        M = mats[i]
        MH = np.conj(M.T)
        G[i] = 0.5 * steps[i] * (proj + MH @ proj @ M) + MH @ G[i + 1] @ M
    return G


@_jit
def pullback_forms(mats, form):
    n = mats.shape[0]
    G = np.empty((n + 1, 4, 4), dtype=np.complex128)
    G[n] = form
    for i in range(n - 1, -1, -1):
        M = mats[i]
        G[i] = np.conj(M.T) @ G[i + 1] @ M
    return G


@_jit
def states_at(mats, i0, x0, targets):
    """Propagate x0 from grid index i0 and record it at sorted ``targets``."""
    out = np.empty((targets.shape[0], 4), dtype=np.complex128)
    x = x0.copy()
    i = i0
    for k in range(targets.shape[0]):
        j = targets[k]
        while i < j:
            x = mats[i] @ x
            i += 1
        out[k] = x
    return out


@_jit
def apply_range(mats, i, j, x0):
    x = x0.copy()
    for k in range(i, j):
        x = mats[k] @ x
    return x
