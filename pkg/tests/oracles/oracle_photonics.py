"""Brute-force figures of merit for a short pulse train.

Independent of the package: the Lindblad equation is written out as a
4x4 complex linear system and integrated with scipy's DOP853. All
correlation integrals are carried as extra ODE components, the outer
time integral uses composite Gauss-Legendre quadrature. Prints the
values frozen in test_photonics.py.

Run: python tests/oracles/oracle_photonics.py
"""

import math

import numpy as np
from scipy.integrate import solve_ivp

GAMMA = 0.05  # 1/ps
T = 200.0  # ps
CASES = {
    "resonant_pi": dict(alpha=math.pi, sigma=1.0, delta=0.0),
    "detuned_3pi": dict(alpha=3 * math.pi, sigma=1.0, delta=0.8),
}
HALF = 8.0  # window half width in sigma


def drive(t, c):
    # pulse centred at 0 of every period; t in [-T/2, T/2) after wrapping
    s = (t + T / 2) % T - T / 2
    env = c["alpha"] / (math.sqrt(2 * math.pi) * c["sigma"]) * math.exp(-0.5 * (s / c["sigma"]) ** 2)
    return env * np.exp(-1j * c["delta"] * s)


def rhs_rho(t, x, c):
    # x = (rho_gg, rho_gx, rho_xg, rho_xx) with rho_xg = p;
    # H = (Om |x><g| + h.c.)/2, L = |g><x|
    om = drive(t, c)
    oc = np.conj(om)
    gg, gx, xg, xx = x
    # -i [H, rho] + gamma (L rho L^+ - {L^+ L, rho}/2)
    return np.array([
        -0.5j * (oc * xg - gx * om) + GAMMA * xx,
        -0.5j * (oc * xx - gg * oc) - 0.5 * GAMMA * gx,
        -0.5j * (om * gg - xx * om) - 0.5 * GAMMA * xg,
        -0.5j * (om * gx - xg * oc) - GAMMA * xx,
    ])


def segments(t0, t1, c):
    """Split [t0, t1] at pulse window edges; max step inside windows."""
    w = HALF * c["sigma"]
    edges = [t0]
    k0 = math.floor((t0 + T / 2) / T) - 1
    for k in range(k0, k0 + 4):
        for e in (k * T - w, k * T + w):
            if t0 < e < t1:
                edges.append(e)
    edges.append(t1)
    edges = sorted(edges)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        s = (mid + T / 2) % T - T / 2
        out.append((a, b, 0.05 if abs(s) < w else np.inf))
    return out


def integrate(fun, y, t0, t1, c):
    for a, b, hmax in segments(t0, t1, c):
        sol = solve_ivp(fun, (a, b), y, method="DOP853", rtol=1e-11, atol=1e-13, max_step=hmax)
        y = sol.y[:, -1]
    return y


def steady_state(c):
    a = -HALF * c["sigma"]
    f = lambda t, x: rhs_rho(t, x, c)
    x = np.array([1, 0, 0, 0], dtype=complex)
    for _ in range(6):
        x = integrate(f, x, a, a + T, c)
    return x


def gauss_nodes(a, b, n_panels, order):
    z, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (hi - lo) * z + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(ts), np.concatenate(ws)


def figures(c):
    a = -HALF * c["sigma"]
    b = -a
    x0 = steady_state(c)
    f = lambda t, x: rhs_rho(t, x, c)
    t_win, w_win = gauss_nodes(a, b, 8, 12)
    t_tail, w_tail = gauss_nodes(b, a + T, 6, 12)
    ts = np.concatenate([t_win, t_tail])
    ws = np.concatenate([w_win, w_tail])

    # states at the outer nodes and the photon count
    states = []
    count = 0.0
    x, tprev = x0, a
    aug = lambda t, y: np.concatenate([rhs_rho(t, y[:4], c), [y[3].real]])
    y = np.concatenate([x0, [0.0]])
    for t in ts:
        y = integrate(aug, y, tprev, t, c)
        states.append(y[:4].copy())
        tprev = t
    y = integrate(aug, y, tprev, a + T, c)
    count = y[4].real

    def joint(t, y):
        # rho(t+tau), conditional (ground), lowered coherence, integrals
        r, g, s = y[0:4], y[4:8], y[8:12]
        return np.concatenate([rhs_rho(t, r, c), rhs_rho(t, g, c), rhs_rho(t, s, c),
                               [states_now[3].real * g[3].real, abs(s[1]) ** 2,
                                states_now[3].real * r[3].real]])

    acc = {k: 0.0 for k in ("g2c", "g2s", "g1c", "g1s", "ppc", "pps")}
    for t, wt, x in zip(ts, ws, states):
        states_now = x
        ground = np.array([1, 0, 0, 0], dtype=complex)
        lowered = np.array([x[2], x[3], 0, 0], dtype=complex)
        y = np.concatenate([x, ground, lowered, [0, 0, 0]]).astype(complex)
        y1 = integrate(joint, y, t, a + T, c)
        y2 = integrate(joint, y1, a + T, a + 2 * T, c)
        # same-bin pairs: tau in [0, a+T-t); next bin: tau in [a+T-t, a+2T-t)
        acc["g2c"] += wt * y1[12].real
        acc["g1c"] += wt * y1[13].real
        acc["ppc"] += wt * y1[14].real
        acc["g2s"] += wt * (y2[12] - y1[12]).real
        acc["g1s"] += wt * (y2[13] - y1[13]).real
        acc["pps"] += wt * (y2[14] - y1[14]).real
    # the zero-delay peak holds both orderings of a same-bin pair
    purity = 1 - 2 * acc["g2c"] / acc["g2s"]
    hom_c = (acc["ppc"] - acc["g1c"] + acc["g2c"])
    hom_s = 0.5 * (acc["pps"] - acc["g1s"] + acc["g2s"])
    e = math.exp(-GAMMA * T)
    output = GAMMA * count / ((1 - e) / (1 + e))
    return purity, 1 - hom_c / hom_s, output


if __name__ == "__main__":
    for name, c in CASES.items():
        print(name, *(f"{v:.12f}" for v in figures(c)))
