"""Final occupations from an independent Bloch-equation solve.

The drives are written out from their closed forms and the equations
df/dt = Im(conj(Om) p) and dp/dt = (i/2) Om (1 - 2f) are integrated with
scipy's DOP853 at tight tolerance. Prints values frozen in the tests.

Run: python tests/oracles/oracle_bloch.py
"""

import math

import numpy as np
from scipy.integrate import solve_ivp

HBAR = 0.6582119569
PI = math.pi


def gauss(alpha, sigma, t, c=0.0):
    return alpha / (math.sqrt(2 * PI) * sigma) * np.exp(-0.5 * ((t - c) / sigma) ** 2)


def two_color(a1, s1, d1, a2, s2, d2, tau, phi=0.0):
    d1, d2 = d1 / HBAR, d2 / HBAR
    return lambda t: gauss(a1, s1, t) * np.exp(-1j * d1 * t) + gauss(a2, s2, t, tau) * np.exp(-1j * (d2 * t - phi))


def fm(alpha, sigma, dc, dm, wm):
    dc, dm, wm = dc / HBAR, dm / HBAR, wm / HBAR
    return lambda t: gauss(alpha, sigma, t) * np.exp(-1j * (dc * t - dm / wm * (np.cos(wm * t) - 1)))


def final_f(drive, t0, t1):
    def rhs(t, y):
        f, p = y[0], y[1] + 1j * y[2]
        om = drive(t)
        df = (np.conj(om) * p).imag
        dp = 0.5j * om * (1 - 2 * f)
        return [df, dp.real, dp.imag]

    sol = solve_ivp(rhs, (t0, t1), [0.0, 0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14,
                    max_step=0.01)
    return sol.y[0, -1]


CASES = {
    "two_color_row4": (two_color(22.65 * PI, 2.4, -8, 19.29 * PI, 3.04, -19.163, -0.73),
                       -24.32, 24.32),
    "fm_a": (fm(6.2 * PI, 4.0, -6, 2, 6.08), -32, 32),
    "fm_b": (fm(30.3 * PI, 4.0, -6, 1, 8.32), -32, 32),
}

if __name__ == "__main__":
    for name, (d, a, b) in CASES.items():
        print(name, f"{final_f(d, a, b):.12f}")
