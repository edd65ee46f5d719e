"""Independent 1D reference solver for plane-wave propagation tests.

Models a vertical line: rigid wall at the bottom end, flux source (then
absorbing) at the top end, written directly from the ghost-node form of the
standard second-order scheme. Kept deliberately separate from the package
implementation it cross-checks.
"""

import numpy as np


def solve_line(y_lo, y_hi, h, tau, n_steps, omega, t1, amplitude=1.0):
    """Returns (history (n_steps+1, J+1), y coordinates)."""
    J = int(round((y_hi - y_lo) / h))
    kap = (tau / h) ** 2
    r = tau / h
    duration = 2.0 * np.pi / omega

    def flux(t):
        return amplitude * np.sin(omega * t) if 0.0 < t < duration else 0.0

    u_prev = np.zeros(J + 1)
    u = np.zeros(J + 1)
    hist = [u.copy()]

    # first step from rest
    un = np.empty(J + 1)
    un[1:J] = u[1:J] + 0.5 * kap * (u[2:] - 2 * u[1:J] + u[: J - 1])
    un[0] = u[0] + kap * (u[1] - u[0])
    un[J] = u[J] + kap * (u[J - 1] - u[J]) + kap * h * flux(0.0)
    u_prev, u = u, un.copy()
    hist.append(u.copy())

    for n in range(1, n_steps):
        t = n * tau
        g = flux(t)
        a = 0.0 if t <= t1 + 1e-15 else 1.0
        un = np.empty(J + 1)
        un[1:J] = 2 * u[1:J] - u_prev[1:J] + kap * (u[2:] - 2 * u[1:J] + u[: J - 1])
        un[0] = 2 * u[0] - u_prev[0] + 2 * kap * (u[1] - u[0])
        un[J] = (
            2 * u[J] - u_prev[J] + 2 * kap * (u[J - 1] - u[J])
            + 2 * kap * h * g + a * r * u_prev[J]
        ) / (1 + a * r)
        u_prev, u = u, un.copy()
        hist.append(u.copy())

    return np.asarray(hist), y_lo + np.arange(J + 1) * h
