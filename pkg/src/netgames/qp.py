"""Small dense solvers for box-constrained quadratic subproblems.

Everything here operates on problems of a few (at most a few dozen)
variables; dense numpy linear algebra is the right tool.
"""

from __future__ import annotations

import numpy as np

from .errors import InnerSolveFailed

_ACTIVE_EPS = 1e-12


def kkt_residual_box(x, g, lo, hi) -> float:
    """Inf-norm of the projected-gradient fixed-point residual on a box."""
    return float(np.max(np.abs(x - np.clip(x - g, lo, hi))))


def box_qp(A, b, lo, hi, x0=None, tol=1e-10, max_iter=100, lipschitz=None):
    """Minimize 1/2 x'Ax + b'x over a box, A symmetric positive definite.

    Projected-Newton active-set iteration with a projected-gradient fallback
    whenever the Newton step fails to reduce the KKT residual.  Raises
    :class:`InnerSolveFailed` if the iteration cap is exhausted.
    """
    n = b.size
    if x0 is None:
        x = np.clip(np.linalg.solve(A, -b), lo, hi)
    else:
        x = np.clip(np.asarray(x0, dtype=float), lo, hi)

    L = lipschitz
    g = A @ x + b
    res = kkt_residual_box(x, g, lo, hi)
    for _ in range(max_iter):
        if res < tol:
            return x
        at_lo = (x <= lo + _ACTIVE_EPS) & (g > 0)
        at_hi = (x >= hi - _ACTIVE_EPS) & (g < 0)
        free = ~(at_lo | at_hi)
        if free.any():
            xn = x.copy()
            if free.all():
                xn = np.linalg.solve(A, -b)
            else:
                idx = np.flatnonzero(free)
                rhs = -(b[idx] + A[np.ix_(idx, ~free)] @ x[~free])
                xn[idx] = np.linalg.solve(A[np.ix_(idx, idx)], rhs)
            xn = np.clip(xn, lo, hi)
            gn = A @ xn + b
            rn = kkt_residual_box(xn, gn, lo, hi)
            if rn < res:
                x, g, res = xn, gn, rn
                continue
        # fallback: a block of projected gradient steps breaks active-set cycling
        if L is None:
            L = float(np.linalg.eigvalsh(A).max())
        for _ in range(50):
            x = np.clip(x - g / L, lo, hi)
            g = A @ x + b
            rn = kkt_residual_box(x, g, lo, hi)
            if rn < 0.5 * res or rn < tol:
                break
        res = rn
    if res < tol:
        return x
    raise InnerSolveFailed(f"box QP stalled at KKT residual {res:.3g}")


def projected_gradient_qp(G, m, lo, hi, x0, tol=1e-10, max_iter=10_000,
                          lipschitz=None):
    """Minimize 1/2 x'Gx - m'x over a box by projected gradient.

    G may be rank deficient (PSD).  Returns ``(x, converged, iterations)``;
    never raises — the caller decides how to treat non-convergence.
    """
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh(G).max())
    if lipschitz <= 0:
        return np.clip(x0, lo, hi), True, 0
    step = 1.0 / lipschitz
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    for it in range(max_iter):
        g = G @ x - m
        xn = np.clip(x - step * g, lo, hi)
        if np.max(np.abs(xn - x)) < tol:
            return xn, True, it + 1
        x = xn
    return x, False, max_iter


def least_distance_affine(target, E, d, tol=1e-10, max_iter=20_000):
    """argmin 1/2 ||y - target||^2  subject to  E y <= d.

    Solved through the nonnegative dual (projected gradient on the
    multipliers); exact for consistent affine systems.
    """
    E = np.asarray(E, dtype=float)
    d = np.asarray(d, dtype=float)
    if E.size == 0 or np.all(E @ target <= d + tol):
        return np.asarray(target, dtype=float).copy()
    EET = E @ E.T
    L = float(np.linalg.eigvalsh(EET).max())
    lam = np.zeros(d.size)
    r0 = E @ target - d
    for _ in range(max_iter):
        # dual gradient of -g(lam) is  E(target - E'lam) - d
        grad = r0 - EET @ lam
        lam_n = np.maximum(0.0, lam + grad / L)
        if np.max(np.abs(lam_n - lam)) < tol:
            lam = lam_n
            break
        lam = lam_n
    else:
        raise InnerSolveFailed("least-distance dual iteration stalled")
    return target - E.T @ lam
