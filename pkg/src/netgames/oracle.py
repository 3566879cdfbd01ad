"""Centralized ground-truth solvers, used only to validate distributed runs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import games
from .errors import NoFixedPointFound, Stalled
from .qp import kkt_residual_box


@dataclass
class OracleSolution:
    x: np.ndarray
    residual: float
    iterations: int
    method: str
    certified: bool
    lam: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "CERTIFIED" if self.certified else "UNCERTIFIED"


def _stacked_bounds(instance):
    lo = np.concatenate([b.lower for b in instance.boxes])
    hi = np.concatenate([b.upper for b in instance.boxes])
    return lo, hi


def kkt_residual_vi(instance, x) -> float:
    """Projected-gradient fixed-point residual of the variational inequality."""
    lo, hi = _stacked_bounds(instance)
    g = games.pseudogradient(instance, x)
    return kkt_residual_box(x, g, lo, hi)


def _affine_vi_activeset(M, u, lo, hi, max_rounds=200, tol=1e-12):
    """Active-set Newton for the affine VI over a box (heuristic, certified later).

    Guesses which coordinates sit at a bound, solves the reduced linear
    system for the free ones, and repeats until the complementarity pattern
    is self-consistent.  Returns the iterate and its KKT residual.
    """
    n = u.size
    x = np.clip(np.linalg.solve(M, -u), lo, hi)
    best, best_res = x, np.inf
    for _ in range(max_rounds):
        g = M @ x + u
        res = kkt_residual_box(x, g, lo, hi)
        if res < best_res:
            best, best_res = x.copy(), res
        if res < tol:
            break
        at_lo = (x <= lo + 1e-12) & (g > 0)
        at_hi = (x >= hi - 1e-12) & (g < 0)
        free = ~(at_lo | at_hi)
        xn = x.copy()
        xn[at_lo & ~free] = lo[at_lo & ~free]
        xn[at_hi & ~free] = hi[at_hi & ~free]
        if free.any():
            idx = np.flatnonzero(free)
            rhs = -(u[idx] + M[np.ix_(idx, ~free)] @ xn[~free])
            xn[idx] = np.linalg.solve(M[np.ix_(idx, idx)], rhs)
        xn = np.clip(xn, lo, hi)
        if np.array_equal(xn, x):
            break
        x = xn
    return best, best_res


def solve_vi_centralized(instance, tol=1e-10, max_iter=2_000_000) -> OracleSolution:
    """Certified solve of the strongly monotone affine VI over the box.

    A fast active-set pass is tried first; if its projected-gradient
    residual does not certify, the contraction iteration with step
    eta/theta1^2 finishes the job.  The certificate is always the residual
    at the returned point.
    """
    from .topology import build_structural_maps
    maps = build_structural_maps(instance.topology, instance.layout)
    cert = games.monotonicity_certificate(instance, maps)
    lo, hi = _stacked_bounds(instance)
    M, u = games._pseudo_affine(instance)

    x, res = _affine_vi_activeset(M, u, lo, hi, tol=0.01 * tol)
    it = 0
    if res >= tol:
        alpha = cert.eta / cert.theta1 ** 2
        for it in range(max_iter):
            g = M @ x + u
            xn = np.clip(x - alpha * g, lo, hi)
            if np.max(np.abs(xn - x)) < 0.1 * tol * alpha:
                x = xn
                break
            x = xn
        else:
            raise Stalled("centralized VI solver exhausted its budget")
    res = kkt_residual_vi(instance, x)
    return OracleSolution(x, res, it + 1, "active_set+projected_gradient",
                          res < 100 * tol)


def _objective_on_grid(instance, i, pts, x_plus):
    """Expected objective of player i at every row of ``pts`` (vectorized)."""
    s = instance.aggregate(i, x_plus, xi=0.0)
    if instance.variant == games.SCALAR_LQ:
        x = pts[:, 0]
        return 0.5 * x * x + (s - float(instance.lq_a[i])) * x
    hx = pts @ instance.H[i]
    quad = np.einsum("gi,ij,gj->g", pts, instance.Q[i], pts)
    return (quad + pts @ instance.q[i]
            + 0.5 * instance.degree(i) * hx * hx - (instance.b0 + s) * hx)


def best_response_bruteforce(instance, grid_step=1e-3, max_rounds=10_000) -> OracleSolution:
    """Grid-restricted best-response iteration for tiny games (total dim <= 4).

    Certifies an epsilon-equilibrium by exhaustive deviation scan at the
    fixed point; epsilon is bounded by the payoff Lipschitz modulus times
    the grid step.
    """
    topo = instance.topology
    dims = topo.decision_dims
    if sum(dims) > 4:
        raise NoFixedPointFound("brute-force oracle limited to total dimension 4")
    grids = []
    for i in range(topo.player_count):
        axes = [np.arange(instance.boxes[i].lower[c], instance.boxes[i].upper[c] + grid_step / 2,
                          grid_step) for c in range(dims[i])]
        pts = np.array(list(itertools.product(*axes)))
        grids.append(pts)

    offs = np.cumsum([0] + list(dims))

    def x_plus_of(x, i):
        return np.concatenate([x[offs[j]:offs[j + 1]] for j in topo.in_neighbors[i]]) \
            if topo.in_neighbors[i] else np.empty(0)

    def best_reply(x, i):
        vals = _objective_on_grid(instance, i, grids[i], x_plus_of(x, i))
        return grids[i][int(np.argmin(vals))]

    x = np.concatenate([instance.boxes[i].center for i in range(topo.player_count)])
    for rounds in range(max_rounds):
        x_new = x.copy()
        for i in range(topo.player_count):
            x_new[offs[i]:offs[i + 1]] = best_reply(x, i)
        # movement of at most one grid cell is below the grid's resolution
        # (the true fixed point need not be a grid point, so the map can
        # two-cycle between adjacent cells forever)
        if np.max(np.abs(x_new - x)) <= grid_step * (1 + 1e-9):
            x = x_new
            break
        x = x_new
    else:
        raise NoFixedPointFound("best-response cycle did not settle on the grid")

    # deviation scan: no grid point improves any player beyond the grid bound
    eps = 0.0
    for i in range(topo.player_count):
        xp = x_plus_of(x, i)
        here = games.expected_objective(instance, i, x[offs[i]:offs[i + 1]], xp)
        best = float(_objective_on_grid(instance, i, grids[i], xp).min())
        eps = max(eps, here - best)
    return OracleSolution(x, eps, rounds + 1, "best_response_grid", True,
                          extra={"grid_step": grid_step, "epsilon": eps})


def gnep_kkt_residual(instance, coupling, x, lam) -> dict:
    """Residual components of the shared-multiplier KKT system."""
    lo, hi = _stacked_bounds(instance)
    A = coupling.stacked_A(instance.topology)
    c = coupling.total_budget
    g = games.pseudogradient(instance, x) + A.T @ lam
    stat = kkt_residual_box(x, g, lo, hi)
    slack = c - A @ x
    primal = float(np.max(np.maximum(0.0, -slack), initial=0.0))
    comp = float(abs(lam @ slack))
    dual = float(np.max(np.maximum(0.0, -lam), initial=0.0))
    return {"stationarity": stat, "primal": primal,
            "complementarity": comp, "dual": dual}


def gnep_kkt_oracle(instance, coupling, tol=1e-11, max_iter=200_000) -> OracleSolution:
    """Nested solve of the primal-dual KKT inclusion (variational GNE).

    For a fixed shared multiplier the inner problem is a strongly monotone
    affine VI over the box, solved by contraction; the outer loop runs
    projected gradient ascent on the concave dual, ``lam <- [lam + t (A x(lam) - c)]_+``.
    """
    lo, hi = _stacked_bounds(instance)
    A = coupling.stacked_A(instance.topology)
    c = coupling.total_budget
    M, u = games._pseudo_affine(instance)
    sym = 0.5 * (M + M.T)
    eta = float(np.linalg.eigvalsh(sym).min())
    theta = float(np.linalg.svd(M, compute_uv=False).max())
    alpha = eta / theta ** 2
    t_outer = eta / max(1e-30, np.linalg.norm(A, 2) ** 2)

    def x_of(lam, x_start):
        x = x_start
        shift = u + A.T @ lam
        for _ in range(max_iter):
            xn = np.clip(x - alpha * (M @ x + shift), lo, hi)
            if np.max(np.abs(xn - x)) < 0.01 * tol:
                return xn
            x = xn
        raise Stalled("GNEP oracle inner VI stalled")

    lam = np.zeros(A.shape[0])
    x = np.clip(np.zeros(lo.size), lo, hi)
    for it in range(max_iter):
        x = x_of(lam, x)
        lam_n = np.maximum(0.0, lam + t_outer * (A @ x - c))
        if np.max(np.abs(lam_n - lam)) < tol:
            lam = lam_n
            break
        lam = lam_n
    else:
        raise Stalled("GNEP oracle exhausted its budget")
    x = x_of(lam, x)
    rep = gnep_kkt_residual(instance, coupling, x, lam)
    worst = max(rep.values())
    return OracleSolution(x, worst, it + 1, "extragradient", worst < 1e-7,
                          lam=lam, extra=rep)
