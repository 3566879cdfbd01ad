"""Online parameter learning from bandit payoff feedback.

Each round every player perturbs its pivot decision with a bounded
zero-mean exploration draw, pulled back into the feasible box by the
safe-net adjustment

    ``played = (1 - dbar/r) * pivot + (dbar/r) * (p + (r/dbar) delta)``,

observes its realized payoff, inverts it to the realized aggregate ``s``,
and refits the box-constrained least-squares estimate of its aggregate
parameters from running Gram/moment accumulators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (InsufficientHistory, NotInvertibleHere, PivotInfeasible)
from .games import payoff_invert
from .qp import projected_gradient_qp

OLSE_TOL = 1e-10
OLSE_CAP = 10_000


@dataclass
class ExplorationConfig:
    """Per-player exploration geometry: interior base point, radius, scales."""

    base_points: list      # p_i
    radii: list            # r_i, ball B_r(p) inside the box
    coord_scales: list     # per-coordinate half-range delta_i of the uniform draw
    bounds: list           # dbar_i >= ||delta||_2 always

    @classmethod
    def from_instance(cls, instance, scale_rule="paper", explicit_scales=None):
        """Default geometry: box centers, half of the smallest half-width.

        The "paper" scale rule sets the per-coordinate half-range to
        ``0.01/(2 sqrt(n_i)) * min_j upper_ij`` so the Euclidean norm of a
        draw never exceeds one half-percent of the smallest box bound.
        """
        ps, rs, scales, bounds = [], [], [], []
        for i, box in enumerate(instance.boxes):
            n = box.dim
            ps.append(box.center)
            r = 0.5 * float(box.half_width.min())
            rs.append(r)
            if scale_rule == "paper":
                d = 0.01 / (2.0 * np.sqrt(n)) * float(np.abs(box.upper).min())
            else:
                d = float(explicit_scales[i])
            scales.append(d)
            dbar = d * np.sqrt(n)
            if dbar >= r:
                raise PivotInfeasible(
                    f"player {i}: exploration bound {dbar:.3g} not below radius {r:.3g}")
            bounds.append(dbar)
        return cls(ps, rs, scales, bounds)

    def covariance_min_eig(self, i) -> float:
        """Smallest eigenvalue of the exploration covariance (uniform per coordinate)."""
        return self.coord_scales[i] ** 2 / 3.0


def draw_exploration(config, rng, i) -> np.ndarray:
    d = config.coord_scales[i]
    n = config.base_points[i].size
    return rng.uniform(-d, d, size=n)


def safe_net_adjust(y_pivot, delta, config, i, box=None) -> np.ndarray:
    """Feasibility-preserving exploration: shrink toward the interior ball."""
    y_pivot = np.asarray(y_pivot, dtype=float)
    if box is not None and not box.contains(y_pivot, tol=1e-9):
        raise PivotInfeasible(f"player {i}: pivot outside its box")
    t = config.bounds[i] / config.radii[i]
    played = (1.0 - t) * y_pivot + t * (config.base_points[i] + delta / t)
    if box is not None:
        # guard against floating-point dust at the box boundary
        played = box.project(played)
    return played


@dataclass
class PlayerLog:
    gram: np.ndarray
    moment: np.ndarray
    count: int = 0
    skips: int = 0
    raw: list = field(default_factory=list)  # kept only when record_raw is set


@dataclass
class RegressionLog:
    """Running least-squares accumulators, one block per player."""

    players: list
    record_raw: bool = False

    @classmethod
    def for_instance(cls, instance, record_raw=False):
        logs = []
        topo = instance.topology
        for i in range(topo.player_count):
            d = 1 + topo.n_plus(i)
            logs.append(PlayerLog(np.zeros((d, d)), np.zeros(d)))
        return cls(logs, record_raw)

    def add(self, i, regressor, s_value):
        log = self.players[i]
        log.gram += np.outer(regressor, regressor)
        log.moment += s_value * regressor
        log.count += 1
        if self.record_raw:
            log.raw.append((regressor.copy(), s_value))

    def skip(self, i):
        self.players[i].skips += 1


def record_observation(log, instance, i, played_self, played_neighbors, J_observed):
    """Invert the observed payoff and fold the sample into the accumulators.

    ``played_neighbors`` is the stacked vector of in-neighbor plays in
    ascending neighbor order.  Non-invertible rounds are counted as skips
    and leave the accumulators untouched.
    """
    try:
        s = payoff_invert(instance, i, played_self, J_observed)
    except NotInvertibleHere:
        log.skip(i)
        return False
    regressor = np.concatenate([[1.0], np.atleast_1d(played_neighbors)])
    log.add(i, regressor, s)
    return True


@dataclass
class ParameterBelief:
    w: np.ndarray
    previous: np.ndarray
    solver_converged: bool = True


def olse_solve(log_i, box, previous_estimate) -> ParameterBelief:
    """Box-constrained least squares from the accumulators.

    Minimizes ``1/2 w'Gw - m'w`` over the parameter box.  The solve first
    tries the range-space correction ``w_prev + G^+ (m - G w_prev)``
    (exact, and it pins unidentified directions at the previous estimate);
    if that point leaves the box, the factored problem is handed to an
    exact bounded-variable least-squares solve, with any flat (null-space)
    directions pulled back toward the previous estimate.  Projected
    gradient remains as the last-resort fallback.
    """
    prev = np.asarray(previous_estimate, dtype=float)
    if log_i.count == 0:
        return ParameterBelief(prev.copy(), prev.copy())
    G, m = log_i.gram, log_i.moment
    rhs = m - G @ prev
    chol = None
    try:
        chol = np.linalg.cholesky(G)
        import scipy.linalg
        corr = scipy.linalg.cho_solve((chol, True), rhs)
    except np.linalg.LinAlgError:
        corr, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    cand = prev + corr
    if box.contains(cand, tol=1e-12):
        return ParameterBelief(box.project(cand), prev.copy())
    w = _active_set_bounded(G, m, box, prev)
    if w is not None:
        return ParameterBelief(w, prev.copy())
    try:
        w = _bounded_lsq(G, m, box, prev)
        return ParameterBelief(w, prev.copy())
    except Exception:
        w, ok, _ = projected_gradient_qp(G, m, box.lower, box.upper, prev,
                                         tol=OLSE_TOL, max_iter=OLSE_CAP)
        return ParameterBelief(w, prev.copy(), solver_converged=ok)


def _active_set_bounded(G, m, box, prev, max_rounds=None):
    """Warm-started bounded-variable pass for the box quadratic.

    Classic primal active-set descent, seeded with the bound pattern of the
    previous estimate (which is usually already optimal): solve the reduced
    system on the free variables, ratio-test toward that point binding one
    blocking variable at a time, and release the single worst dual violator
    once the free minimizer is feasible.  Every move decreases the
    objective, so the pattern cannot thrash.  Reduced solves are for the
    correction away from the current point, which leaves unidentified
    (flat) directions at the previous estimate -- the tie-break.  Returns
    ``None`` on the rare degenerate cycle; the caller then falls back to
    the factored BVLS solver.
    """
    lo, hi = box.lower, box.upper
    n = lo.size
    if max_rounds is None:
        max_rounds = 10 * n + 20
    w = np.clip(np.asarray(prev, dtype=float), lo, hi)
    gtol = 1e-10 * (1.0 + float(np.abs(m).max(initial=0.0)))
    g = G @ w - m
    # start from the previous solution's bound pattern (dual-consistent part)
    free = ~(((w <= lo + 1e-12) & (g >= 0)) | ((w >= hi - 1e-12) & (g <= 0)))
    for _ in range(max_rounds):
        if free.any():
            idx = np.flatnonzero(free)
            Gff = G[np.ix_(idx, idx)]
            d, *_ = np.linalg.lstsq(Gff, m[idx] - G[idx] @ w, rcond=None)
            lo_gap = lo[idx] - w[idx]
            hi_gap = hi[idx] - w[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(d < 0, lo_gap / d, np.inf)
                t_hi = np.where(d > 0, hi_gap / d, np.inf)
            t_max = np.minimum(t_lo, t_hi)
            blocker = int(np.argmin(t_max))
            if t_max[blocker] < 1.0:
                w[idx] = np.clip(w[idx] + t_max[blocker] * d, lo[idx], hi[idx])
                j = idx[blocker]
                w[j] = lo[j] if d[blocker] < 0 else hi[j]
                free[j] = False
                continue
            w[idx] = np.clip(w[idx] + d, lo[idx], hi[idx])
        # free minimizer reached on the current pattern: check the duals
        g = G @ w - m
        viol = np.where((w <= lo + 1e-12) & ~free, -g,
                        np.where((w >= hi - 1e-12) & ~free, g, -np.inf))
        worst = int(np.argmax(viol))
        if viol[worst] <= gtol:
            return w
        free[worst] = True
    return None


def _bounded_lsq(G, m, box, prev) -> np.ndarray:
    """Exact minimizer of 1/2 w'Gw - m'w over the box via factored BVLS.

    ``G = V diag(e) V'`` with ``m`` in the range of ``G`` turns the
    quadratic into the least-squares problem ``||diag(sqrt(e)) V' w - c||``;
    null directions of ``G`` are flat, so the tie-break sets them from the
    previous estimate (clipped to the box).
    """
    from scipy.optimize import lsq_linear
    e, V = np.linalg.eigh(G)
    pos = e > max(1e-13 * e.max(), 0.0)
    root = np.sqrt(e[pos])
    A = root[:, None] * V[:, pos].T
    c = (V[:, pos].T @ m) / root
    sol = lsq_linear(A, c, bounds=(box.lower, box.upper), method="bvls",
                     tol=OLSE_TOL)
    w = sol.x
    if not pos.all():
        Z = V[:, ~pos]
        w_tie = box.project(w + Z @ (Z.T @ (prev - w)))
        if abs((0.5 * w_tie @ G @ w_tie - m @ w_tie)
               - (0.5 * w @ G @ w - m @ w)) <= 1e-10 * (1.0 + abs(m @ w)):
            w = w_tie
    return box.project(w)


@dataclass
class IdentifiabilityReport:
    min_eig: float
    threshold: float
    under_identified: bool
    side_condition_ok: bool   # sigma_plus <= C_i, required by the lower-bound lemma
    samples: int
    skips: int


def identifiability_diagnostic(log, config, instance, i) -> IdentifiabilityReport:
    """Compare the normalized Gram spectrum with the exploration lower bound.

    The threshold is ``1/4 sigma_plus min(C^-2, 1)`` where ``sigma_plus`` is
    the smallest eigenvalue of the stacked in-neighbor exploration
    covariance and ``C = Xbar sqrt(n_plus)`` bounds the regressor norm.
    """
    topo = instance.topology
    log_i = log.players[i]
    if log_i.count == 0:
        raise InsufficientHistory(f"player {i} has no accepted observations")
    min_eig = float(np.linalg.eigvalsh(log_i.gram / log_i.count).min())
    nbrs = topo.in_neighbors[i]
    if nbrs:
        sigma_plus = min(config.covariance_min_eig(j) for j in nbrs)
        xbar = max(float(np.max(np.abs(np.concatenate(
            [instance.boxes[j].lower, instance.boxes[j].upper])))) for j in nbrs)
        n_plus = topo.n_plus(i)
        C = xbar * np.sqrt(n_plus)
    else:
        sigma_plus, C = 1.0, 1.0
    threshold = 0.25 * sigma_plus * min(C ** -2, 1.0)
    return IdentifiabilityReport(min_eig, threshold, min_eig < threshold,
                                 sigma_plus <= C, log_i.count, log_i.skips)


@dataclass
class DecayReport:
    slope: float | None
    at_floor: bool
    sup_k_increment: float
    window: tuple


def decay_diagnostics(error_history, increment_history=None,
                      window=None, floor=1e-12) -> DecayReport:
    """Log-log decay slope of the error series and the scaled increment bound.

    ``error_history`` is a list of ``(k, error)`` pairs (test mode: error
    against the known truth).  ``increment_history`` is a list of
    ``(k, ||w_next - w||)``; the report carries ``sup k*increment``.
    """
    if len(error_history) < 2:
        raise InsufficientHistory("need at least two history points")
    ks = np.array([k for k, _ in error_history], dtype=float)
    es = np.array([e for _, e in error_history], dtype=float)
    if window is not None:
        sel = (ks >= window[0]) & (ks <= window[1])
        ks, es = ks[sel], es[sel]
        if ks.size < 2:
            raise InsufficientHistory("window contains fewer than two points")
    at_floor = bool(np.all(es <= floor))
    slope = None
    if not at_floor:
        good = es > floor
        slope = float(np.polyfit(np.log(ks[good]), np.log(es[good]), 1)[0])
    sup_inc = 0.0
    if increment_history:
        sup_inc = max(k * v for k, v in increment_history)
    return DecayReport(slope, at_floor, float(sup_inc),
                       (float(ks.min()), float(ks.max())))
