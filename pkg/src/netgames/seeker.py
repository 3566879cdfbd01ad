"""Distributed equilibrium-seeking iteration on the augmented space.

One sweep of the iteration applies, player by player,

1. a linear pull of every estimate toward its owner's current decision,
   ``y_i^j <- y_i^j - tau_ij * rho * (y_i^j - y_j^j)``, and
2. an augmented best response in the own decision: the minimizer over the
   local box of the expected objective (at the fresh estimates and the
   player's current parameter vector) plus a disagreement penalty from the
   copies its out-neighbors hold and a proximal term ``1/(2 tau_i0)||. - y_i^i||^2``.

This is the resolvent of the preconditioned game operator in the Hilbert
space induced by the design operator ``Phi = tau^{-1} - rho*L_tilde``; the
outer loop relaxes it with Krasnosel'skii-Mann averaging.  With the true
parameters and a positive definite ``Phi`` the fixed points are exactly the
Nash equilibria of the underlying game (consensus plus KKT).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import games
from .errors import GammaOutOfRange, NotStronglyMonotone, PhiNotPD
from .qp import box_qp

GAMMA_CONSTANT = "constant"
GAMMA_POWER = "power"


def validate_gamma(mode, param):
    if mode == GAMMA_CONSTANT:
        if not 0.0 < param < 1.0:
            raise GammaOutOfRange(f"constant gamma must lie in (0,1), got {param}")
    elif mode == GAMMA_POWER:
        if not 0.5 < param <= 1.0:
            raise GammaOutOfRange(f"gamma exponent must lie in (1/2, 1], got {param}")
    else:
        raise GammaOutOfRange(f"unknown gamma family '{mode}'")


@dataclass(frozen=True)
class StepConfig:
    """Step sizes of the iteration: rho, per-player/per-estimate tau, gamma schedule."""

    rho: float
    tau0: tuple            # per player
    tau_est: dict = field(hash=False)  # (estimator i, owner j) -> tau_ij
    gamma_mode: str = GAMMA_CONSTANT
    gamma_param: float = 0.5

    def __post_init__(self):
        if self.rho <= 0 or any(t <= 0 for t in self.tau0) \
                or any(t <= 0 for t in self.tau_est.values()):
            raise GammaOutOfRange("step sizes must be positive")
        validate_gamma(self.gamma_mode, self.gamma_param)

    def gamma(self, k: int) -> float:
        """Relaxation coefficient at (0-based) iteration k."""
        if self.gamma_mode == GAMMA_CONSTANT:
            return self.gamma_param
        return float(k + 1) ** (-self.gamma_param)


def choose_rho(certificate, margin=1.05) -> float:
    """Coupling weight satisfying the strong-monotonicity sufficient bound."""
    c = certificate
    if c.eta <= 0:
        raise NotStronglyMonotone(c.eta)
    bound = (1.0 / c.sigma1) * ((c.max_out + 1) / (c.min_out + 1)
                                * (c.theta1 + c.theta2) ** 2 / (4.0 * c.eta)
                                + c.theta2)
    return margin * bound


def choose_taus(topology, rho, safety=0.9, tau_max=1.0,
                gamma=(GAMMA_CONSTANT, 0.5)) -> StepConfig:
    """Gershgorin (diagonal-dominance) step sizes making Phi positive definite.

    Decision rows require ``1/tau_i0 > 2 rho N_i^-`` (capped at ``tau_max``
    when the player has no out-neighbors and the row is vacuous); estimate
    rows require ``1/tau_ij > 2 rho``, which for ``rho <= 1`` reduces to the
    familiar ``tau_ij < 1/2``.
    """
    if not 0.0 < safety < 1.0:
        raise GammaOutOfRange(f"safety must lie in (0,1), got {safety}")
    tau0 = []
    for i in range(topology.player_count):
        k = topology.out_counts[i]
        tau0.append(tau_max if k == 0 else min(tau_max, safety / (2.0 * rho * k)))
    t_est = safety / (2.0 * max(1.0, rho))
    tau_est = {key: t_est for key in
               ((i, j) for i in range(topology.player_count)
                for j in topology.in_neighbors[i])}
    return StepConfig(rho, tuple(tau0), tau_est, gamma[0], gamma[1])


@dataclass
class DesignOperator:
    """Phi = tau^{-1} - rho L_tilde and its induced norm."""

    phi: np.ndarray
    sigma_min: float
    sigma_max: float

    def norm(self, y) -> float:
        return float(np.sqrt(max(0.0, y @ self.phi @ y)))

    def inner(self, a, b) -> float:
        return float(a @ self.phi @ b)


def build_phi(step_config, maps) -> DesignOperator:
    lay = maps.layout
    dinv = np.empty(lay.n_tilde)
    for i in range(maps.topology.player_count):
        dinv[lay.own(i)] = 1.0 / step_config.tau0[i]
        for j in maps.topology.in_neighbors[i]:
            dinv[lay.estimate(i, j)] = 1.0 / step_config.tau_est[(i, j)]
    phi = np.diag(dinv) - step_config.rho * maps.L_dense()
    eigs = np.linalg.eigvalsh(phi)
    if eigs[0] <= 0:
        raise PhiNotPD(float(eigs[0]))
    return DesignOperator(phi, float(eigs[0]), float(eigs[-1]))


def km_update(y, y_tilde, gamma_k):
    """Relaxed fixed-point step y + gamma (T y - y)."""
    if not 0.0 <= gamma_k <= 1.0:
        raise GammaOutOfRange(f"gamma must lie in [0,1], got {gamma_k}")
    return y + gamma_k * (y_tilde - y)


def embed_consensual(x, layout) -> np.ndarray:
    """Lift a decision profile to the augmented space with exact consensus."""
    topo = layout.topology
    offs = np.cumsum([0] + list(topo.decision_dims))
    y = np.zeros(layout.n_tilde)
    for i in range(topo.player_count):
        y[layout.own(i)] = x[offs[i]:offs[i + 1]]
        for j in topo.in_neighbors[i]:
            y[layout.estimate(i, j)] = x[offs[j]:offs[j + 1]]
    return y


class SeekerEngine:
    """Precomputed data for fast repeated resolvent evaluations."""

    def __init__(self, instance, maps, step_config):
        self.instance = instance
        self.maps = maps
        self.step = step_config
        lay = instance.layout
        topo = instance.topology
        self.layout = lay
        self.topology = topo

        est_idx, own_of_est, tau_rho = [], [], []
        for i in range(topo.player_count):
            for j in topo.in_neighbors[i]:
                sl = lay.estimate(i, j)
                est_idx.extend(range(sl.start, sl.stop))
                osl = lay.own(j)
                own_of_est.extend(range(osl.start, osl.stop))
                tau_rho.extend([step_config.tau_est[(i, j)] * step_config.rho]
                               * (sl.stop - sl.start))
        self.est_idx = np.asarray(est_idx, dtype=np.intp)
        self.own_of_est = np.asarray(own_of_est, dtype=np.intp)
        self.tau_rho = np.asarray(tau_rho)

        self.truth = [instance.truth.stacked(topo, i)
                      for i in range(topo.player_count)]
        self.hess, self.hess_lip = [], []
        self.xplus_idx, self.dis_idx = [], []
        self.lo = [instance.boxes[i].lower for i in range(topo.player_count)]
        self.hi = [instance.boxes[i].upper for i in range(topo.player_count)]
        self.hess_cho = []
        for i in range(topo.player_count):
            A = instance.own_hessian(i) + np.eye(topo.decision_dims[i]) / step_config.tau0[i]
            self.hess.append(A)
            self.hess_lip.append(float(np.linalg.eigvalsh(A).max()))
            self.hess_cho.append(scipy.linalg.cho_factor(A))
            idx = []
            for j in topo.in_neighbors[i]:
                sl = lay.estimate(i, j)
                idx.extend(range(sl.start, sl.stop))
            self.xplus_idx.append(np.asarray(idx, dtype=np.intp))
            rows = []
            for j in topo.out_neighbors[i]:
                sl = lay.estimate(j, i)
                rows.append(list(range(sl.start, sl.stop)))
            self.dis_idx.append(np.asarray(rows, dtype=np.intp)
                                if rows else None)
        # reduced-system factor cache for the warm-started resolvent solves,
        # keyed by (player, bound pattern); A_i never changes across iterations
        self._reduced_cho = {}

    # -- pieces ---------------------------------------------------------------

    def decision_subproblem(self, i, y, y_tilde, w_i):
        """(A, b, lo, hi, x0) of player i's augmented best-response box QP."""
        inst = self.instance
        own = y[self.layout.own(i)]
        x_plus = y_tilde[self.xplus_idx[i]]
        s = float(w_i[0] + w_i[1:] @ x_plus) if x_plus.size else float(w_i[0])
        if inst.variant == games.SCALAR_LQ:
            b = np.array([s - float(inst.lq_a[i])])
        else:
            b = inst.q[i] - (inst.b0 + s) * inst.H[i]
        if self.dis_idx[i] is not None:
            others = y[self.dis_idx[i]].sum(axis=0)
            b = b + self.step.rho * (len(self.dis_idx[i]) * own - others)
        b = b - own / self.step.tau0[i]
        return self.hess[i], b, self.lo[i], self.hi[i], own

    def _warm_active_set(self, i, b, x0, max_rounds=40):
        """Best-response solve warm-started from the previous own decision.

        Monotone primal active-set descent on ``1/2 x'Ax + b'x`` over the
        box: ratio-test toward the reduced Newton point binding one blocking
        coordinate at a time, release the worst dual violator once feasible.
        The bound pattern barely changes between sweeps, so the reduced
        Cholesky factors are cached per pattern.  Returns ``None`` if the
        round cap is hit (caller falls back to the projected-Newton solver).
        """
        A, lo, hi = self.hess[i], self.lo[i], self.hi[i]
        x = np.clip(x0, lo, hi)
        g = A @ x + b
        gtol = 1e-12 * (1.0 + float(np.abs(b).max(initial=0.0)))
        free = ~(((x <= lo + 1e-14) & (g >= 0)) | ((x >= hi - 1e-14) & (g <= 0)))
        for _ in range(max_rounds):
            if free.any():
                key = (i, free.tobytes())
                fac = self._reduced_cho.get(key)
                idx = np.flatnonzero(free)
                if fac is None:
                    fac = scipy.linalg.cho_factor(A[np.ix_(idx, idx)])
                    self._reduced_cho[key] = fac
                d = scipy.linalg.cho_solve(fac, -(A[idx] @ x + b[idx]))
                with np.errstate(divide="ignore", invalid="ignore"):
                    t_lo = np.where(d < 0, (lo[idx] - x[idx]) / d, np.inf)
                    t_hi = np.where(d > 0, (hi[idx] - x[idx]) / d, np.inf)
                t_max = np.minimum(t_lo, t_hi)
                blocker = int(np.argmin(t_max))
                if t_max[blocker] < 1.0:
                    x[idx] = np.clip(x[idx] + t_max[blocker] * d, lo[idx], hi[idx])
                    j = idx[blocker]
                    x[j] = lo[j] if d[blocker] < 0 else hi[j]
                    free[j] = False
                    continue
                x[idx] = np.clip(x[idx] + d, lo[idx], hi[idx])
            g = A @ x + b
            viol = np.where((x <= lo + 1e-14) & ~free, -g,
                            np.where((x >= hi - 1e-14) & ~free, g, -np.inf))
            worst = int(np.argmax(viol))
            if viol[worst] <= gtol:
                return x
            free[worst] = True
        return None

    def resolvent(self, y, beliefs=None, inner=None, executor=None):
        """One preconditioned resolvent sweep; returns the intermediate iterate."""
        y_tilde = y.copy()
        if self.est_idx.size:
            e = y[self.est_idx]
            y_tilde[self.est_idx] = e - self.tau_rho * (e - y[self.own_of_est])

        params = self.truth if beliefs is None else beliefs

        def solve_one(i):
            A, b, lo, hi, x0 = self.decision_subproblem(i, y, y_tilde, params[i])
            if inner is not None:
                return inner.solve(i, A, b, lo, hi, x0)
            x = self._warm_active_set(i, b, x0)
            if x is not None:
                return x
            return box_qp(A, b, lo, hi, x0=x0, lipschitz=self.hess_lip[i])

        n_players = self.topology.player_count
        if executor is None:
            results = [solve_one(i) for i in range(n_players)]
        else:
            results = list(executor.map(solve_one, range(n_players)))
        for i in range(n_players):
            y_tilde[self.layout.own(i)] = results[i]
        return y_tilde

    def residual(self, y, phi: DesignOperator, beliefs=None) -> float:
        """Phi-norm distance between y and its resolvent image."""
        return phi.norm(y - self.resolvent(y, beliefs=beliefs))


def resolvent_step(y, instance, maps, step_config, beliefs=None, inner=None):
    """Functional wrapper around :class:`SeekerEngine` (cached per step config)."""
    key = ("seeker", id(step_config))
    eng = instance._mf_cache.get(key)
    if eng is None:
        eng = SeekerEngine(instance, maps, step_config)
        instance._mf_cache[key] = eng
    return eng.resolvent(y, beliefs=beliefs, inner=inner)


def residual(y, instance, maps, step_config, phi=None, beliefs=None) -> float:
    if phi is None:
        phi = build_phi(step_config, maps)
    y_tilde = resolvent_step(y, instance, maps, step_config, beliefs=beliefs)
    return phi.norm(y - y_tilde)


@dataclass
class Trajectory:
    y: np.ndarray
    iterations: int
    converged: bool
    residuals: list            # (k, residual) at each recorded step
    dist_K: list               # (k, ||y - y*||_K) when an oracle was attached
    own_history: list          # (k, stacked own decisions) at record cadence


def run_exact(instance, maps, step_config, iters, tol=1e-8, y0=None,
              oracle_x=None, record_every=1, workers=1) -> Trajectory:
    """Iterate the relaxed resolvent with true parameters.

    Stops when the (exact-operator) residual drops below ``tol`` or the
    budget is exhausted.  When ``oracle_x`` is given, the Phi-norm distance
    to its consensual lift is recorded every ``record_every`` iterations.
    """
    lay = instance.layout
    engine = SeekerEngine(instance, maps, step_config)
    phi = build_phi(step_config, maps)
    y = np.array([0.0] * lay.n_tilde) if y0 is None else np.asarray(y0, dtype=float).copy()
    if y0 is None:
        # start from box centers, consensually
        x0 = np.concatenate([instance.boxes[i].center
                             for i in range(instance.topology.player_count)])
        y = embed_consensual(x0, lay)
    y_star = None if oracle_x is None else embed_consensual(oracle_x, lay)

    residuals, dist_hist, own_hist = [], [], []
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        converged = False
        k = 0
        for k in range(iters):
            y_tilde = engine.resolvent(y, executor=executor)
            res = phi.norm(y - y_tilde)
            if k % record_every == 0:
                residuals.append((k, res))
                if y_star is not None:
                    dist_hist.append((k, phi.norm(y - y_star)))
                own_hist.append((k, (maps.R @ y).copy()))
            if res < tol:
                converged = True
                break
            y = km_update(y, y_tilde, step_config.gamma(k))
        final_res = engine.residual(y, phi)
        residuals.append((k + 1, final_res))
        if y_star is not None:
            dist_hist.append((k + 1, phi.norm(y - y_star)))
        own_hist.append((k + 1, (maps.R @ y).copy()))
        return Trajectory(y, k + 1, converged or final_res < tol,
                          residuals, dist_hist, own_hist)
    finally:
        if executor is not None:
            executor.shutdown()
