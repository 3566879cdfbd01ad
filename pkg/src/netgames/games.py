"""Game instances: payoffs, pseudogradients, noise, and parameter learning hooks.

Two affine-pseudogradient variants are provided.

Scalar linear-quadratic (``scalar_lq``)
    Each player holds a scalar decision on a box and pays
    ``J_i = 1/2 x_i^2 + (K_i * sum_j w_ij x_j - a_i) x_i``.
    Exposed through the same learning interface by treating the coupling
    term as the unknown aggregate (zero bias, weights ``K_i w_ij``).

Networked Cournot (``nash_cournot``)
    Player ``i`` produces ``x_i`` in several markets aggregated by a known
    positive row ``h_i``; the market price seen by player ``i`` is
    ``b0 + s_i - (d_i/2) h_i.x_i`` where the unknown aggregate is

        ``s_i = b_i - sum_{j in N_i^+} P[i,j] (h_j . x_j) + xi_i``

    with ``P`` row-normalized coupling weights, ``d_i`` their row sum, and
    ``xi_i`` bounded zero-mean noise.  The payoff is production cost minus
    revenue:

        ``J_i = x'Q x + q'x + (d_i/2)(h_i.x)^2 - (b0 + s_i)(h_i.x)``.

    The induced pseudogradient is affine, ``F(x) = M x + u`` with
    ``M = 2Q + H'(D + P)H`` (block form), which is what the monotonicity
    certificate analyzes.  The learned parameter vector of player ``i`` is
    ``w_i = [bias; [w_ji]_j]`` with truth ``bias = b_i``, ``w_ji = -P[i,j] h_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, NotInvertibleHere, NotStronglyMonotone,
                     RejectedInstance)
from .topology import (AugmentedLayout, NetworkTopology, build_layout,
                       build_structural_maps, build_topology, circle_with_chords)

SCALAR_LQ = "scalar_lq"
NASH_COURNOT = "nash_cournot"

_INV_EPS_REL = 1e-9


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box with finite bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DimensionMismatch("invalid box bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol=1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


@dataclass(frozen=True)
class TruthParams:
    """True aggregate parameters: per-player bias and in-neighbor weights."""

    biases: tuple[float, ...]
    weights: dict  # (i, j) -> np.ndarray of length n_j, j an in-neighbor of i

    def stacked(self, topology: NetworkTopology, i: int) -> np.ndarray:
        parts = [np.array([self.biases[i]])]
        for j in topology.in_neighbors[i]:
            parts.append(np.asarray(self.weights[(i, j)], dtype=float))
        return np.concatenate(parts)


@dataclass
class GameInstance:
    topology: NetworkTopology
    variant: str
    boxes: list            # decision boxes X_i
    param_boxes: list      # parameter boxes W_i (dimension n_i^+ + 1)
    truth: TruthParams
    noise_sd: float = 0.0
    noise_clip: float = 0.0      # truncation radius (3*sd by default)
    # scalar_lq data
    lq_k: np.ndarray | None = None
    lq_a: np.ndarray | None = None
    lq_w: np.ndarray | None = None
    # nash_cournot data
    Q: list | None = None
    q: list | None = None
    H: list | None = None        # h_i, positive rows
    P: np.ndarray | None = None  # row-normalized coupling adjacency
    b0: float = 0.0
    b: np.ndarray | None = None
    layout: AugmentedLayout = field(init=False)
    _mf_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.layout = build_layout(self.topology)

    # -- per-player structure -------------------------------------------------

    def degree(self, i: int) -> float:
        """Self-coupling weight d_i (row sum of P; zero without in-neighbors)."""
        if self.variant != NASH_COURNOT:
            return 0.0
        return float(sum(self.P[i, j] for j in self.topology.in_neighbors[i]))

    def own_hessian(self, i: int) -> np.ndarray:
        """Hessian of the expected objective in the player's own decision."""
        if self.variant == SCALAR_LQ:
            return np.array([[1.0]])
        h = self.H[i]
        return 2.0 * self.Q[i] + self.degree(i) * np.outer(h, h)

    def production_cost(self, i: int, x_i) -> float:
        x_i = np.atleast_1d(x_i)
        if self.variant == SCALAR_LQ:
            return 0.5 * float(x_i[0] ** 2)
        return float(x_i @ self.Q[i] @ x_i + self.q[i] @ x_i)

    # -- aggregates and payoffs ----------------------------------------------

    def aggregate(self, i: int, x_plus, w_i=None, xi: float = 0.0) -> float:
        """Aggregate s_i at the stacked in-neighbor profile ``x_plus``."""
        x_plus = np.atleast_1d(np.asarray(x_plus, dtype=float))
        if w_i is None:
            w_i = self.truth.stacked(self.topology, i)
        w_i = np.asarray(w_i, dtype=float)
        if w_i.size != x_plus.size + 1:
            raise DimensionMismatch(
                f"player {i}: parameter length {w_i.size} vs regressor {x_plus.size + 1}")
        return float(w_i[0] + w_i[1:] @ x_plus + xi)

    def payoff_at_aggregate(self, i: int, x_i, s: float) -> float:
        """J_i(x_i; s): the payoff as a function of own play and aggregate."""
        x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
        if self.variant == SCALAR_LQ:
            return 0.5 * float(x_i[0] ** 2) + (s - float(self.lq_a[i])) * float(x_i[0])
        hx = float(self.H[i] @ x_i)
        return (self.production_cost(i, x_i) + 0.5 * self.degree(i) * hx * hx
                - (self.b0 + s) * hx)


def expected_objective(instance, i, x_i, x_plus, w_i=None) -> float:
    """Expected payoff of player i at own play x_i and in-neighbor stack x_plus."""
    s = instance.aggregate(i, x_plus, w_i=w_i, xi=0.0)
    return instance.payoff_at_aggregate(i, x_i, s)


def draw_noise(instance, rng) -> float:
    """One bounded noise sample: Gaussian, rejection-truncated at the clip radius."""
    if instance.noise_sd == 0.0:
        return 0.0
    clip = instance.noise_clip if instance.noise_clip > 0 else 3.0 * instance.noise_sd
    while True:
        v = rng.normal(0.0, instance.noise_sd)
        if abs(v) <= clip:
            return float(v)


def scenario_payoff(instance, i, x_i, x_plus, rng):
    """Realized (noisy) payoff; returns (J, xi).  xi is for test oracles only."""
    xi = draw_noise(instance, rng)
    s = instance.aggregate(i, x_plus, xi=xi)
    return instance.payoff_at_aggregate(i, x_i, s), xi


def _invert_scale(instance, i) -> float:
    box = instance.boxes[i]
    if instance.variant == SCALAR_LQ:
        return float(max(abs(box.lower[0]), abs(box.upper[0]), 1.0))
    h = instance.H[i]
    return float(max(abs(h @ box.lower), abs(h @ box.upper), 1.0))


def payoff_invert(instance, i, x_i, J_observed) -> float:
    """Recover the realized aggregate s_i from an observed payoff.

    Raises :class:`NotInvertibleHere` when the revenue factor is (near) zero,
    which callers treat as "skip this observation".
    """
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    eps = _INV_EPS_REL * _invert_scale(instance, i)
    if instance.variant == SCALAR_LQ:
        x = float(x_i[0])
        if abs(x) < eps:
            raise NotInvertibleHere(f"player {i}: |x|={abs(x):.3g} below threshold")
        return (J_observed - 0.5 * x * x) / x + float(instance.lq_a[i])
    hx = float(instance.H[i] @ x_i)
    if abs(hx) < eps:
        raise NotInvertibleHere(f"player {i}: |h.x|={abs(hx):.3g} below threshold")
    f = instance.production_cost(i, x_i) + 0.5 * instance.degree(i) * hx * hx
    return (f - J_observed) / hx - instance.b0


# -- affine pseudogradient ----------------------------------------------------

def _pseudo_affine(instance):
    """Cache (M, u) with F(x) = M x + u on the stacked decision space."""
    if "M" in instance._mf_cache:
        return instance._mf_cache["M"], instance._mf_cache["u"]
    topo = instance.topology
    n = topo.n_total
    offs = np.cumsum([0] + list(topo.decision_dims))
    M = np.zeros((n, n))
    u = np.zeros(n)
    for i in range(topo.player_count):
        si = slice(offs[i], offs[i + 1])
        if instance.variant == SCALAR_LQ:
            M[si, si] = 1.0
            u[si.start] = -float(instance.lq_a[i])
            for j in topo.in_neighbors[i]:
                M[si.start, offs[j]] = float(instance.lq_k[i] * instance.lq_w[i, j])
        else:
            h = instance.H[i]
            M[si, si] = instance.own_hessian(i)
            u[si] = instance.q[i] - (instance.b0 + instance.b[i]) * h
            for j in topo.in_neighbors[i]:
                sj = slice(offs[j], offs[j + 1])
                M[si, sj] = instance.P[i, j] * np.outer(h, instance.H[j])
    instance._mf_cache["M"] = M
    instance._mf_cache["u"] = u
    instance._mf_cache["offs"] = offs
    return M, u


def pseudogradient(instance, x) -> np.ndarray:
    """Stacked partial gradients of the expected objectives, F(x)."""
    M, u = _pseudo_affine(instance)
    x = np.asarray(x, dtype=float)
    if x.size != M.shape[0]:
        raise DimensionMismatch(f"x has size {x.size}, expected {M.shape[0]}")
    return M @ x + u


def local_gradient(instance, i, x_i, x_plus, w_i=None) -> np.ndarray:
    """Partial gradient of 𝕁_i in the own decision at local information."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    s = instance.aggregate(i, x_plus, w_i=w_i, xi=0.0)
    if instance.variant == SCALAR_LQ:
        return np.array([float(x_i[0]) + s - float(instance.lq_a[i])])
    h = instance.H[i]
    return (2.0 * instance.Q[i] @ x_i + instance.q[i]
            + instance.degree(i) * float(h @ x_i) * h - (instance.b0 + s) * h)


def extended_pseudogradient(instance, y, w_hat=None) -> np.ndarray:
    """Stack of partial gradients, each player evaluating at its local estimates.

    ``w_hat`` is an optional list of per-player stacked parameter vectors;
    defaults to the truth (the exact operator).
    """
    lay = instance.layout
    topo = instance.topology
    out = np.empty(topo.n_total)
    pos = 0
    for i in range(topo.player_count):
        x_i = y[lay.own(i)]
        parts = [y[lay.estimate(i, j)] for j in topo.in_neighbors[i]]
        x_plus = np.concatenate(parts) if parts else np.empty(0)
        w_i = None if w_hat is None else w_hat[i]
        g = local_gradient(instance, i, x_i, x_plus, w_i=w_i)
        out[pos:pos + g.size] = g
        pos += g.size
    return out


def extended_jacobian(instance) -> np.ndarray:
    """Jacobian of the extended pseudogradient on the augmented space (n x n_tilde)."""
    M, _ = _pseudo_affine(instance)
    offs = instance._mf_cache["offs"]
    topo = instance.topology
    lay = instance.layout
    G = np.zeros((topo.n_total, lay.n_tilde))
    for i in range(topo.player_count):
        ri = slice(offs[i], offs[i + 1])
        G[ri, lay.own(i)] = M[ri, ri]
        for j in topo.in_neighbors[i]:
            G[ri, lay.estimate(i, j)] = M[ri, offs[j]:offs[j + 1]]
    return G


@dataclass(frozen=True)
class MonotonicityCertificate:
    eta: float      # strong-monotonicity modulus of F
    theta1: float   # Lipschitz constant of F
    theta2: float   # Lipschitz constant of the extended operator
    sigma1: float
    max_out: int
    min_out: int


def monotonicity_certificate(instance, maps) -> MonotonicityCertificate:
    """Spectral constants of the affine pseudogradient; fails if not strongly monotone."""
    M, _ = _pseudo_affine(instance)
    sym = 0.5 * (M + M.T)
    eta = float(np.linalg.eigvalsh(sym).min())
    if eta <= 0:
        raise NotStronglyMonotone(eta)
    theta1 = float(np.linalg.svd(M, compute_uv=False).max())
    theta2 = float(np.linalg.svd(extended_jacobian(instance), compute_uv=False).max())
    topo = instance.topology
    return MonotonicityCertificate(eta, theta1, theta2, maps.sigma1,
                                   topo.max_out_count, topo.min_out_count)


# -- instance builders --------------------------------------------------------

def _param_box_around_truth(w, slack=0.5) -> BoxSet:
    w = np.asarray(w, dtype=float)
    lo = w - slack * np.abs(w)
    hi = w + slack * np.abs(w)
    return BoxSet(lo, hi)


def _default_param_boxes(topology, truth, slack=0.5):
    return [_param_box_around_truth(truth.stacked(topology, i), slack)
            for i in range(topology.player_count)]


def make_scalar_lq(K, a, w, box_bounds=(0.0, 10.0), edges=None,
                   noise_sd=0.0, param_slack=0.5) -> GameInstance:
    """Build a scalar LQ instance.

    ``w`` is an N x N coupling matrix; a nonzero ``w[i, j]`` requires edge
    (j, i).  If ``edges`` is None they are inferred from the nonzeros of ``w``.
    """
    K = np.atleast_1d(np.asarray(K, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    w = np.asarray(w, dtype=float)
    N = K.size
    if edges is None:
        edges = {(j, i) for i in range(N) for j in range(N)
                 if i != j and w[i, j] != 0.0}
    topo = build_topology(N, [1] * N, edges)
    boxes = [BoxSet([box_bounds[0]], [box_bounds[1]]) for _ in range(N)]
    weights = {(i, j): np.array([K[i] * w[i, j]])
               for i in range(N) for j in topo.in_neighbors[i]}
    truth = TruthParams(tuple(0.0 for _ in range(N)), weights)
    pboxes = _default_param_boxes(topo, truth, param_slack)
    return GameInstance(topo, SCALAR_LQ, boxes, pboxes, truth,
                        noise_sd=noise_sd, noise_clip=3.0 * noise_sd,
                        lq_k=K, lq_a=a, lq_w=w)


def _cournot_truth(topo, P, H, b) -> TruthParams:
    weights = {(i, j): -P[i, j] * np.asarray(H[j], dtype=float)
               for i in range(topo.player_count) for j in topo.in_neighbors[i]}
    return TruthParams(tuple(float(v) for v in b), weights)


def make_nash_cournot(topo, Q, q, H, P, b0, b, box_upper,
                      noise_sd=0.5, param_slack=0.5) -> GameInstance:
    boxes = [BoxSet(np.zeros(topo.decision_dims[i]), np.asarray(box_upper[i], dtype=float))
             for i in range(topo.player_count)]
    truth = _cournot_truth(topo, P, H, b)
    pboxes = _default_param_boxes(topo, truth, param_slack)
    return GameInstance(topo, NASH_COURNOT, boxes, pboxes, truth,
                        noise_sd=noise_sd, noise_clip=3.0 * noise_sd,
                        Q=list(Q), q=list(q), H=[np.asarray(h, float) for h in H],
                        P=np.asarray(P, dtype=float), b0=float(b0),
                        b=np.asarray(b, dtype=float))


def sample_instance(seed, player_count=10, chord_count=10, dims=(3, 4, 5),
                    noise_sd=0.5, q_repair_floor=0.1, max_resamples=20,
                    param_slack=0.5) -> GameInstance:
    """Draw a networked Cournot instance from the reference distributions.

    Production curvature entries U[4.4, 4.6] (symmetrized, eigenvalue-floor
    repaired), linear costs U[1, 1.2], market rows U[0.8, 4.5], coupling
    weights U[0.8, 1] row-normalized, base price 50, biases U[3, 7], box
    upper bounds U[10, 20], truncated-Gaussian noise (sd 0.5 by default).
    Resamples a bounded number of times until the monotonicity certificate
    passes; raises :class:`RejectedInstance` otherwise.
    """
    for attempt in range(max_resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, attempt)))
        edges = circle_with_chords(player_count, chord_count, rng)
        n_dims = rng.choice(list(dims), size=player_count)
        topo = build_topology(player_count, n_dims, edges)

        Q, q, H, upper = [], [], [], []
        for i in range(player_count):
            n = int(n_dims[i])
            A = rng.uniform(4.4, 4.6, size=(n, n))
            A = 0.5 * (A + A.T)
            lam = np.linalg.eigvalsh(A).min()
            if lam < q_repair_floor:
                A = A + (q_repair_floor - lam) * np.eye(n)
            Q.append(A)
            q.append(rng.uniform(1.0, 1.2, size=n))
            H.append(rng.uniform(0.8, 4.5, size=n))
            upper.append(rng.uniform(10.0, 20.0, size=n))
        b = rng.uniform(3.0, 7.0, size=player_count)
        P = np.zeros((player_count, player_count))
        for i in range(player_count):
            nbrs = topo.in_neighbors[i]
            if not nbrs:
                continue
            row = rng.uniform(0.8, 1.0, size=len(nbrs))
            row = row / row.sum()
            for j, v in zip(nbrs, row):
                P[i, j] = v

        inst = make_nash_cournot(topo, Q, q, H, P, b0=50.0, b=b, box_upper=upper,
                                 noise_sd=noise_sd, param_slack=param_slack)
        maps = build_structural_maps(topo, inst.layout)
        try:
            monotonicity_certificate(inst, maps)
            return inst
        except NotStronglyMonotone:
            continue
    raise RejectedInstance(f"no strongly monotone instance in {max_resamples} attempts")


# -- serialization ------------------------------------------------------------

def instance_to_dict(instance) -> dict:
    topo = instance.topology
    d = {
        "variant": instance.variant,
        "player_count": topo.player_count,
        "decision_dims": list(topo.decision_dims),
        "edges": [list(e) for e in topo.sorted_edges()],
        "boxes": [{"lower": b.lower.tolist(), "upper": b.upper.tolist()}
                  for b in instance.boxes],
        "param_boxes": [{"lower": b.lower.tolist(), "upper": b.upper.tolist()}
                        for b in instance.param_boxes],
        "noise_sd": instance.noise_sd,
        "noise_clip": instance.noise_clip,
    }
    if instance.variant == SCALAR_LQ:
        d.update(K=instance.lq_k.tolist(), a=instance.lq_a.tolist(),
                 w=instance.lq_w.tolist())
    else:
        d.update(Q=[Qi.tolist() for Qi in instance.Q],
                 q=[qi.tolist() for qi in instance.q],
                 H=[hi.tolist() for hi in instance.H],
                 P=instance.P.tolist(), b0=instance.b0, b=instance.b.tolist())
    return d


def instance_from_dict(d) -> GameInstance:
    topo = build_topology(d["player_count"], d["decision_dims"],
                          [tuple(e) for e in d["edges"]])
    boxes = [BoxSet(bb["lower"], bb["upper"]) for bb in d["boxes"]]
    pboxes = [BoxSet(bb["lower"], bb["upper"]) for bb in d["param_boxes"]]
    if d["variant"] == SCALAR_LQ:
        K = np.asarray(d["K"], dtype=float)
        a = np.asarray(d["a"], dtype=float)
        w = np.asarray(d["w"], dtype=float)
        weights = {(i, j): np.array([K[i] * w[i, j]])
                   for i in range(topo.player_count) for j in topo.in_neighbors[i]}
        truth = TruthParams(tuple(0.0 for _ in range(topo.player_count)), weights)
        inst = GameInstance(topo, SCALAR_LQ, boxes, pboxes, truth,
                            noise_sd=d["noise_sd"], noise_clip=d["noise_clip"],
                            lq_k=K, lq_a=a, lq_w=w)
    else:
        P = np.asarray(d["P"], dtype=float)
        H = [np.asarray(h, dtype=float) for h in d["H"]]
        truth = _cournot_truth(topo, P, H, d["b"])
        inst = GameInstance(topo, NASH_COURNOT, boxes, pboxes, truth,
                            noise_sd=d["noise_sd"], noise_clip=d["noise_clip"],
                            Q=[np.asarray(Qi, float) for Qi in d["Q"]],
                            q=[np.asarray(qi, float) for qi in d["q"]],
                            H=H, P=P, b0=float(d["b0"]),
                            b=np.asarray(d["b"], dtype=float))
    return inst
