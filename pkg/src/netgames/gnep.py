"""Generalized Nash seeking with shared affine constraints (Douglas-Rachford).

The coupled game adds a global resource constraint ``sum_i A_i x_i <= c``
(shared multiplier ``lambda``) and optional affine local constraints
``E_i y_i <= d_i`` on each player's local view.  The distributed iteration
splits the KKT operator into two halves of a skew block matrix and applies
the preconditioned Douglas-Rachford scheme on the stacked variable

    ``psi = [y; lambda; mu; z]``

with ``mu`` consensus multipliers on dependency edges and ``z``
multiplier-consensus variables on communication edges.  Each step runs an
A-resolvent (estimate pulls, augmented best responses, multiplier updates),
a reflection, a B-resolvent (local-constraint projection, positive-part
multiplier step), and an over-relaxed KM average

    ``psi~ <- psi~ + 2 gamma (psi_bar - psi)``,

so ``gamma <= 1/2`` keeps the effective relaxation inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import games
from .errors import DimensionMismatch, GammaOutOfRange, PhiNotPD
from .qp import box_qp, least_distance_affine


@dataclass
class CouplingSpec:
    """Shared-resource and local affine-constraint data."""

    A: list                      # per player, m x n_i
    budget_shares: list          # c_i, summing to the total budget
    local_E: list | None = None  # per player, m_i x (n_i + n_i^+), or None
    local_d: list | None = None

    def __post_init__(self):
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A]
        m = self.A[0].shape[0]
        if any(a.shape[0] != m for a in self.A):
            raise DimensionMismatch("all A_i must share the multiplier dimension")
        self.budget_shares = [np.atleast_1d(np.asarray(c, dtype=float))
                              for c in self.budget_shares]
        if any(c.size != m for c in self.budget_shares):
            raise DimensionMismatch("budget shares must have the multiplier dimension")

    @property
    def m(self) -> int:
        return self.A[0].shape[0]

    @property
    def total_budget(self) -> np.ndarray:
        return np.sum(self.budget_shares, axis=0)

    @classmethod
    def equal_split(cls, A, total_c, player_count, local_E=None, local_d=None):
        total_c = np.atleast_1d(np.asarray(total_c, dtype=float))
        shares = [total_c / player_count for _ in range(player_count)]
        return cls(list(A), shares, local_E, local_d)

    def stacked_A(self, topology) -> np.ndarray:
        blocks = []
        for i in range(topology.player_count):
            blocks.append(self.A[i])
        return np.hstack(blocks)


@dataclass
class GnepStepConfig:
    rho: float
    tau1: tuple   # per player (decisions and estimates)
    tau2: tuple   # per player (global multiplier)
    tau3: tuple   # per player (its estimate-consensus multipliers)
    tau4: tuple   # per player (its incoming multiplier-consensus variables)
    gamma: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.gamma <= 0.5:
            raise GammaOutOfRange(
                f"GNEP relaxation must lie in (0, 1/2], got {self.gamma}")


@dataclass
class GnepOperator:
    """Assembled design matrix of the splitting, with block slices."""

    phi: np.ndarray
    sigma_min: float
    sigma_max: float
    y_slice: slice
    lam_slices: list
    mu_offset: int
    z_offset: int
    size: int


def _state_dims(maps, coupling):
    lay = maps.layout
    N = maps.topology.player_count
    m = coupling.m
    mu_dim = maps.B_tilde.shape[1]
    z_dim = len(maps.edge_order) * m
    return lay.n_tilde, N * m, mu_dim, z_dim


def _lambda_map(maps, coupling) -> np.ndarray:
    """(Lambda R): y -> [A_i y_i^i]_i on the augmented space."""
    lay = maps.layout
    N = maps.topology.player_count
    m = coupling.m
    out = np.zeros((N * m, lay.n_tilde))
    for i in range(N):
        out[i * m:(i + 1) * m, lay.own(i)] = coupling.A[i]
    return out


def gnep_design_operator(maps, coupling, taus: GnepStepConfig,
                         verify=True) -> GnepOperator:
    """Assemble the block design matrix and verify positive definiteness."""
    ny, nl, nm, nz = _state_dims(maps, coupling)
    size = ny + nl + nm + nz
    lay = maps.layout
    topo = maps.topology
    m = coupling.m

    diag = np.empty(size)
    for i in range(topo.player_count):
        diag[lay.own(i)] = 1.0 / taus.tau1[i]
        for j in topo.in_neighbors[i]:
            diag[lay.estimate(i, j)] = 1.0 / taus.tau1[i]
    for i in range(topo.player_count):
        diag[ny + i * m: ny + (i + 1) * m] = 1.0 / taus.tau2[i]
    for (j, i), sl in maps.mu_slices.items():
        diag[ny + nl + sl.start: ny + nl + sl.stop] = 1.0 / taus.tau3[i]
    for e, (tail, head) in enumerate(maps.edge_order):
        diag[ny + nl + nm + e * m: ny + nl + nm + (e + 1) * m] = 1.0 / taus.tau4[head]

    phi = np.diag(diag)
    LR = _lambda_map(maps, coupling)
    Bm = maps.B_m(m)
    Bt = maps.B_tilde.toarray()
    phi[:ny, :ny] -= 0.5 * taus.rho * maps.L_dense()
    phi[:ny, ny:ny + nl] -= 0.5 * LR.T
    phi[ny:ny + nl, :ny] -= 0.5 * LR
    phi[:ny, ny + nl:ny + nl + nm] -= 0.5 * Bt
    phi[ny + nl:ny + nl + nm, :ny] -= 0.5 * Bt.T
    phi[ny:ny + nl, ny + nl + nm:] -= 0.5 * Bm
    phi[ny + nl + nm:, ny:ny + nl] -= 0.5 * Bm.T

    eigs = np.linalg.eigvalsh(phi)
    if verify and eigs[0] <= 0:
        raise PhiNotPD(float(eigs[0]))
    lam_slices = [slice(ny + i * m, ny + (i + 1) * m)
                  for i in range(topo.player_count)]
    return GnepOperator(phi, float(eigs[0]), float(eigs[-1]), slice(0, ny),
                        lam_slices, ny + nl, ny + nl + nm, size)


def choose_gnep_taus(maps, coupling, rho, safety=0.9, tau_max=1.0,
                     gamma=0.25) -> GnepStepConfig:
    """Diagonal-dominance step sizes from the assembled off-diagonal rows.

    Each 1/tau is set to the worst absolute off-diagonal row sum in its
    block divided by the safety factor, which makes the design matrix
    strictly diagonally dominant and hence positive definite.
    """
    topo = maps.topology
    N = topo.player_count
    probe = GnepStepConfig(rho, (1.0,) * N, (1.0,) * N, (1.0,) * N, (1.0,) * N,
                           gamma=gamma)
    op = gnep_design_operator(maps, coupling, probe, verify=False)
    off = op.phi.copy()
    np.fill_diagonal(off, 0.0)
    # dominance needs 1/tau + d_r > rowsum_r, where d_r is the tau-independent
    # diagonal contribution (e.g. the -rho/2 Laplacian degree); with the unit
    # probe the assembled diagonal is 1 + d_r
    rowsums = np.sum(np.abs(off), axis=1) - (np.diag(op.phi) - 1.0)
    lay = maps.layout
    ny, nl, nm, nz = _state_dims(maps, coupling)
    m = coupling.m

    def pick(rows):
        worst = float(np.max(rowsums[rows])) if len(rows) else 0.0
        return tau_max if worst <= 0.0 else min(tau_max, safety / worst)

    tau1, tau2, tau3, tau4 = [], [], [], []
    for i in range(N):
        rows = list(range(lay.own(i).start, lay.own(i).stop))
        for j in topo.in_neighbors[i]:
            sl = lay.estimate(i, j)
            rows.extend(range(sl.start, sl.stop))
        tau1.append(pick(rows))
        tau2.append(pick(list(range(ny + i * m, ny + (i + 1) * m))))
        rows3 = []
        for (jj, ii), sl in maps.mu_slices.items():
            if ii == i:
                rows3.extend(range(ny + nl + sl.start, ny + nl + sl.stop))
        tau3.append(pick(rows3))
        rows4 = []
        for e, (tail, head) in enumerate(maps.edge_order):
            if head == i:
                rows4.extend(range(ny + nl + nm + e * m, ny + nl + nm + (e + 1) * m))
        tau4.append(pick(rows4))
    return GnepStepConfig(rho, tuple(tau1), tuple(tau2), tuple(tau3), tuple(tau4),
                          gamma=gamma)


@dataclass
class GnepState:
    psi_tilde: np.ndarray     # carried shadow iterate
    psi: np.ndarray           # last A-resolvent output (solution estimate)
    k: int = 0

    @classmethod
    def zeros(cls, op: GnepOperator):
        return cls(np.zeros(op.size), np.zeros(op.size))


class GnepEngine:
    """Precomputed data for the four-phase Douglas-Rachford step."""

    def __init__(self, instance, coupling, maps, taus: GnepStepConfig):
        self.instance = instance
        self.coupling = coupling
        self.maps = maps
        self.taus = taus
        self.op = gnep_design_operator(maps, coupling, taus)
        lay = instance.layout
        topo = instance.topology
        self.lay, self.topo = lay, topo
        self.m = coupling.m
        self.ny, self.nl, self.nm, self.nz = _state_dims(maps, coupling)
        self.truth = [instance.truth.stacked(topo, i)
                      for i in range(topo.player_count)]
        self.hess, self.hess_lip = [], []
        for i in range(topo.player_count):
            A = instance.own_hessian(i) + np.eye(topo.decision_dims[i]) / taus.tau1[i]
            self.hess.append(A)
            self.hess_lip.append(float(np.linalg.eigvalsh(A).max()))
        # z bookkeeping: per edge (tail, head) -> index
        self.edge_index = {e: k for k, e in enumerate(maps.edge_order)}

    # -- component access -----------------------------------------------------

    def split(self, psi):
        y = psi[:self.ny]
        lam = psi[self.ny:self.ny + self.nl]
        mu = psi[self.ny + self.nl:self.ny + self.nl + self.nm]
        z = psi[self.ny + self.nl + self.nm:]
        return y, lam, mu, z

    def lam_of(self, lam, i):
        return lam[i * self.m:(i + 1) * self.m]

    def z_of(self, z, tail, head):
        e = self.edge_index[(tail, head)]
        return z[e * self.m:(e + 1) * self.m]

    def bm_z(self, z, i):
        """[B_m z]_i = sum over in-edges minus sum over out-edges."""
        acc = np.zeros(self.m)
        for j in self.topo.in_neighbors[i]:
            acc += self.z_of(z, j, i)
        for j in self.topo.out_neighbors[i]:
            acc -= self.z_of(z, i, j)
        return acc

    # -- the two resolvents ---------------------------------------------------

    def resolvent_a(self, psi_tilde):
        """Estimate pulls, augmented best responses, multiplier updates."""
        inst, lay, topo, taus = self.instance, self.lay, self.topo, self.taus
        rho = taus.rho
        yt, lt, mt, zt = self.split(psi_tilde)
        psi = psi_tilde.copy()
        y, lam, mu, z = self.split(psi)

        # estimates
        for i in range(topo.player_count):
            for j in topo.in_neighbors[i]:
                sl = lay.estimate(i, j)
                msl = self.maps.mu_slices[(j, i)]
                y[sl] = yt[sl] - taus.tau1[i] * (0.5 * rho * (yt[sl] - yt[lay.own(j)])
                                                 + 0.5 * mt[msl])
        # decisions
        for i in range(topo.player_count):
            w = self.truth[i]
            parts = [y[lay.estimate(i, j)] for j in topo.in_neighbors[i]]
            x_plus = np.concatenate(parts) if parts else np.empty(0)
            s = float(w[0] + w[1:] @ x_plus) if x_plus.size else float(w[0])
            if inst.variant == games.SCALAR_LQ:
                b = np.array([s - float(inst.lq_a[i])])
            else:
                b = inst.q[i] - (inst.b0 + s) * inst.H[i]
            own_t = yt[lay.own(i)]
            dis = np.zeros(own_t.size)
            for j in topo.out_neighbors[i]:
                dis += own_t - yt[lay.estimate(j, i)]
            extra = rho * dis + self.coupling.A[i].T @ self.lam_of(lt, i)
            for j in topo.out_neighbors[i]:
                extra -= mt[self.maps.mu_slices[(i, j)]]
            b = b + 0.5 * extra - own_t / taus.tau1[i]
            y[lay.own(i)] = box_qp(self.hess[i], b, inst.boxes[i].lower,
                                   inst.boxes[i].upper, x0=own_t,
                                   lipschitz=self.hess_lip[i])
        # global multipliers (unprojected in this half)
        for i in range(topo.player_count):
            Ai = self.coupling.A[i]
            upd = (Ai @ y[lay.own(i)] - 0.5 * Ai @ yt[lay.own(i)]
                   - 0.5 * self.bm_z(zt, i) - self.coupling.budget_shares[i])
            lam[i * self.m:(i + 1) * self.m] = self.lam_of(lt, i) + taus.tau2[i] * upd
        # multiplier-consensus variables
        for (tail, head), e in self.edge_index.items():
            d_new = self.lam_of(lam, head) - self.lam_of(lam, tail)
            d_old = self.lam_of(lt, head) - self.lam_of(lt, tail)
            z[e * self.m:(e + 1) * self.m] = (self.z_of(zt, tail, head)
                                              + taus.tau4[head] * (d_new - 0.5 * d_old))
        # estimate-consensus multipliers
        for (j, i), msl in self.maps.mu_slices.items():
            gap_new = y[lay.estimate(i, j)] - y[lay.own(j)]
            gap_old = yt[lay.estimate(i, j)] - yt[lay.own(j)]
            mu[msl] = mt[msl] + taus.tau3[i] * (gap_new - 0.5 * gap_old)
        return psi

    def resolvent_b(self, psi_hat):
        """Local-constraint projection and positive-part multiplier step."""
        lay, topo, taus = self.lay, self.topo, self.taus
        rho = taus.rho
        yh, lh, mh, zh = self.split(psi_hat)
        psi = psi_hat.copy()
        y, lam, mu, z = self.split(psi)

        target = yh.copy()
        for i in range(topo.player_count):
            for j in topo.in_neighbors[i]:
                sl = lay.estimate(i, j)
                msl = self.maps.mu_slices[(j, i)]
                target[sl] = yh[sl] - taus.tau1[i] * (0.5 * rho * (yh[sl] - yh[lay.own(j)])
                                                      + 0.5 * mh[msl])
            own = yh[lay.own(i)]
            dis = np.zeros(own.size)
            for j in topo.out_neighbors[i]:
                dis += own - yh[lay.estimate(j, i)]
            extra = rho * dis + self.coupling.A[i].T @ self.lam_of(lh, i)
            for j in topo.out_neighbors[i]:
                extra -= mh[self.maps.mu_slices[(i, j)]]
            target[lay.own(i)] = own - taus.tau1[i] * 0.5 * extra
        # project each player's local view onto its affine constraint set
        if self.coupling.local_E is not None:
            for i in range(topo.player_count):
                E = self.coupling.local_E[i]
                if E is None or np.size(E) == 0:
                    continue
                idx = lay.local_view_indices(i)
                y[idx] = least_distance_affine(target[idx], np.atleast_2d(E),
                                               np.atleast_1d(self.coupling.local_d[i]))
            untouched = np.ones(self.ny, dtype=bool)
            for i in range(topo.player_count):
                E = self.coupling.local_E[i]
                if E is not None and np.size(E):
                    untouched[lay.local_view_indices(i)] = False
            y[untouched] = target[untouched]
        else:
            y[:] = target
        # multipliers
        for i in range(topo.player_count):
            Ai = self.coupling.A[i]
            upd = (Ai @ y[lay.own(i)] - 0.5 * Ai @ yh[lay.own(i)]
                   - 0.5 * self.bm_z(zh, i))
            lam[i * self.m:(i + 1) * self.m] = np.maximum(
                0.0, self.lam_of(lh, i) + taus.tau2[i] * upd)
        for (tail, head), e in self.edge_index.items():
            d_new = self.lam_of(lam, head) - self.lam_of(lam, tail)
            d_old = self.lam_of(lh, head) - self.lam_of(lh, tail)
            z[e * self.m:(e + 1) * self.m] = (self.z_of(zh, tail, head)
                                              + taus.tau4[head] * (d_new - 0.5 * d_old))
        for (j, i), msl in self.maps.mu_slices.items():
            gap_new = y[lay.estimate(i, j)] - y[lay.own(j)]
            gap_old = yh[lay.estimate(i, j)] - yh[lay.own(j)]
            mu[msl] = mh[msl] + taus.tau3[i] * (gap_new - 0.5 * gap_old)
        return psi


def dr_step(state: GnepState, engine: GnepEngine, gamma_k=None) -> GnepState:
    """One Douglas-Rachford sweep: A-resolvent, reflect, B-resolvent, average."""
    gamma = engine.taus.gamma if gamma_k is None else gamma_k
    if not 0.0 <= 2.0 * gamma <= 1.0:
        raise GammaOutOfRange(f"2*gamma must lie in [0,1], got {2 * gamma}")
    psi = engine.resolvent_a(state.psi_tilde)
    psi_hat = 2.0 * psi - state.psi_tilde
    psi_bar = engine.resolvent_b(psi_hat)
    psi_tilde = state.psi_tilde + 2.0 * gamma * (psi_bar - psi)
    return GnepState(psi_tilde, psi, state.k + 1)


def kkt_residual_gnep(state: GnepState, engine: GnepEngine) -> dict:
    """Residual report at the current solution estimate (A-resolvent output)."""
    from .oracle import gnep_kkt_residual
    inst, lay, topo = engine.instance, engine.lay, engine.topo
    y, lam, _, _ = engine.split(state.psi)
    x = np.asarray(engine.maps.R @ y)
    lam_mat = lam.reshape(topo.player_count, engine.m)
    lam_avg = lam_mat.mean(axis=0)
    rep = gnep_kkt_residual(inst, engine.coupling, x, np.maximum(0.0, lam_avg))
    y_gap = 0.0
    for i in range(topo.player_count):
        for j in topo.in_neighbors[i]:
            gap = y[lay.estimate(i, j)] - y[lay.own(j)]
            y_gap = max(y_gap, float(np.max(np.abs(gap))))
    lam_gap = float(np.max(np.abs(lam_mat - lam_avg))) if engine.m else 0.0
    local = 0.0
    if engine.coupling.local_E is not None:
        for i in range(topo.player_count):
            E = engine.coupling.local_E[i]
            if E is None or np.size(E) == 0:
                continue
            viol = np.atleast_2d(E) @ y[lay.local_view_indices(i)] \
                - np.atleast_1d(engine.coupling.local_d[i])
            local = max(local, float(np.max(np.maximum(0.0, viol), initial=0.0)))
    rep.update(consensus_y=y_gap, consensus_lambda=lam_gap, local_primal=local)
    return rep


def run_gnep(instance, coupling, maps, taus: GnepStepConfig, iters,
             tol=1e-10, state=None):
    """Iterate dr_step until the shadow iterate settles or the budget ends."""
    engine = GnepEngine(instance, coupling, maps, taus)
    if state is None:
        state = GnepState.zeros(engine.op)
    converged = False
    for _ in range(iters):
        new = dr_step(state, engine)
        if float(np.max(np.abs(new.psi_tilde - state.psi_tilde))) < tol:
            state = new
            converged = True
            break
        state = new
    return state, engine, converged
