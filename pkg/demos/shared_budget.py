"""Three players sharing one resource budget, no coordinator.

The coupling constraint sum_i x_i <= 1.2 is split across the players; each
holds a private copy of the shared shadow price and a Douglas-Rachford
splitting drives those copies to consensus while the decisions settle at
the variational equilibrium.  At the end the split of the budget between
players does not matter -- only its total does.
"""

import numpy as np

from netgames import gnep, oracle
from netgames.games import make_scalar_lq
from netgames.topology import build_structural_maps


def solve(instance, maps, coupling):
    taus = gnep.choose_gnep_taus(maps, coupling, rho=1.0)
    state, engine, ok = gnep.run_gnep(instance, coupling, maps, taus,
                                      20_000, tol=1e-12)
    x = np.array([float(engine.split(state.psi)[0][engine.lay.own(i)][0])
                  for i in range(3)])
    return x, gnep.kkt_residual_gnep(state, engine), ok


def main():
    inst = make_scalar_lq(K=[0.25] * 3, a=[1.0] * 3,
                          w=np.ones((3, 3)) - np.eye(3))
    maps = build_structural_maps(inst.topology, inst.layout)
    A = [np.array([[1.0]])] * 3

    coupling = gnep.CouplingSpec.equal_split(A, np.array([1.2]), 3)
    x, report, ok = solve(inst, maps, coupling)
    print("equal split  -> x =", np.round(x, 6), " converged:", ok)
    print("  lambda consensus gap:", f"{report['consensus_lambda']:.2e}",
          " complementarity:", f"{report['complementarity']:.2e}")

    sol = oracle.gnep_kkt_oracle(inst, coupling)
    print("centralized KKT oracle -> x =", np.round(sol.x, 6),
          " shadow price =", np.round(sol.lam, 6))

    for shares in ([1.0, 0.1, 0.1], [0.0, 0.0, 1.2]):
        coupling = gnep.CouplingSpec(A, [np.array([s]) for s in shares])
        x2, _, _ = solve(inst, maps, coupling)
        print(f"split {shares} -> x = {np.round(x2, 6)}"
              f"  (max dev {np.max(np.abs(x2 - x)):.2e})")


if __name__ == "__main__":
    main()
