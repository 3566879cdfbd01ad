"""What happens when the per-player subproblem is only solved approximately.

Each resolvent sweep asks every player for a box-constrained quadratic
minimization.  Instead of the closed-form solve, a stochastic projected
(sub)gradient method runs for a growing budget T(k) = ceil(0.01 k) + 10
steps.  The last-iterate error of that inner method decays like C/T, so
the outer iteration still converges -- just with a budget-controlled bias.
"""

import numpy as np

from netgames import inexact
from netgames.games import BoxSet


def main():
    box = BoxSet([0.0], [10.0])

    print("inner budget schedule:")
    for k in (0, 100, 1000, 10_000, 20_000):
        print(f"  outer k={k:6d} -> T={inexact.schedule_T(k):4d}")

    # deterministic quadratic 0.5 (x-1)^2: the last iterate misses x*=1
    # by about C/T
    print("\nlast-iterate error on 0.5*(x-1)^2, tau=0.5:")
    for T in (50, 100, 200, 400):
        x = inexact.psg_solve(lambda x, t: x - 1.0, T, 0.5, box, np.array([0.0]))
        err = abs(float(x[0]) - 1.0)
        print(f"  T={T:4d}  |x_T - x*|={err:9.3e}   T*err={T * err:.4f}")

    # with zero-mean gradient noise the same rate holds on average
    rng = np.random.default_rng(0)
    print("\nsame, with unit-variance gradient noise (mean of 200 repeats):")
    for T in (50, 100, 200, 400):
        errs = []
        for _ in range(200):
            x = inexact.psg_solve(lambda x, t: x - 1.0 + rng.normal(),
                                  T, 0.5, box, np.array([0.0]))
            errs.append(abs(float(x[0]) - 1.0))
        print(f"  T={T:4d}  mean error={np.mean(errs):9.3e}")


if __name__ == "__main__":
    main()
