"""Firms that do not know how rivals' output moves their price, learning it.

A sampled multi-product market over a circle-with-chords network.  Every
round each firm perturbs its planned production, observes only its own
realized (noisy) profit, inverts that observation into the aggregate acting
on it, and refits a box-constrained least-squares estimate of the unknown
aggregate parameters -- while the equilibrium-seeking iteration keeps
running on the current estimates.
"""

from netgames.harness import RunConfig, run_algorithm1, summarize

DOC = {
    "mode": "learn",
    "seed": 7,
    "iters": 6000,
    "metrics_every": 500,
    "instance": {"generator": {"seed": 0, "player_count": 10,
                               "chord_count": 10, "noise_sd": 0.5,
                               "param_slack": 4.0}},
    "step": {"rho": 0.1, "gamma": {"mode": "power", "param": 0.501}},
    # drop the pre-exploration start-up transient from the slope estimate
    "estimator": {"diagnostics_window": [250, 6000]},
}


def main():
    result = run_algorithm1(RunConfig(DOC))
    print("   k   dist-to-equilibrium   weight-err   min-gram-eig")
    for row in result.rows:
        flag = " (warmup)" if row.warmup else ""
        print(f"{row.k:6d}   {row.dist_sne:14.4e}   {row.weight_err:10.4f}"
              f"   {row.min_gram_eig:10.4e}{flag}")
    s = summarize(result)
    print("log-log decay slope of the mean parameter error:",
          round(s["decay"]["slope"], 3))
    print("skipped (non-invertible) observations:", s["skips"])


if __name__ == "__main__":
    main()
