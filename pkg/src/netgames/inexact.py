"""Projected stochastic subgradient inner solver for the best-response step.

Replaces the closed-form box-QP solve of the augmented best response with
``T`` projected steps ``x <- proj(x - kappa_t g_t)``, ``kappa_t = 2 tau_i0/(t+2)``,
where ``g_t`` is an unbiased stochastic gradient of the scenario augmented
objective (fresh payoff noise drawn every inner step).
"""

from __future__ import annotations

import math

import numpy as np

from . import games
from .errors import BadRule

DEFAULT_RULE = ("default",)


def schedule_T(k, rule=DEFAULT_RULE) -> int:
    """Inner iteration budget at outer iteration k.

    The default rule is ``ceil(0.01 k) + 10``; the general family is
    ``max(1, ceil(coeff * k**alpha3))`` with ``alpha3 >= 1``.
    """
    if k < 0:
        raise BadRule("k must be nonnegative")
    if rule[0] == "default":
        return math.ceil(0.01 * k) + 10
    if rule[0] == "power":
        alpha3 = float(rule[1])
        coeff = float(rule[2]) if len(rule) > 2 else 1.0
        if alpha3 < 1.0:
            raise BadRule(f"inner budget exponent must be >= 1, got {alpha3}")
        return max(1, math.ceil(coeff * k ** alpha3))
    raise BadRule(f"unknown inner budget rule {rule[0]!r}")


def psg_solve(gradient, T, tau_i0, box, init):
    """Run exactly T projected (sub)gradient steps from ``init``.

    ``gradient`` maps (x, t) to a stochastic gradient sample; the last
    iterate is returned (no averaging).
    """
    if T < 1:
        raise BadRule("T must be at least 1")
    x = box.project(np.asarray(init, dtype=float))
    for t in range(T):
        kappa = 2.0 * tau_i0 / (t + 2.0)
        x = box.project(x - kappa * gradient(x, t))
    return x


class PsgInner:
    """Adapter plugging the stochastic inner solver into the seeker.

    The seeker hands over the deterministic QP data (A, b) of the augmented
    best response; the noise of the scenario objective enters the gradient
    additively through the aggregate, so an unbiased sample is
    ``A x + b + xi * noise_dir`` with a fresh bounded noise draw per step.
    """

    def __init__(self, instance, step_config, rngs, T=10):
        self.instance = instance
        self.tau0 = step_config.tau0
        self.rngs = rngs   # one per player
        self.T = T

    def set_budget(self, T):
        self.T = int(T)

    def noise_direction(self, i):
        if self.instance.variant == games.SCALAR_LQ:
            return np.ones(1)
        return -self.instance.H[i]

    def solve(self, i, A, b, lo, hi, x0):
        direction = self.noise_direction(i)
        rng = self.rngs[i]
        inst = self.instance

        def grad(x, _t):
            xi = games.draw_noise(inst, rng)
            return A @ x + b + xi * direction

        box = games.BoxSet(lo, hi)
        return psg_solve(grad, self.T, self.tau0[i], box, x0)
