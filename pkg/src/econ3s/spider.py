"""Recursive variance-reduced estimator of the constraint-value vector.

Along a path x^(0), x^(1), ... the estimate u^(k) of g(x^(k)) is refreshed
from a large batch of S1 samples every q iterations and updated recursively

    u^(k) = u^(k-1) + g(x^(k), B_k) - g(x^(k-1), B_k),   |B_k| = S2,

in between.  Both points of the correction term are evaluated on the same
drawn batch; the correlation is what shrinks the estimator variance, so the
implementation replays one rng stream for the pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Array, BatchSpec, FULL_POPULATION, ProblemInstance, as_vector, eval_constraints

__all__ = ["SpiderState", "spider_reset", "spider_step", "estimator_error"]


@dataclass
class SpiderState:
    """Current estimate u of g(x^(k)), the iteration index, and the cadence.

    The reset cadence is tracked here: resets are legal only at indices with
    k % q == 0 and recursive steps only elsewhere.  Violations raise rather
    than silently resetting.
    """

    u: Array
    k: int
    s1: int
    s2: int
    q: int
    last_point: Array

    def __post_init__(self):
        if min(self.s1, self.s2, self.q) < 1:
            raise ValueError("S1, S2, q must all be >= 1")
        if self.k < 0:
            raise ValueError("iteration index must be nonnegative")


def _full_batch(p: ProblemInstance) -> BatchSpec:
    return BatchSpec.full(p.constraint_population)


def spider_reset(p: ProblemInstance, x, s1: int, rng,
                 q: int = 1, s2: int | None = None, k: int = 0) -> SpiderState:
    """Large-batch refresh u = g(x, B) with |B| = s1, anchored at index k.

    For a finite sum, s1 equal to the population selects the full-population
    batch, making the reset exact.  k must be a reset index (k % q == 0).
    """
    v = as_vector(x, p.dim)
    if k % q != 0:
        raise ValueError(f"cadence violation: reset at k={k} with q={q}")
    if p.finite_sum and s1 == p.constraint_population:
        batch = _full_batch(p)
    else:
        batch = BatchSpec.of(s1)
    u = eval_constraints(p, v, batch, rng)
    return SpiderState(u=u, k=k, s1=s1, s2=s2 if s2 is not None else s1, q=q,
                       last_point=v.copy())


def spider_step(p: ProblemInstance, state: SpiderState, x_new, s2: int, rng) -> SpiderState:
    """Recursive update to the next index using one shared batch for the pair."""
    v = as_vector(x_new, p.dim)
    k_next = state.k + 1
    if k_next % state.q == 0:
        raise ValueError(
            f"cadence violation: k={k_next} is a reset index (q={state.q}); call spider_reset"
        )
    if p.finite_sum and s2 == p.constraint_population:
        batch = _full_batch(p)
    else:
        batch = BatchSpec.of(s2)
    # Replay one stream so both points see identical samples.
    seed = int(rng.integers(0, 2 ** 63 - 1))
    g_new = eval_constraints(p, v, batch, np.random.default_rng(seed))
    g_prev = eval_constraints(p, state.last_point, batch, np.random.default_rng(seed))
    state.u = state.u + g_new - g_prev
    state.k = k_next
    state.s2 = s2
    state.last_point = v.copy()
    return state


def estimator_error(state: SpiderState, g_exact) -> float:
    """Squared estimation error ||u - g(x^(k))||^2 against the exact values."""
    g = as_vector(g_exact, state.u.shape[0])
    d = state.u - g
    return float(d @ d)
