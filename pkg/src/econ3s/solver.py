"""Penalized projected subgradient loop with variance-reduced constraint estimates.

Each iteration k refreshes or recursively updates the constraint estimate u,
then takes the step

    x <- Proj( x - alpha_k * ( zeta_f + beta * sum_i clamp(u_i/nu, 0, 1) * zeta_{g_i} ) )

where the zetas are sampled subgradients.  Constraint components whose clamp
weight is exactly zero are skipped entirely (no oracle call, no data-pass
charge).  The deterministic variant is q = 1 with full-population batches and
full subgradients; the stochastic variant uses a large refresh batch, small
recursive batches of size q = ceil(sqrt(S1)), and size-1 subgradient draws.

Data passes: DP(g) counts constraint samples drawn divided by the constraint
population (a recursive pair evaluation is charged once, since the batch is
drawn once); DP(f) counts objective draws likewise.  Diagnostics are free.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .core import (
    Array,
    BatchSpec,
    ProblemInstance,
    as_vector,
    eval_constraints,
    project,
    sample_subgrad_f,
    sample_subgrad_g,
)
from .metrics import MetricRecord, RunTrace, constraint_violation, stationarity_violation
from .penalty import PenaltyConfig, huber_weight
from .spider import SpiderState, estimator_error, spider_reset, spider_step

__all__ = ["SolverConfig", "SolverState", "step_size", "econ_step", "run_3s_econ"]

CONSTANT = "constant"
DECAYING = "decaying"


def step_size(k: int, q: int, rule: str, c: float) -> float:
    """Step size at iteration k: the constant c, or c / ceil(sqrt(k/q)).

    The decaying rule returns c itself while k < q (the ceiling would be 0).
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if rule == CONSTANT:
        return c
    if rule == DECAYING:
        return c / max(1, math.ceil(math.sqrt(k / q)))
    raise ValueError(f"unknown step rule {rule!r}")


@dataclass
class SolverConfig:
    """Run parameters.  ``batch_f``/``batch_g`` of None mean full population.

    ``budget_dp_g`` caps the constraint data passes; ``svio_stop`` terminates
    once the stationarity violation falls below it, checked every
    ``svio_every`` iterations (default: budget/100 iterations).  ``clock``
    is injectable; pass ``lambda: 0.0`` for byte-reproducible traces.
    """

    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    s1: int = 1
    s2: int = 1
    q: int = 1
    step_rule: str = CONSTANT
    alpha: float = 1e-2
    batch_f: Optional[int] = None
    batch_g: Optional[int] = None
    budget_dp_g: Optional[float] = None
    max_iters: Optional[int] = None
    svio_stop: Optional[float] = None
    svio_every: Optional[int] = None
    svio_tol: float = 1e-2
    svio_inner_budget: int = 5000
    record_every: int = 1
    seed: int = 0
    x0: Optional[Array] = None
    clock: Optional[Callable[[], float]] = None

    def __post_init__(self):
        if min(self.s1, self.s2, self.q) < 1:
            raise ValueError("S1, S2, q must be >= 1")
        if self.step_rule not in (CONSTANT, DECAYING):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.alpha <= 0:
            raise ValueError("step constant must be positive")
        if self.budget_dp_g is not None and self.budget_dp_g <= 0:
            raise ValueError("budget must be positive")
        if self.svio_stop is not None and self.svio_stop <= 0:
            raise ValueError("stop threshold must be positive")
        if self.budget_dp_g is None and self.max_iters is None:
            raise ValueError("need a budget or an iteration cap")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def effective_svio_every(self) -> int:
        if self.svio_every is not None:
            return self.svio_every
        if self.budget_dp_g is not None:
            return max(1, int(self.budget_dp_g / 100))
        return 100

    @staticmethod
    def deterministic(p: ProblemInstance, **kw) -> "SolverConfig":
        """Full-batch variant: q = 1, S1 = S2 = N, full subgradients, constant step."""
        if not p.finite_sum:
            raise ValueError("deterministic variant needs a finite-sum constraint")
        n = p.constraint_population
        kw.setdefault("alpha", 1e-2)
        kw.setdefault("step_rule", CONSTANT)
        return SolverConfig(s1=n, s2=n, q=1, batch_f=None, batch_g=None, **kw)

    @staticmethod
    def stochastic(p: ProblemInstance, **kw) -> "SolverConfig":
        """Sampled variant: S1 = N, S2 = q = ceil(sqrt(N)), size-1 subgradients,
        decaying step c / ceil(sqrt(k/q))."""
        if not p.finite_sum:
            raise ValueError("the S1 = N default needs a finite-sum constraint; "
                             "set S1 explicitly for generic streams")
        n = p.constraint_population
        r = math.ceil(math.sqrt(n))
        kw.setdefault("alpha", 1e-2)
        kw.setdefault("step_rule", DECAYING)
        kw.setdefault("batch_f", 1)
        kw.setdefault("batch_g", 1)
        return SolverConfig(s1=n, s2=r, q=r, **kw)

    def echo(self, p: ProblemInstance) -> dict:
        return {
            "problem": p.name,
            "beta": self.penalty.beta,
            "nu": self.penalty.nu,
            "s1": self.s1,
            "s2": self.s2,
            "q": self.q,
            "step_rule": self.step_rule,
            "alpha": self.alpha,
            "batch_f": self.batch_f,
            "batch_g": self.batch_g,
            "budget_dp_g": self.budget_dp_g,
            "max_iters": self.max_iters,
            "svio_stop": self.svio_stop,
            "svio_every": self.effective_svio_every() if self.svio_stop else None,
            "svio_tol": self.svio_tol,
            "record_every": self.record_every,
            "seed": self.seed,
            "x0": "config" if self.x0 is not None else "problem-default",
        }


@dataclass
class SolverState:
    """Mutable loop state: iterate, estimator, counters, and rng streams.

    Sample counters are raw integers; data passes are derived as exact
    fractions of the population sizes on demand.
    """

    x: Array
    k: int = 0
    spider: Optional[SpiderState] = None
    samples_f: int = 0
    samples_g: int = 0
    rng_f: np.random.Generator = None
    rng_g: np.random.Generator = None
    rng_batch: np.random.Generator = None

    def dp_f(self, p: ProblemInstance) -> Fraction:
        return Fraction(self.samples_f, p.objective_population or 1)

    def dp_g(self, p: ProblemInstance) -> Fraction:
        return Fraction(self.samples_g, p.constraint_population or 1)


def _new_state(p: ProblemInstance, cfg: SolverConfig) -> SolverState:
    root = np.random.SeedSequence(cfg.seed)
    sf, sg, sb = root.spawn(3)
    x0 = cfg.x0 if cfg.x0 is not None else p.start_point()
    x0 = project(p.feasible_set, as_vector(x0, p.dim))
    return SolverState(
        x=x0,
        rng_f=np.random.default_rng(sf),
        rng_g=np.random.default_rng(sg),
        rng_batch=np.random.default_rng(sb),
    )


def _f_batch(p: ProblemInstance, size: Optional[int]) -> tuple[BatchSpec, int]:
    """Objective batch spec plus the raw sample count it touches."""
    if size is None:
        if p.objective_population is None:
            raise ValueError("full objective batch on a generic stream")
        return BatchSpec.full(p.objective_population), p.objective_population
    return BatchSpec.of(size), size * p.objective_batch_cost


def _g_subgrad_batch(p: ProblemInstance, i: int, size: Optional[int]) -> tuple[BatchSpec, int]:
    if size is None:
        if p.constraint_population is None:
            raise ValueError("full constraint batch on a generic stream")
        sizes = p.constraint_component_sizes
        n_i = sizes[i] if sizes is not None else p.constraint_population
        return BatchSpec.full(p.constraint_population), n_i
    return BatchSpec.of(size), size


def econ_step(state: SolverState, cfg: SolverConfig, p: ProblemInstance) -> SolverState:
    """One projected penalized subgradient update from x^(k) to x^(k+1).

    Requires the estimator to be current for iteration k.  Zero-weight
    constraint components are skipped without touching the oracles or the
    sample counters.
    """
    if state.spider is None or state.spider.k != state.k:
        raise ValueError("estimator state is not current for this iteration")
    alpha = step_size(state.k, cfg.q, cfg.step_rule, cfg.alpha)
    beta, nu = cfg.penalty.beta, cfg.penalty.nu

    fb, f_cost = _f_batch(p, cfg.batch_f)
    direction = sample_subgrad_f(p, state.x, fb, state.rng_f).copy()
    state.samples_f += f_cost

    weights = huber_weight(state.spider.u, nu)
    weights = np.atleast_1d(weights)
    for i in range(p.m):
        w = weights[i]
        if w == 0.0:
            continue
        gb, g_cost = _g_subgrad_batch(p, i, cfg.batch_g)
        zg = sample_subgrad_g(p, state.x, i, gb, state.rng_g)
        state.samples_g += g_cost
        direction += (beta * w) * zg

    state.x = project(p.feasible_set, state.x - alpha * direction)
    state.k += 1
    return state


def _advance_spider(state: SolverState, cfg: SolverConfig, p: ProblemInstance):
    """Refresh or recursively update the estimate for the current index."""
    if state.k % cfg.q == 0:
        state.spider = spider_reset(p, state.x, cfg.s1, state.rng_batch,
                                    q=cfg.q, s2=cfg.s2, k=state.k)
        if p.finite_sum and cfg.s1 == p.constraint_population:
            state.samples_g += p.constraint_population
        else:
            state.samples_g += cfg.s1 * p.constraint_batch_cost
    else:
        spider_step(p, state.spider, state.x, cfg.s2, state.rng_batch)
        # the pair shares one drawn batch, charged once
        state.samples_g += cfg.s2 * p.constraint_batch_cost


def _exact_g(p: ProblemInstance, x) -> Optional[Array]:
    if p.exact_constraints is None:
        return None
    return as_vector(p.exact_constraints(x), p.m)


def run_3s_econ(p: ProblemInstance, cfg: SolverConfig) -> RunTrace:
    """Run the solver until the budget, iteration cap, or SVio stop fires.

    The trace records FV and CVio from the exact oracles (when available) at
    the configured cadence, plus the squared estimator error r_g as an
    annotation.  Runs are bit-reproducible for a fixed seed and config.
    """
    state = _new_state(p, cfg)
    clock = cfg.clock or time.perf_counter
    t0 = clock()
    trace = RunTrace(config_echo=cfg.echo(p), seed=cfg.seed)
    trace.annotations["r_g"] = []
    svio_every = cfg.effective_svio_every()
    stop = None

    def record(svio=None, alpha=None):
        g = _exact_g(p, state.x)
        cv = constraint_violation(g) if g is not None else float("nan")
        if g is not None and state.spider is not None and state.spider.k == state.k:
            trace.annotations["r_g"].append((state.k, estimator_error(state.spider, g)))
        trace.records.append(MetricRecord(
            k=state.k,
            alpha=alpha if alpha is not None else step_size(state.k, cfg.q, cfg.step_rule, cfg.alpha),
            fv=float(p.objective_value(state.x)),
            cvio=cv,
            svio=svio,
            dp_f=state.dp_f(p),
            dp_g=state.dp_g(p),
            wall_ms=(clock() - t0) * 1e3,
        ))

    while True:
        if cfg.max_iters is not None and state.k >= cfg.max_iters:
            stop = "max-iters"
            break
        if cfg.budget_dp_g is not None and state.dp_g(p) >= cfg.budget_dp_g:
            stop = "budget"
            break
        _advance_spider(state, cfg, p)

        svio_now = (cfg.svio_stop is not None and state.k > 0
                    and state.k % svio_every == 0)
        if svio_now:
            sv = stationarity_violation(p, state.x, tol=cfg.svio_tol,
                                        budget=cfg.svio_inner_budget)
            record(svio=sv)
            if sv < cfg.svio_stop:
                stop = "svio-threshold"
                break
        elif state.k % cfg.record_every == 0:
            record()

        econ_step(state, cfg, p)

    if not trace.records or trace.records[-1].k != state.k:
        record()
    trace.stop_reason = stop or "done"
    trace.annotations["iterations"] = state.k
    return trace
