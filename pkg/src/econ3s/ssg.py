"""Switching subgradient method: comparison baseline and inner prox solver.

At each iterate the method checks the freshest available constraint values.
If the largest one is below the feasibility tolerance it takes an objective
subgradient step, otherwise it steps along the most violated constraint's
subgradient with the adaptive length  violation / ||zeta||^2  capped at the
configured step; either way the result is projected back onto the set.

The same machinery solves the strongly convex proximal subproblem behind the
stationarity metric:

    min f(z) + rho_f ||z - c||^2   s.t.   g_i(z) + rho_g ||z - c||^2 <= 0.

That solve runs with exact oracles, fixed steps, tail averaging, and a
step-norm plateau stop; it is deterministic by construction.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
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
from .metrics import MetricRecord, RunTrace, constraint_violation

__all__ = ["SsgConfig", "run_ssg", "solve_prox_subproblem"]

log = logging.getLogger(__name__)

FIXED = "fixed"
POLYAK = "polyak"


@dataclass
class SsgConfig:
    """Baseline parameters.

    ``check_batch`` of None checks feasibility on the exact constraint values
    (finite-sum deterministic mode); otherwise a minibatch mean of that size
    is used.  ``step_rule`` "polyak" takes adaptive objective steps
    (f(x) - f_star) / ||zeta||^2 and needs ``f_star``; the default is a fixed
    objective step.  Constraint steps are always the capped adaptive rule.
    """

    feas_tol: float = 1e-3
    alpha: float = 1e-3
    step_rule: str = FIXED
    f_star: Optional[float] = None
    check_batch: Optional[int] = None
    batch_f: Optional[int] = None
    batch_g: Optional[int] = None
    budget_dp_g: Optional[float] = None
    max_iters: Optional[int] = None
    svio_stop: Optional[float] = None
    svio_every: Optional[int] = None
    svio_tol: float = 1e-2
    record_every: int = 1
    seed: int = 0
    x0: Optional[Array] = None
    clock: Optional[Callable[[], float]] = None

    def __post_init__(self):
        if self.feas_tol <= 0:
            raise ValueError("feasibility tolerance must be positive")
        if self.alpha <= 0:
            raise ValueError("step size must be positive")
        if self.step_rule not in (FIXED, POLYAK):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == POLYAK and self.f_star is None:
            raise ValueError("polyak objective steps need f_star")
        if self.budget_dp_g is None and self.max_iters is None:
            raise ValueError("need a budget or an iteration cap")

    def effective_svio_every(self) -> int:
        if self.svio_every is not None:
            return self.svio_every
        if self.budget_dp_g is not None:
            return max(1, int(self.budget_dp_g / 100))
        return 100

    def echo(self, p: ProblemInstance) -> dict:
        d = dataclasses.asdict(self)
        d.pop("clock", None)
        d.pop("x0", None)
        d["x0"] = "config" if self.x0 is not None else "problem-default"
        d["problem"] = p.name
        return d


def _constraint_estimate(p, x, cfg, rng) -> tuple[Array, int]:
    """Current constraint values and the raw sample count the check touched."""
    if cfg.check_batch is None:
        if p.exact_constraints is None:
            raise ValueError("exact feasibility checks need an exact constraint oracle")
        return as_vector(p.exact_constraints(x), p.m), p.constraint_population or 0
    b = BatchSpec.of(cfg.check_batch)
    return eval_constraints(p, x, b, rng), cfg.check_batch * p.constraint_batch_cost


def run_ssg(p: ProblemInstance, cfg: SsgConfig) -> RunTrace:
    """Run the switching baseline until budget, iteration cap, or SVio stop.

    The trace annotation ``step_kinds`` holds one of "f"/"g" per iteration,
    recording which branch fired.
    """
    from .metrics import stationarity_violation

    root = np.random.SeedSequence(cfg.seed)
    sf, sg, sc = root.spawn(3)
    rng_f, rng_g, rng_check = (np.random.default_rng(s) for s in (sf, sg, sc))
    x = cfg.x0 if cfg.x0 is not None else p.start_point()
    x = project(p.feasible_set, as_vector(x, p.dim))
    clock = cfg.clock or time.perf_counter
    t0 = clock()
    samples_f = 0
    samples_g = 0
    k = 0
    trace = RunTrace(config_echo=cfg.echo(p), seed=cfg.seed)
    kinds: list[str] = []
    trace.annotations["step_kinds"] = kinds
    svio_every = cfg.effective_svio_every()
    stop = None

    from fractions import Fraction

    def dp_f():
        return Fraction(samples_f, p.objective_population or 1)

    def dp_g():
        return Fraction(samples_g, p.constraint_population or 1)

    def record(svio=None):
        g = p.exact_constraints(x) if p.exact_constraints is not None else None
        trace.records.append(MetricRecord(
            k=k, alpha=cfg.alpha,
            fv=float(p.objective_value(x)),
            cvio=constraint_violation(g) if g is not None else float("nan"),
            svio=svio, dp_f=dp_f(), dp_g=dp_g(),
            wall_ms=(clock() - t0) * 1e3,
        ))

    while True:
        if cfg.max_iters is not None and k >= cfg.max_iters:
            stop = "max-iters"
            break
        if cfg.budget_dp_g is not None and dp_g() >= cfg.budget_dp_g:
            stop = "budget"
            break

        svio_now = cfg.svio_stop is not None and k > 0 and k % svio_every == 0
        if svio_now:
            sv = stationarity_violation(p, x, tol=cfg.svio_tol)
            record(svio=sv)
            if sv < cfg.svio_stop:
                stop = "svio-threshold"
                break
        elif k % cfg.record_every == 0:
            record()

        ghat, cost = _constraint_estimate(p, x, cfg, rng_check)
        samples_g += cost
        imax = int(np.argmax(ghat))
        if ghat[imax] <= cfg.feas_tol:
            kinds.append("f")
            if cfg.batch_f is None:
                fb = BatchSpec.full(p.objective_population)
                samples_f += p.objective_population
            else:
                fb = BatchSpec.of(cfg.batch_f)
                samples_f += cfg.batch_f * p.objective_batch_cost
            zeta = sample_subgrad_f(p, x, fb, rng_f)
            if cfg.step_rule == POLYAK:
                fx = float(p.objective_value(x))
                samples_f += p.objective_population or 1
                nz = float(zeta @ zeta)
                eta = (fx - cfg.f_star) / nz if nz > 0 else cfg.alpha
                eta = max(eta, 0.0)
            else:
                eta = cfg.alpha
        else:
            kinds.append("g")
            if cfg.batch_g is None:
                gb = BatchSpec.full(p.constraint_population)
                sizes = p.constraint_component_sizes
                samples_g += sizes[imax] if sizes else p.constraint_population
            else:
                gb = BatchSpec.of(cfg.batch_g)
                samples_g += cfg.batch_g
            zeta = sample_subgrad_g(p, x, imax, gb, rng_g)
            nz = float(zeta @ zeta)
            eta = min(cfg.alpha, float(ghat[imax]) / nz) if nz > 0 else cfg.alpha
        x = project(p.feasible_set, x - eta * zeta)
        k += 1

    if not trace.records or trace.records[-1].k != k:
        record()
    trace.stop_reason = stop or "done"
    trace.annotations["iterations"] = k
    return trace


def _shifted_problem(p: ProblemInstance, center: Array) -> ProblemInstance:
    """Proximally regularized copy of the problem around ``center``.

    Oracles are the exact ones (full subgradients, exact values); the copy is
    deterministic regardless of the parent's noise.
    """
    if p.exact_constraints is None:
        raise ValueError("the proximal subproblem needs an exact constraint oracle")
    c = center
    rf, rg = p.rho_f, p.rho_g

    def exact_f_grad(x):
        if p.objective_subgrad_exact is not None:
            return p.objective_subgrad_exact(x)
        if p.objective_population is None:
            raise ValueError("generic-stream objective needs objective_subgrad_exact")
        return p.objective_subgrad(x, BatchSpec.full(p.objective_population), None)

    def exact_g_grad(x, i):
        if p.constraint_subgrad_exact is not None:
            return p.constraint_subgrad_exact(x, i)
        if p.constraint_population is None:
            raise ValueError("generic-stream constraints need constraint_subgrad_exact")
        return p.constraint_subgrad(x, i, BatchSpec.full(p.constraint_population), None)

    def f_val(x):
        d = x - c
        return float(p.objective_value(x) + rf * (d @ d))

    def f_grad(x, batch, rng):
        return exact_f_grad(x) + 2.0 * rf * (x - c)

    def g_vals(x, batch, rng):
        d = x - c
        return as_vector(p.exact_constraints(x), p.m) + rg * float(d @ d)

    def g_exact(x):
        return g_vals(x, None, None)

    def g_grad(x, i, batch, rng):
        return as_vector(exact_g_grad(x, i), p.dim) + 2.0 * rg * (x - c)

    return ProblemInstance(
        dim=p.dim, m=p.m, feasible_set=p.feasible_set,
        objective_value=f_val, objective_subgrad=f_grad,
        constraint_values=g_vals, constraint_subgrad=g_grad,
        exact_constraints=g_exact,
        l_f=p.l_f, l_g=p.l_g, rho_f=0.0, rho_g=0.0,
        constraint_population=1, objective_population=1,
        name=p.name + "+prox",
    )


def solve_prox_subproblem(p: ProblemInstance, center, tol: float = 1e-2,
                          budget: int = 5000, alpha: Optional[float] = None,
                          feas_tol: Optional[float] = None) -> Array:
    """Approximately solve the proximal subproblem around ``center``.

    Fixed-step switching subgradient iterations with tail averaging; stops
    once the tail average moves less than tol/2 between windows (a step-norm
    plateau) or the iteration budget runs out, whichever is first.  On budget
    exhaustion the best tail average found so far is returned and a warning
    is logged.  Never returns a point worse than ``center`` for the
    subproblem (objective and violation compared directly).
    """
    c = as_vector(center, p.dim)
    sub = _shifted_problem(p, c)
    step = alpha if alpha is not None else tol / 10.0
    ftol = feas_tol if feas_tol is not None else tol / 10.0
    window = 50

    x = c.copy()
    acc = np.zeros_like(x)
    count = 0
    prev_avg = None
    plateaued = False
    for j in range(budget):
        g = sub.exact_constraints(x)
        imax = int(np.argmax(g))
        if g[imax] <= ftol:
            zeta = sub.objective_subgrad(x, None, None)
            eta = step
        else:
            zeta = sub.constraint_subgrad(x, imax, None, None)
            nz = float(zeta @ zeta)
            eta = min(step, float(g[imax]) / nz) if nz > 0 else step
        x = project(p.feasible_set, x - eta * zeta)
        acc += x
        count += 1
        if count == window:
            avg = acc / window
            if prev_avg is not None and np.linalg.norm(avg - prev_avg) < tol / 2.0:
                prev_avg = avg
                plateaued = True
                break
            prev_avg = avg
            acc = np.zeros_like(x)
            count = 0
    if not plateaued:
        log.warning("prox subproblem: no plateau within %d iterations (tol %g)", budget, tol)

    cand = prev_avg if prev_avg is not None else x

    def score(z):
        g = sub.exact_constraints(z)
        return (constraint_violation(g), sub.objective_value(z))

    viol_cand, obj_cand = score(cand)
    viol_center, obj_center = score(c)
    if viol_cand <= viol_center + ftol and obj_cand <= obj_center + 1e-9:
        return cand
    if viol_cand < viol_center - ftol:
        return cand
    return c.copy()
