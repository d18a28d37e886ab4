"""Evaluation metrics, data-pass accounting types, and trace serialization.

FV is the raw objective value f(x).  CVio is the l1 norm of the positive
part of the exact constraint values.  SVio solves the strongly convex
proximal subproblem

    min f(z) + rho_f ||z - x||^2   s.t.  g_i(z) + rho_g ||z - x||^2 <= 0

over the feasible set and reports ||z_hat - x||; a small value certifies
near-stationarity for the original constrained problem.  The Moreau-envelope
gradient norm 2 rho ||x - prox(x)|| is computed by dense search and is only
meant for small closed-form instances.

Diagnostic evaluations (FV, CVio, SVio) never touch the data-pass counters;
those count oracle draws made by the algorithms themselves.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from .core import Array, L2_BALL, LINF_BOX, ProblemInstance, as_vector, project
from .penalty import PenaltyConfig, derived_moduli, huber_value

__all__ = [
    "MetricRecord",
    "RunTrace",
    "constraint_violation",
    "stationarity_violation",
    "moreau_gradient_norm",
    "penalized_prox",
    "emit_trace",
    "read_trace",
]

TRACE_HEADER = ("k", "alpha", "fv", "cvio", "svio", "dp_f", "dp_g", "wall_ms")


@dataclass
class MetricRecord:
    """One evaluated point of a run.  dp_* are fractions of a full data pass."""

    k: int
    alpha: float
    fv: float
    cvio: float
    svio: Optional[float]
    dp_f: Fraction
    dp_g: Fraction
    wall_ms: float


@dataclass
class RunTrace:
    """Ordered metric records plus enough config echo to re-run identically."""

    records: List[MetricRecord] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    seed: int = 0
    stop_reason: str = ""
    annotations: dict = field(default_factory=dict)

    @property
    def final(self) -> MetricRecord:
        if not self.records:
            raise ValueError("empty trace")
        return self.records[-1]


def constraint_violation(g_vals) -> float:
    """|| [g]_+ ||_1, the summed positive parts."""
    g = as_vector(g_vals)
    return float(np.sum(np.maximum(g, 0.0)))


def stationarity_violation(p: ProblemInstance, x, tol: float = 1e-2,
                           budget: int = 5000, inner_alpha: Optional[float] = None) -> float:
    """Distance to an approximate solution of the proximal subproblem at x.

    The subproblem is handed to the switching-subgradient inner solver at the
    given tolerance (step-norm plateau).  Finite-sum problems are solved with
    exact oracles; the subproblem itself is deterministic.
    """
    from .ssg import solve_prox_subproblem

    v = as_vector(x, p.dim)
    x_hat = solve_prox_subproblem(p, v, tol=tol, budget=budget, alpha=inner_alpha)
    return float(np.linalg.norm(x_hat - v))


def _penalized_values(p: ProblemInstance, cfg: PenaltyConfig, Z: Array) -> Array:
    """F(z) = f(z) + beta * sum_i H(g_i(z)) over rows of Z, vectorized if possible."""
    if p.objective_value_batch is not None and p.exact_constraints_batch is not None:
        f = np.asarray(p.objective_value_batch(Z), dtype=np.float64)
        g = np.asarray(p.exact_constraints_batch(Z), dtype=np.float64)
    else:
        if p.exact_constraints is None:
            raise ValueError("penalized prox search needs an exact constraint oracle")
        f = np.array([p.objective_value(z) for z in Z])
        g = np.stack([p.exact_constraints(z) for z in Z])
    if g.ndim == 1:
        g = g[:, None]
    return f + cfg.beta * np.sum(huber_value(g, cfg.nu), axis=1)


def _search_bounds(p: ProblemInstance) -> tuple[Array, Array]:
    s = p.feasible_set
    c = s.center if s.center is not None else np.zeros(p.dim)
    return c - s.radius, c + s.radius


def penalized_prox(p: ProblemInstance, cfg: PenaltyConfig, x, rho: float,
                   npts: int = 2001, zoom_rounds: int = 5) -> Array:
    """argmin_z F(z) + rho ||z - x||^2 over the feasible set, by dense search.

    Grid search over the set's bounding box with iterative zooming around the
    incumbent; infeasible grid points of a ball are masked out.  Supported in
    dimensions 1 and 2 only.
    """
    v = as_vector(x, p.dim)
    if p.dim > 2:
        raise ValueError("dense prox search supports dimensions 1 and 2 only")
    lo0, hi0 = _search_bounds(p)
    lo, hi = lo0.copy(), hi0.copy()
    per_axis = npts if p.dim == 1 else 61
    best = lo.copy()
    for _ in range(zoom_rounds):
        axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(p.dim)]
        if p.dim == 1:
            zs = axes[0][:, None]
        else:
            zs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        vals = _penalized_values(p, cfg, zs) + rho * np.sum((zs - v) ** 2, axis=1)
        if p.feasible_set.kind == L2_BALL and p.feasible_set.blocks == 1:
            c = p.feasible_set.center if p.feasible_set.center is not None else 0.0
            infeas = np.linalg.norm(zs - c, axis=1) > p.feasible_set.radius + 1e-12
            if not infeas.all():
                vals = np.where(infeas, np.inf, vals)
        best = zs[int(np.argmin(vals))]
        spacing = (hi - lo) / (per_axis - 1)
        lo = np.maximum(best - 2.0 * spacing, lo0)
        hi = np.minimum(best + 2.0 * spacing, hi0)
    return project(p.feasible_set, best)


def moreau_gradient_norm(p: ProblemInstance, cfg: PenaltyConfig, x,
                         rho: Optional[float] = None) -> float:
    """Moreau-envelope gradient norm 2 rho ||x - prox(x)|| of the penalized objective.

    rho defaults to the derived weak-convexity modulus; for fully convex
    instances (derived rho = 0) a positive rho must be supplied.
    """
    v = as_vector(x, p.dim)
    if rho is None:
        rho = derived_moduli(p, cfg).rho
    if not rho > 0:
        raise ValueError("rho must be positive; supply one for convex instances")
    z = penalized_prox(p, cfg, v, rho)
    return float(2.0 * rho * np.linalg.norm(v - z))


def _fmt(x) -> str:
    if x is None:
        return ""
    return "%.17g" % float(x)


def emit_trace(trace: RunTrace, path, fmt: str = "csv") -> None:
    """Write a trace as CSV (fixed header, 17 significant digits) or a JSON summary."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow([r.k, _fmt(r.alpha), _fmt(r.fv), _fmt(r.cvio), _fmt(r.svio),
                        _fmt(r.dp_f), _fmt(r.dp_g), _fmt(r.wall_ms)])
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    elif fmt == "json":
        summary = {
            "config": trace.config_echo,
            "seed": trace.seed,
            "stop_reason": trace.stop_reason,
            "n_records": len(trace.records),
        }
        if trace.records:
            r = trace.final
            summary["final"] = {
                "k": r.k, "alpha": float(r.alpha), "fv": float(r.fv),
                "cvio": float(r.cvio),
                "svio": None if r.svio is None else float(r.svio),
                "dp_f": float(r.dp_f), "dp_g": float(r.dp_g),
                "wall_ms": float(r.wall_ms),
            }
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def read_trace(path) -> RunTrace:
    """Parse a CSV trace back into records (dp columns come back as floats)."""
    trace = RunTrace()
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd))
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        for row in rd:
            trace.records.append(MetricRecord(
                k=int(row[0]), alpha=float(row[1]), fv=float(row[2]),
                cvio=float(row[3]), svio=float(row[4]) if row[4] else None,
                dp_f=Fraction(float(row[5])) if row[5] else Fraction(0),
                dp_g=Fraction(float(row[6])) if row[6] else Fraction(0),
                wall_ms=float(row[7]),
            ))
    return trace
