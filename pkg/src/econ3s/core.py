"""Core numeric types: feasible sets, batch sampling, and the problem oracle bundle.

Every other module consumes problems through :class:`ProblemInstance`, which
packages sampling oracles together with the uniform constants (Lipschitz
bounds, weak-convexity moduli, noise levels) that the schedule calculators
need.  Oracles are pure functions of ``(point, batch, rng)``; replaying the
same rng stream replays the same samples, which is what the variance-reduced
estimator relies on for correlated pair evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

L2_BALL = "l2-ball"
LINF_BOX = "linf-box"

WITH_REPLACEMENT = "with-replacement"
FULL_POPULATION = "full-population"

__all__ = [
    "Array",
    "L2_BALL",
    "LINF_BOX",
    "WITH_REPLACEMENT",
    "FULL_POPULATION",
    "FeasibleSet",
    "BatchSpec",
    "CQParams",
    "ProblemInstance",
    "as_vector",
    "project",
    "eval_constraints",
    "sample_subgrad_f",
    "sample_subgrad_g",
]


def as_vector(x, dim: Optional[int] = None) -> Array:
    """Coerce to a finite float64 1-d array, checking the dimension if given."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


@dataclass(frozen=True)
class FeasibleSet:
    """Closed convex set with a cheap projection.

    ``l2-ball`` is {x : ||x - center|| <= radius}; ``linf-box`` clamps each
    coordinate to [center_i - radius, center_i + radius].  ``blocks > 1``
    (l2-ball only) treats the vector as that many equal-length chunks, each
    projected onto its own ball; this is the product set used by the
    multi-class classification problem.  ``center`` defaults to the origin.
    """

    kind: str
    radius: float
    center: Optional[Array] = None
    blocks: int = 1

    def __post_init__(self):
        if self.kind not in (L2_BALL, LINF_BOX):
            raise ValueError(f"unknown feasible-set kind {self.kind!r}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("radius must be a positive finite real")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.blocks > 1 and self.kind != L2_BALL:
            raise ValueError("block structure is only supported for l2 balls")
        if self.center is not None:
            object.__setattr__(self, "center", as_vector(self.center))

    def diameter(self, dim: int) -> float:
        """Largest distance between two points of the set in dimension ``dim``."""
        if self.kind == L2_BALL:
            return 2.0 * self.radius * math.sqrt(self.blocks)
        return 2.0 * self.radius * math.sqrt(dim)

    def contains(self, x: Array, tol: float = 1e-9) -> bool:
        z = x if self.center is None else x - self.center
        if self.kind == LINF_BOX:
            return bool(np.max(np.abs(z)) <= self.radius + tol)
        if self.blocks == 1:
            return bool(np.linalg.norm(z) <= self.radius + tol)
        zb = z.reshape(self.blocks, -1)
        return bool(np.max(np.linalg.norm(zb, axis=1)) <= self.radius + tol)


def project(feasible_set: FeasibleSet, x) -> Array:
    """Euclidean projection onto the set.  Idempotent and 1-Lipschitz."""
    v = as_vector(x)
    center = feasible_set.center
    if center is not None and center.shape != v.shape:
        raise ValueError("dimension mismatch between point and set center")
    z = v if center is None else v - center
    r = feasible_set.radius
    if feasible_set.kind == LINF_BOX:
        out = np.clip(z, -r, r)
    elif feasible_set.blocks == 1:
        nrm = np.linalg.norm(z)
        out = z if nrm <= r else z * (r / nrm)
    else:
        if z.shape[0] % feasible_set.blocks != 0:
            raise ValueError("dimension mismatch: vector not divisible into blocks")
        zb = z.reshape(feasible_set.blocks, -1).copy()
        nrm = np.linalg.norm(zb, axis=1)
        over = nrm > r
        if np.any(over):
            zb[over] *= (r / nrm[over])[:, None]
        out = zb.reshape(-1)
    return out if center is None else out + center


@dataclass(frozen=True)
class BatchSpec:
    """How many samples to draw and how.

    ``with-replacement`` draws independent indices (or fresh noise for generic
    streams).  ``full-population`` means the whole finite sample set, in its
    natural order; it is only valid when the population is finite and ``size``
    equals it.
    """

    size: int
    sampling: str = WITH_REPLACEMENT

    def __post_init__(self):
        if self.sampling not in (WITH_REPLACEMENT, FULL_POPULATION):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.size < 1:
            raise ValueError("empty batch")

    @staticmethod
    def of(size: int) -> "BatchSpec":
        return BatchSpec(int(size), WITH_REPLACEMENT)

    @staticmethod
    def full(population: int) -> "BatchSpec":
        return BatchSpec(int(population), FULL_POPULATION)


@dataclass(frozen=True)
class CQParams:
    """Constants of the uniform Slater-type constraint qualification.

    For any x in the set with 0 < sum_i [g_i(x)]_+ <= B_g there is a point y
    in the relative interior with max_i g_i(y) + (rho_bar/2)||y - x||^2 <= -B.
    """

    B: float
    B_g: float
    rho_bar: float

    def __post_init__(self):
        if not (self.B > 0 and self.B_g > 0):
            raise ValueError("B and B_g must be positive")
        if not math.isfinite(self.rho_bar):
            raise ValueError("rho_bar must be finite")


@dataclass
class ProblemInstance:
    """Oracle bundle for  min f(x)  over a feasible set  s.t.  g(x) <= 0.

    The value/subgradient oracles take ``(point, batch, rng)`` and average the
    per-sample quantities over the drawn batch; ``exact_constraints`` is the
    full finite-sum evaluation and is absent for generic streams.  Constants
    are uniform bounds over the feasible set:

    ==========  ========================================================
    l_f, l_g    subgradient norm bounds for f and each g_i
    rho_f/g     weak-convexity moduli (0 means convex)
    sigma       per-sample constraint-value noise, E||g(x,xi)-g(x)||^2 <= sigma^2
    sigma1/2    subgradient noise standard deviations for f and g
    L_g         mean-square sample Lipschitz bound of the constraints
    ==========  ========================================================

    Accounting metadata: ``constraint_population`` is the finite sample count
    N_g (None for a stream), ``constraint_batch_cost`` the number of raw
    samples one unit of value-batch size touches (the multi-class problem
    draws one sample per constrained class), and similarly for the objective.
    Data-pass bookkeeping lives in the solvers; a drawn batch is charged once
    even when the estimator evaluates it at two points.

    Oracles never enforce membership in the feasible set; solvers keep
    iterates feasible by construction.
    """

    dim: int
    m: int
    feasible_set: FeasibleSet
    objective_value: Callable[[Array], float]
    objective_subgrad: Callable[[Array, BatchSpec, np.random.Generator], Array]
    constraint_values: Callable[[Array, BatchSpec, np.random.Generator], Array]
    constraint_subgrad: Callable[[Array, int, BatchSpec, np.random.Generator], Array]
    exact_constraints: Optional[Callable[[Array], Array]] = None
    l_f: float = 0.0
    l_g: float = 0.0
    rho_f: float = 0.0
    rho_g: float = 0.0
    sigma: float = 0.0
    sigma1: float = 0.0
    sigma2: float = 0.0
    L_g: float = 0.0
    constraint_population: Optional[int] = None
    constraint_component_sizes: Optional[tuple] = None
    constraint_batch_cost: int = 1
    objective_population: Optional[int] = None
    objective_batch_cost: int = 1
    x0: Optional[Array] = None
    cq: Optional[CQParams] = None
    # Noise-free full subgradients for diagnostics and inner solves.  Finite
    # sums can leave these unset (a full-population batch is equivalent);
    # noisy streams with a closed form should provide them.
    objective_subgrad_exact: Optional[Callable[[Array], Array]] = None
    constraint_subgrad_exact: Optional[Callable[[Array, int], Array]] = None
    # Vectorized exact evaluation over an (N, dim) array of points; only the
    # small closed-form instances provide these, for dense prox searches.
    objective_value_batch: Optional[Callable[[Array], Array]] = None
    exact_constraints_batch: Optional[Callable[[Array], Array]] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1 or self.m < 1:
            raise ValueError("dim and m must be positive")
        for c in ("l_f", "l_g", "rho_f", "rho_g"):
            if getattr(self, c) < 0:
                raise ValueError(f"{c} must be nonnegative")
        if self.x0 is not None:
            self.x0 = as_vector(self.x0, self.dim)

    @property
    def B_f(self) -> float:
        """Objective value spread bound l_f * diameter."""
        return self.l_f * self.feasible_set.diameter(self.dim)

    @property
    def finite_sum(self) -> bool:
        return self.constraint_population is not None

    def start_point(self) -> Array:
        if self.x0 is not None:
            return self.x0.copy()
        return project(self.feasible_set, np.zeros(self.dim))


def _check_constraint_batch(p: ProblemInstance, batch: BatchSpec):
    if batch.sampling == FULL_POPULATION:
        if not p.finite_sum:
            raise ValueError("full-population batch requested on a generic stream")
        if batch.size != p.constraint_population:
            raise ValueError(
                f"full-population batch size {batch.size} does not match "
                f"population {p.constraint_population}"
            )


def _check_objective_batch(p: ProblemInstance, batch: BatchSpec):
    if batch.sampling == FULL_POPULATION:
        if p.objective_population is None:
            raise ValueError("full-population batch requested on a generic stream")
        if batch.size != p.objective_population:
            raise ValueError(
                f"full-population batch size {batch.size} does not match "
                f"population {p.objective_population}"
            )


def eval_constraints(p: ProblemInstance, x, batch: BatchSpec, rng) -> Array:
    """Batch-averaged constraint values g(x, B), an m-vector."""
    v = as_vector(x, p.dim)
    _check_constraint_batch(p, batch)
    out = as_vector(p.constraint_values(v, batch, rng), p.m)
    return out


def sample_subgrad_f(p: ProblemInstance, x, batch: BatchSpec, rng) -> Array:
    """Batch-averaged sample subgradient of f at x."""
    v = as_vector(x, p.dim)
    _check_objective_batch(p, batch)
    return as_vector(p.objective_subgrad(v, batch, rng), p.dim)


def sample_subgrad_g(p: ProblemInstance, x, i: int, batch: BatchSpec, rng) -> Array:
    """Batch-averaged sample subgradient of constraint component i (0-based)."""
    v = as_vector(x, p.dim)
    if not 0 <= i < p.m:
        raise IndexError(f"constraint index {i} out of range for m={p.m}")
    _check_constraint_batch(p, batch)
    return as_vector(p.constraint_subgrad(v, i, batch, rng), p.dim)
