"""Benchmark problem builders.

Three data-driven instances (ROC-gap fairness, demographic parity with a
clipped-absolute-deviation regularizer, multi-class Neyman-Pearson) plus two
oracle-verifiable instances with closed-form solutions (a 2-d quadratic with
one linear constraint, and a 1-d cubic-constraint interval problem).

Subgradient conventions at kinks, chosen for reproducible traces: the hinge
and the absolute value return 0 at their kinks, ties in a max pick the first
index.  Sampling is with replacement except for explicit full-population
batches, and batch reductions use numpy's deterministic summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit as sigmoid

from .core import (
    Array,
    BatchSpec,
    CQParams,
    FULL_POPULATION,
    FeasibleSet,
    L2_BALL,
    LINF_BOX,
    ProblemInstance,
    as_vector,
)
from .data_ingest import Dataset
from .penalty import cq_from_slater, logistic_cq_bound

__all__ = [
    "RocFairnessSpec",
    "DpScadSpec",
    "NeymanPearsonSpec",
    "build_roc_fairness",
    "build_dp_scad",
    "build_neyman_pearson",
    "build_synthetic_quadratic",
    "build_example_1d",
    "pretrain_hinge",
    "scad_value",
    "scad_subgrad",
]


def dsigmoid(z):
    s = sigmoid(z)
    return s * (1.0 - s)


def _scaled_mean(values: Array, quadruple: bool) -> float:
    # The squared/group means in the published constants sum to four times the
    # sample count, read here as four cyclic passes over the data.
    return (4.0 if quadruple else 1.0) * float(np.mean(values))


def _indices(n: int, batch: BatchSpec, rng) -> Array:
    if batch.sampling == FULL_POPULATION:
        return np.arange(n)
    return rng.integers(0, n, size=batch.size)


# ---------------------------------------------------------------------------
# hinge loss pieces (shared by the two fairness problems)


def _hinge_values(A: Array, b: Array, x: Array) -> Array:
    return np.maximum(1.0 - b * (A @ x), 0.0)


def _hinge_subgrad(A: Array, b: Array, x: Array) -> Array:
    active = (1.0 - b * (A @ x)) > 0.0
    if not np.any(active):
        return np.zeros(A.shape[1])
    return -(b[active, None] * A[active]).sum(axis=0) / len(b)


# ---------------------------------------------------------------------------
# ROC-gap fairness


@dataclass
class RocFairnessSpec:
    """Minimize the worst threshold gap between group score distributions,
    subject to near-optimal hinge loss.

    ``data`` carries the hinge constraint; ``group_p``/``group_u`` feed the
    thresholded score gap.  The hinge budget is (1 + kappa_rel) times the
    pretrained loss, the feasible ball radius is radius_mult * ||x_star||, and
    the threshold grid has n_thresholds points spanning the pretrained score
    range widened by half on each side.
    """

    data: Dataset
    group_p: Dataset
    group_u: Dataset
    n_thresholds: int = 400
    kappa_rel: float = 0.001
    radius_mult: float = 5.0
    pretrained: Optional[tuple] = None  # (x_star, phi_star)
    pretrain_epochs: int = 50
    pretrain_step: float = 1e-2
    pretrain_seed: int = 0
    plain_means: bool = False


def pretrain_hinge(data: Dataset, epochs: int = 50, step: float = 1e-2, seed: int = 0) -> tuple:
    """Plain stochastic subgradient on the average hinge loss, batch 1.

    Returns (x, loss(x)) after the fixed number of epochs; seed-controlled.
    """
    A, b = data.features, data.labels
    n = data.n
    rng = np.random.default_rng(seed)
    x = np.zeros(data.d)
    for _ in range(epochs):
        for i in rng.integers(0, n, size=n):
            if 1.0 - b[i] * (A[i] @ x) > 0.0:
                x = x + step * b[i] * A[i]
    return x, float(np.mean(_hinge_values(A, b, x)))


def build_roc_fairness(spec: RocFairnessSpec) -> ProblemInstance:
    A, b = spec.data.features, spec.data.labels
    Ap, Au = spec.group_p.features, spec.group_u.features
    if spec.group_p.n == 0 or spec.group_u.n == 0:
        raise ValueError("empty group")
    d = A.shape[1]
    if Ap.shape[1] != d or Au.shape[1] != d:
        raise ValueError("dimension mismatch across data parts")
    n, n_p, n_u = spec.data.n, spec.group_p.n, spec.group_u.n

    if spec.pretrained is not None:
        x_star, phi_star = spec.pretrained
        x_star = as_vector(x_star, d)
    else:
        x_star, phi_star = pretrain_hinge(
            spec.data, spec.pretrain_epochs, spec.pretrain_step, spec.pretrain_seed)
    kappa1 = spec.kappa_rel * phi_star
    if not kappa1 > 0:
        raise ValueError("pretrained loss is zero, no slack budget")
    threshold = phi_star + kappa1
    radius = spec.radius_mult * float(np.linalg.norm(x_star))
    if not radius > 0:
        raise ValueError("pretrained point is zero, feasible radius is empty")

    scores = np.concatenate([Ap @ x_star, Au @ x_star])
    lo, hi = float(np.min(scores)), float(np.max(scores))
    span = hi - lo if hi > lo else 1.0
    thetas = np.linspace(lo - 0.5 * span, hi + 0.5 * span, spec.n_thresholds)

    def gap_profile(ap, au, x):
        sp, su = ap @ x, au @ x
        gp = sigmoid(sp[:, None] - thetas[None, :]).mean(axis=0)
        gu = sigmoid(su[:, None] - thetas[None, :]).mean(axis=0)
        return gp - gu, sp, su

    def f_value(x):
        gaps, _, _ = gap_profile(Ap, Au, x)
        return float(np.max(np.abs(gaps)))

    def f_subgrad(x, batch, rng):
        if batch is None or batch.sampling == FULL_POPULATION:
            ap, au = Ap, Au
        else:
            ap = Ap[rng.integers(0, n_p, size=batch.size)]
            au = Au[rng.integers(0, n_u, size=batch.size)]
        gaps, sp, su = gap_profile(ap, au, x)
        j = int(np.argmax(np.abs(gaps)))  # first index wins ties
        s = np.sign(gaps[j])
        if s == 0.0:
            return np.zeros(d)
        wp = dsigmoid(sp - thetas[j])
        wu = dsigmoid(su - thetas[j])
        return s * ((wp @ ap) / len(wp) - (wu @ au) / len(wu))

    def g_exact(x):
        return np.array([float(np.mean(_hinge_values(A, b, x))) - threshold])

    def g_values(x, batch, rng):
        idx = _indices(n, batch, rng)
        return np.array([float(np.mean(_hinge_values(A[idx], b[idx], x))) - threshold])

    def g_subgrad(x, i, batch, rng):
        idx = _indices(n, batch, rng)
        return _hinge_subgrad(A[idx], b[idx], x)

    def constants(plain: bool) -> dict:
        q = not plain
        return {
            "l_f": _scaled_mean(spec.group_p.row_norms, False)
                   + _scaled_mean(spec.group_u.row_norms, q),
            "l_g": float(np.mean(spec.data.row_norms)),
            "rho_f": _scaled_mean(spec.group_p.row_norms ** 2, q)
                     + _scaled_mean(spec.group_u.row_norms ** 2, q),
            "rho_g": 0.0,
        }

    cst = constants(spec.plain_means)
    fset = FeasibleSet(L2_BALL, radius)
    p = ProblemInstance(
        dim=d, m=1, feasible_set=fset,
        objective_value=f_value, objective_subgrad=f_subgrad,
        constraint_values=g_values, constraint_subgrad=g_subgrad,
        exact_constraints=g_exact,
        l_f=cst["l_f"], l_g=cst["l_g"], rho_f=cst["rho_f"], rho_g=cst["rho_g"],
        L_g=float(np.sqrt(np.mean(spec.data.row_norms ** 2))),
        constraint_population=n, constraint_component_sizes=(n,),
        objective_population=n_p + n_u, objective_batch_cost=2,
        x0=x_star,
        name="fair-roc",
    )
    g0 = g_exact(x_star)
    p.cq = cq_from_slater(x_star, g0, p.feasible_set.diameter(d), B_g=1.0)
    p.meta.update({
        "x_star": x_star, "phi_star": phi_star, "kappa1": kappa1,
        "thetas": thetas, "threshold": threshold,
        "constants_printed": constants(False), "constants_plain": constants(True),
    })
    return p


# ---------------------------------------------------------------------------
# demographic parity with clipped absolute deviation


@dataclass
class DpScadSpec:
    """Hinge loss plus a sparsity-promoting clipped penalty, subject to a
    cap on the absolute sigmoid-mean gap between the two groups."""

    data: Dataset
    group_p: Dataset
    group_u: Dataset
    lam: float = 0.02
    kappa: float = 0.02
    radius: float = 5.0
    plain_means: bool = False


def scad_value(t):
    """Clipped-absolute-deviation map: 2|t| up to 1, -t^2 + 4|t| + 1 up to 2, then 3."""
    a = np.abs(np.asarray(t, dtype=np.float64))
    out = np.where(a <= 1.0, 2.0 * a, np.where(a <= 2.0, -a * a + 4.0 * a + 1.0, 3.0))
    return float(out) if out.ndim == 0 else out


def scad_subgrad(t):
    """Branchwise derivative, 0 at the origin and beyond |t| = 2."""
    t = np.asarray(t, dtype=np.float64)
    a = np.abs(t)
    s = np.sign(t)
    out = np.where(a <= 1.0, 2.0 * s, np.where(a <= 2.0, -2.0 * t + 4.0 * s, 0.0))
    return float(out) if out.ndim == 0 else out


def build_dp_scad(spec: DpScadSpec) -> ProblemInstance:
    A, b = spec.data.features, spec.data.labels
    Ap, Au = spec.group_p.features, spec.group_u.features
    if spec.group_p.n == 0 or spec.group_u.n == 0:
        raise ValueError("empty group")
    d = A.shape[1]
    if Ap.shape[1] != d or Au.shape[1] != d:
        raise ValueError("dimension mismatch across data parts")
    n, n_p, n_u = spec.data.n, spec.group_p.n, spec.group_u.n
    lam, kappa = spec.lam, spec.kappa

    def f_value(x):
        return float(np.mean(_hinge_values(A, b, x)) + lam * np.sum(scad_value(x)))

    def f_subgrad(x, batch, rng):
        idx = _indices(n, batch, rng)
        return _hinge_subgrad(A[idx], b[idx], x) + lam * scad_subgrad(x)

    def signed_gap(ap, au, x):
        return float(np.mean(sigmoid(ap @ x)) - np.mean(sigmoid(au @ x)))

    def g_exact(x):
        return np.array([abs(signed_gap(Ap, Au, x)) - kappa])

    def _group_batch(batch, rng):
        if batch is None or batch.sampling == FULL_POPULATION:
            return Ap, Au
        return (Ap[rng.integers(0, n_p, size=batch.size)],
                Au[rng.integers(0, n_u, size=batch.size)])

    def g_values(x, batch, rng):
        # |batch-mean gap| - kappa: exact for the full population, biased
        # upward for small batches because the absolute value sits outside
        # the batch mean.
        ap, au = _group_batch(batch, rng)
        return np.array([abs(signed_gap(ap, au, x)) - kappa])

    def g_subgrad(x, i, batch, rng):
        ap, au = _group_batch(batch, rng)
        s = np.sign(signed_gap(ap, au, x))
        if s == 0.0:
            return np.zeros(d)
        wp = dsigmoid(ap @ x)
        wu = dsigmoid(au @ x)
        return s * ((wp @ ap) / len(wp) - (wu @ au) / len(wu))

    def constants(plain: bool) -> dict:
        q = not plain
        rho = max(2.0 * lam,
                  _scaled_mean(spec.group_p.row_norms ** 2, q)
                  + _scaled_mean(spec.group_u.row_norms ** 2, q))
        return {
            "l_f": 5.0 * lam + float(np.mean(spec.data.row_norms)),
            "l_g": _scaled_mean(spec.group_p.row_norms, False)
                   + _scaled_mean(spec.group_u.row_norms, q),
            "rho_f": rho,
            "rho_g": rho,
        }

    cst = constants(spec.plain_means)
    p = ProblemInstance(
        dim=d, m=1, feasible_set=FeasibleSet(LINF_BOX, spec.radius),
        objective_value=f_value, objective_subgrad=f_subgrad,
        constraint_values=g_values, constraint_subgrad=g_subgrad,
        exact_constraints=g_exact,
        l_f=cst["l_f"], l_g=cst["l_g"], rho_f=cst["rho_f"], rho_g=cst["rho_g"],
        L_g=float(np.sqrt(np.mean(np.concatenate([spec.group_p.row_norms,
                                                  spec.group_u.row_norms]) ** 2)) / 4.0),
        constraint_population=n_p + n_u, constraint_component_sizes=(n_p + n_u,),
        constraint_batch_cost=2,
        objective_population=n,
        x0=np.zeros(d),
        name="fair-dp",
    )
    D_a = min(spec.group_p.min_row_norm, spec.group_u.min_row_norm)
    if D_a > 0:
        p.meta["cq_gradient_bound"] = logistic_cq_bound(
            n_p, n_u, D_a, spec.radius * math.sqrt(d))
    p.meta.update({
        "lam": lam, "kappa": kappa,
        "constants_printed": constants(False), "constants_plain": constants(True),
    })
    return p


# ---------------------------------------------------------------------------
# multi-class Neyman-Pearson


@dataclass
class NeymanPearsonSpec:
    """Minimize class-1 pairwise sigmoid loss while capping every other
    class's pairwise loss, one weight block per class on its own l2 ball."""

    classes: Sequence  # Datasets or (n_i, d) arrays, class 1 first
    kappa: float = 4.5
    radius: float = 0.3


def build_neyman_pearson(spec: NeymanPearsonSpec) -> ProblemInstance:
    mats = [c.features if isinstance(c, Dataset) else np.asarray(c, dtype=np.float64)
            for c in spec.classes]
    M = len(mats)
    if M < 2:
        raise ValueError("need at least two classes")
    d = mats[0].shape[1]
    if any(a.shape[1] != d for a in mats):
        raise ValueError("dimension mismatch across classes")
    sizes = [a.shape[0] for a in mats]
    if min(sizes) == 0:
        raise ValueError("empty class")
    m = M - 1
    kappa = spec.kappa
    dim = M * d

    def blocks(x):
        return x.reshape(M, d)

    def _pair_scores(a_rows, X, c):
        # (batch, M) scores of class-c rows against every weight block
        return a_rows @ X.T, a_rows

    def f_value(x):
        X = blocks(x)
        S = mats[0] @ X.T
        total = 0.0
        for l in range(1, M):
            total += float(np.mean(sigmoid(S[:, 0] - S[:, l])))
        return total

    def f_subgrad(x, batch, rng):
        X = blocks(x)
        idx = _indices(sizes[0], batch, rng)
        rows = mats[0][idx]
        S = rows @ X.T
        grad = np.zeros((M, d))
        for l in range(1, M):
            w = dsigmoid(S[:, 0] - S[:, l])
            gl = (w @ rows) / len(w)
            grad[0] += gl
            grad[l] -= gl
        return grad.reshape(-1)

    def _component_value(c, rows, X):
        S = rows @ X.T
        v = 0.0
        for l in range(1, M):
            if l == c:
                continue
            v += float(np.mean(sigmoid(S[:, c] - S[:, l])))
        return v - kappa

    def g_exact(x):
        X = blocks(x)
        return np.array([_component_value(c, mats[c], X) for c in range(1, M)])

    def g_values(x, batch, rng):
        X = blocks(x)
        out = np.empty(m)
        for c in range(1, M):
            idx = _indices(sizes[c], batch, rng)
            out[c - 1] = _component_value(c, mats[c][idx], X)
        return out

    def g_subgrad(x, i, batch, rng):
        c = i + 1
        X = blocks(x)
        idx = _indices(sizes[c], batch, rng)
        rows = mats[c][idx]
        S = rows @ X.T
        grad = np.zeros((M, d))
        for l in range(1, M):
            if l == c:
                continue
            w = dsigmoid(S[:, c] - S[:, l])
            gl = (w @ rows) / len(w)
            grad[c] += gl
            grad[l] -= gl
        return grad.reshape(-1)

    mean_norms = [float(np.mean(np.linalg.norm(a, axis=1))) for a in mats]
    mean_sq = [float(np.mean(np.linalg.norm(a, axis=1) ** 2)) for a in mats]
    l_fg = max(mean_norms)
    rho = max(mean_sq)

    p = ProblemInstance(
        dim=dim, m=m,
        feasible_set=FeasibleSet(L2_BALL, spec.radius, blocks=M),
        objective_value=f_value, objective_subgrad=f_subgrad,
        constraint_values=g_values, constraint_subgrad=g_subgrad,
        exact_constraints=g_exact,
        l_f=l_fg, l_g=l_fg, rho_f=rho, rho_g=rho,
        L_g=math.sqrt(rho) * (M - 2) / 4.0 if M > 2 else 0.0,
        constraint_population=int(sum(sizes[1:])),
        constraint_component_sizes=tuple(sizes[1:]),
        constraint_batch_cost=m,
        objective_population=sizes[0],
        x0=np.zeros(dim),
        name="neyman-pearson",
    )
    min_norms = [float(np.min(np.linalg.norm(a, axis=1))) for a in mats[1:]]
    D_a = max(min_norms)
    if D_a > 0:
        p.meta["cq_gradient_bound"] = logistic_cq_bound(
            max(sizes[1:]), max(sizes[1:]), D_a, spec.radius, paired_scores=True)
    p.meta.update({"M": M, "kappa": kappa, "class_sizes": sizes})
    return p


# ---------------------------------------------------------------------------
# oracle-verifiable instances


def build_synthetic_quadratic(sigma: float = 0.0, sigma1: float = 0.0,
                              sigma2: float = 0.0, radius: float = 10.0) -> ProblemInstance:
    """min (x1-2)^2 + (x2-2)^2  s.t.  x1 + x2 <= 2, over an l2 ball.

    Optimum (1, 1) with value 2 and multiplier 2.  Optional additive Gaussian
    noise on the sampled constraint values (sigma) and on the sampled
    subgradients (sigma1, sigma2); any nonzero noise makes the corresponding
    oracle a generic stream.
    """
    target = np.array([2.0, 2.0])
    normal = np.array([1.0, 1.0])
    d = 2

    def f_value(x):
        r = x - target
        return float(r @ r)

    def f_grad_exact(x):
        return 2.0 * (x - target)

    def f_subgrad(x, batch, rng):
        g = f_grad_exact(x)
        if sigma1 > 0.0:
            noise = rng.standard_normal((batch.size, d)).mean(axis=0)
            g = g + (sigma1 / math.sqrt(d)) * noise
        return g

    def g_exact(x):
        return np.array([x[0] + x[1] - 2.0])

    def g_values(x, batch, rng):
        v = g_exact(x)
        if sigma > 0.0:
            v = v + sigma * rng.standard_normal(batch.size).mean()
        return v

    def g_grad_exact(x, i):
        return normal.copy()

    def g_subgrad(x, i, batch, rng):
        g = normal.copy()
        if sigma2 > 0.0:
            noise = rng.standard_normal((batch.size, d)).mean(axis=0)
            g = g + (sigma2 / math.sqrt(d)) * noise
        return g

    noisy_g = sigma > 0.0
    p = ProblemInstance(
        dim=d, m=1, feasible_set=FeasibleSet(L2_BALL, radius),
        objective_value=f_value, objective_subgrad=f_subgrad,
        constraint_values=g_values, constraint_subgrad=g_subgrad,
        exact_constraints=g_exact,
        l_f=2.0 * (radius + float(np.linalg.norm(target))),
        l_g=math.sqrt(2.0), rho_f=0.0, rho_g=0.0,
        sigma=sigma, sigma1=sigma1, sigma2=sigma2,
        L_g=math.sqrt(2.0),
        constraint_population=None if noisy_g else 1,
        constraint_component_sizes=None if noisy_g else (1,),
        objective_population=None if sigma1 > 0.0 else 1,
        x0=np.zeros(d),
        objective_subgrad_exact=f_grad_exact,
        constraint_subgrad_exact=g_grad_exact,
        objective_value_batch=lambda Z: np.sum((Z - target) ** 2, axis=1),
        exact_constraints_batch=lambda Z: (Z @ normal - 2.0)[:, None],
        name="synthetic",
    )
    p.cq = cq_from_slater(np.zeros(d), g_exact(np.zeros(d)),
                          p.feasible_set.diameter(d))
    p.meta.update({"optimum": np.array([1.0, 1.0]), "f_star": 2.0, "multiplier": 2.0})
    return p


def build_example_1d(objective: str = "linear") -> ProblemInstance:
    """1-d instance on [0, 1] with the nonconvex cubic constraint
    g(x) = -6 + 8x + x^2 - x^3 (4-weakly convex, min -6 at 0).

    The objective is x ("linear") or identically zero ("zero").  Ships with
    verified constraint-qualification constants B = 3, B_g = 1000,
    rho_bar = 5.
    """
    if objective not in ("linear", "zero"):
        raise ValueError(f"unknown objective {objective!r}")
    linear = objective == "linear"

    def g_scalar(t):
        return -6.0 + 8.0 * t + t * t - t ** 3

    def g_prime(t):
        return 8.0 + 2.0 * t - 3.0 * t * t

    def f_value(x):
        return float(x[0]) if linear else 0.0

    def f_subgrad(x, batch, rng):
        return np.array([1.0 if linear else 0.0])

    def g_exact(x):
        return np.array([g_scalar(float(x[0]))])

    def g_subgrad(x, i, batch, rng):
        return np.array([g_prime(float(x[0]))])

    p = ProblemInstance(
        dim=1, m=1,
        feasible_set=FeasibleSet(LINF_BOX, 0.5, center=np.array([0.5])),
        objective_value=f_value, objective_subgrad=f_subgrad,
        constraint_values=lambda x, batch, rng: g_exact(x),
        constraint_subgrad=g_subgrad,
        exact_constraints=g_exact,
        l_f=1.0 if linear else 0.0,
        l_g=25.0 / 3.0,  # max of |g'| on [0, 1], at x = 1/3
        rho_f=0.0, rho_g=4.0,
        L_g=25.0 / 3.0,
        constraint_population=1, constraint_component_sizes=(1,),
        objective_population=1,
        x0=np.array([0.5]),
        objective_subgrad_exact=lambda x: np.array([1.0 if linear else 0.0]),
        constraint_subgrad_exact=lambda x, i: np.array([g_prime(float(x[0]))]),
        objective_value_batch=lambda Z: Z[:, 0] if linear else np.zeros(len(Z)),
        exact_constraints_batch=lambda Z: g_scalar(Z[:, 0])[:, None],
        name="example-1d",
    )
    p.cq = CQParams(B=3.0, B_g=1000.0, rho_bar=5.0)
    return p
