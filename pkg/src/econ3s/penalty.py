"""Huber-smoothed exact penalty: smoothing primitives and schedule calculators.

The penalized objective is  F(x) = f(x) + beta * sum_i H(g_i(x))  where H is
the Huber smoothing of the positive part,

    H(z) = z^2 / (2 nu)   if 0 <= z <= nu,
           z - nu / 2     if z > nu,
           0              if z < 0,

with derivative clamp(z / nu, 0, 1).  The calculators in this module turn
problem constants plus constraint-qualification constants into a full
parameter schedule (batch sizes, step size, iteration count) that provably
reaches a target stationarity tolerance; the practical solver path ignores
them unless explicitly requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Array, BatchSpec, CQParams, ProblemInstance, as_vector, eval_constraints

__all__ = [
    "PenaltyConfig",
    "DerivedModuli",
    "TheoremSchedule",
    "huber_value",
    "huber_weight",
    "penalized_value",
    "derived_moduli",
    "slater_theta",
    "theorem_schedule",
    "cq_from_slater",
    "logistic_cq_bound",
    "estimate_noise_constants",
]


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight beta and smoothing width nu (practical defaults 10, 1e-5)."""

    beta: float = 10.0
    nu: float = 1e-5

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be a positive finite real")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError("nu must be a positive finite real")


@dataclass(frozen=True)
class DerivedModuli:
    """Weak-convexity modulus and second-moment bound of the penalized objective.

    rho = rho_f + beta * m * rho_g
    L_F^2 = 2 (sigma1^2 + l_f^2 + beta^2 m^2 sigma2^2 + beta^2 m^2 l_g^2)
    """

    rho: float
    L_F: float


def huber_value(z, nu: float):
    """Huber smoothing of [z]_+.  Accepts scalars or arrays."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    z = np.asarray(z, dtype=np.float64)
    out = np.where(z <= 0, 0.0, np.where(z <= nu, z * z / (2.0 * nu), z - nu / 2.0))
    return float(out) if out.ndim == 0 else out


def huber_weight(z, nu: float):
    """Derivative of the Huber smoothing: clamp(z / nu, 0, 1)."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    z = np.asarray(z, dtype=np.float64)
    out = np.clip(z / nu, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def penalized_value(p: ProblemInstance, cfg: PenaltyConfig, x, f_val: float, g_vals) -> float:
    """f_val + beta * sum_i H(g_i) with caller-supplied objective and constraint values."""
    as_vector(x, p.dim)
    g = as_vector(g_vals, p.m)
    return float(f_val + cfg.beta * np.sum(huber_value(g, cfg.nu)))


def derived_moduli(p: ProblemInstance, cfg: PenaltyConfig) -> DerivedModuli:
    rho = p.rho_f + cfg.beta * p.m * p.rho_g
    lf2 = 2.0 * (
        p.sigma1 ** 2
        + p.l_f ** 2
        + cfg.beta ** 2 * p.m ** 2 * p.sigma2 ** 2
        + cfg.beta ** 2 * p.m ** 2 * p.l_g ** 2
    )
    return DerivedModuli(rho=rho, L_F=math.sqrt(lf2))


def slater_theta(cq: CQParams, rho_g: float) -> float:
    """theta = sqrt(2 B (rho_bar - rho_g)); requires rho_bar > rho_g."""
    if not cq.rho_bar > rho_g:
        raise ValueError("constraint qualification requires rho_bar > rho_g")
    return math.sqrt(2.0 * cq.B * (cq.rho_bar - rho_g))


def cq_from_slater(y, g_at_y, diameter: float, B_g: float = 1.0) -> CQParams:
    """Constraint-qualification constants from a strictly feasible point.

    For convex constraints (rho_g = 0), a point y with max_i g_i(y) < 0 yields
    rho_bar = -max g(y) / diameter^2 and B = -max g(y) / 2; B_g is free.
    """
    as_vector(y)
    g = as_vector(g_at_y)
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    gmax = float(np.max(g))
    if not gmax < 0:
        raise ValueError("Slater point required: max_i g_i(y) must be negative")
    return CQParams(B=-gmax / 2.0, B_g=B_g, rho_bar=-gmax / diameter ** 2)


def logistic_cq_bound(n_p: int, n_u: int, D_a: float, D: float,
                      paired_scores: bool = False) -> float:
    """Computable lower bound on the constraint-gradient norm for the
    sigmoid fairness constraints.

    Returns sigma(c)(1 - sigma(c)) / max(n_p, n_u) with c = D_a * D, where
    D_a is the smallest relevant row norm and D the feasible radius.  With
    ``paired_scores`` the score is a difference of two block scores, so the
    argument doubles to 2 * D_a * D (the multi-class case; pass the largest
    class size for both counts).
    """
    if min(n_p, n_u) < 1 or D_a <= 0 or D <= 0:
        raise ValueError("all inputs must be positive")
    c = (2.0 if paired_scores else 1.0) * D_a * D
    s = 1.0 / (1.0 + math.exp(-c))
    return s * (1.0 - s) / max(n_p, n_u)


@dataclass(frozen=True)
class TheoremSchedule:
    """Complete parameter set for a guaranteed run at tolerance epsilon.

    ``epsilon`` is the KKT tolerance for the original problem and
    ``epsilon_bar`` the stationarity tolerance for the penalized one.  The
    fields satisfy, by construction,

      beta  >  max{(l_f + eps)/theta, 2(B_f + rho_f D^2)/(B_g - m rho_g D^2)}
      eps_bar <= eps * min{(beta theta - l_f)/(2 B_g),
                           (beta theta - l_f)/(m beta l_g + beta theta - l_f),
                           2 rho}
      nu    <= min{B_g, eps/beta, (B_g - m rho_g D^2)/(2m), eps/2}
      q = S2 = ceil(sqrt(S1)),
      alpha = min{eps_bar^2/(16 rho L_F^2),
                  eps_bar nu/(4 beta sqrt(m (l_g^2+sigma2^2)) L_g L_F)}
      K = ceil(16 eps_bar^-2 q^-1 alpha^-1 Delta)

    with S1 = ceil(16 eps_bar^-2 nu^-2 m (l_g^2+sigma2^2) beta^2 sigma^2) for a
    generic stream (floored at 1) and S1 = N for a finite sum.
    """

    epsilon: float
    epsilon_bar: float
    beta: float
    nu: float
    theta: float
    rho: float
    L_F: float
    S1: int
    S2: int
    q: int
    alpha: float
    K: int
    delta: float


def theorem_schedule(
    p: ProblemInstance,
    cq: CQParams,
    epsilon: float,
    delta: Optional[float] = None,
    sigma: Optional[float] = None,
    beta: Optional[float] = None,
    nu: Optional[float] = None,
    g_at_start=None,
) -> TheoremSchedule:
    """Compute the guaranteed parameter schedule for target tolerance epsilon.

    ``beta``/``nu`` are validated when given and otherwise set to twice the
    strict lower bound resp. the largest admissible value.  ``epsilon_bar``
    is always set to its largest admissible value, which maximizes the step
    size.  ``delta`` bounds the initial Moreau-envelope gap; when omitted it
    defaults to B_f + beta*m*(l_g*diam + max|g(x0)|), using ``g_at_start`` if
    supplied.  Infeasible regimes (B_g <= m rho_g D^2, or a fully convex
    problem with rho = 0, which forces epsilon_bar <= 0) raise instead of
    being clamped.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    D = p.feasible_set.diameter(p.dim)
    m = p.m
    slack = cq.B_g - m * p.rho_g * D ** 2
    if slack <= 0:
        raise ValueError(
            f"infeasible parameter regime: B_g={cq.B_g} <= m*rho_g*D^2={m * p.rho_g * D ** 2}"
        )
    theta = slater_theta(cq, p.rho_g)

    beta_low = max((p.l_f + epsilon) / theta, 2.0 * (p.B_f + p.rho_f * D ** 2) / slack)
    if beta is None:
        beta = 2.0 * beta_low if beta_low > 0 else 1.0
    elif beta <= beta_low:
        raise ValueError(f"beta={beta} violates the strict lower bound {beta_low}")

    nu_high = min(cq.B_g, epsilon / beta, slack / (2.0 * m), epsilon / 2.0)
    if nu is None:
        nu = nu_high
    elif not 0 < nu <= nu_high:
        raise ValueError(f"nu={nu} outside (0, {nu_high}]")

    cfg = PenaltyConfig(beta=beta, nu=nu)
    mod = derived_moduli(p, cfg)
    if mod.rho <= 0:
        raise ValueError(
            "infeasible parameter regime: rho = rho_f + beta*m*rho_g is zero, "
            "so no positive stationarity tolerance satisfies eps_bar <= 2*rho*eps"
        )
    bt = beta * theta - p.l_f
    eps_bar = epsilon * min(bt / (2.0 * cq.B_g), bt / (m * beta * p.l_g + bt), 2.0 * mod.rho)

    if sigma is None:
        sigma = p.sigma
    if p.finite_sum:
        S1 = int(p.constraint_population)
    else:
        raw = 16.0 * eps_bar ** -2 * nu ** -2 * m * (p.l_g ** 2 + p.sigma2 ** 2) * beta ** 2 * sigma ** 2
        S1 = max(1, math.ceil(raw))
    q = S2 = math.ceil(math.sqrt(S1))

    gl = beta * math.sqrt(m * (p.l_g ** 2 + p.sigma2 ** 2)) * p.L_g * mod.L_F
    alpha_terms = [eps_bar ** 2 / (16.0 * mod.rho * mod.L_F ** 2)]
    if gl > 0:
        alpha_terms.append(eps_bar * nu / (4.0 * gl))
    alpha = min(alpha_terms)
    if not alpha > 0:
        raise ValueError("degenerate constants: step size is not positive")

    if delta is None:
        g0 = 0.0
        if g_at_start is not None:
            g0 = float(np.max(np.abs(as_vector(g_at_start, m))))
        delta = p.B_f + beta * m * (p.l_g * D + g0)
    K = max(1, math.ceil(16.0 * eps_bar ** -2 / q / alpha * delta))

    return TheoremSchedule(
        epsilon=epsilon, epsilon_bar=eps_bar, beta=beta, nu=nu, theta=theta,
        rho=mod.rho, L_F=mod.L_F, S1=S1, S2=S2, q=q, alpha=alpha, K=K, delta=delta,
    )


def estimate_noise_constants(p: ProblemInstance, x, rng, draws: int = 1000,
                             batch: Optional[BatchSpec] = None) -> dict:
    """Heuristic plug-in estimates of (sigma, sigma1, sigma2) at a point.

    Sample standard deviations over ``draws`` independent size-1 oracle calls.
    This is a diagnostic convenience only: the estimates are local to ``x``
    and carry no uniform guarantee over the feasible set.
    """
    from .core import sample_subgrad_f, sample_subgrad_g

    v = as_vector(x, p.dim)
    b = batch or BatchSpec.of(1)
    gv = np.stack([eval_constraints(p, v, b, rng) for _ in range(draws)])
    zf = np.stack([sample_subgrad_f(p, v, b, rng) for _ in range(draws)])
    zg = np.stack([sample_subgrad_g(p, v, 0, b, rng) for _ in range(draws)])
    return {
        "sigma": float(np.sqrt(np.sum(np.var(gv, axis=0)))),
        "sigma1": float(np.sqrt(np.sum(np.var(zf, axis=0)))),
        "sigma2": float(np.sqrt(np.sum(np.var(zg, axis=0)))),
    }
