"""Projection-efficient optimization: stochastic AGD on the Moreau envelope.

The iteration never projects onto the expensive set X inside gradient
estimation; the envelope gradient is estimated over the enclosing ball, and X
is touched exactly once per iteration. For an eps-suboptimal solution this
costs ceil(7GD/eps) projections and O((GD/eps)^2 log^2(GR/eps)) subgradient
samples in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .estimators import mor_grad_est
from .odc import EpochSgdSolver, OdcSolver
from .problems import Array, Ball, ConvexDomain, StochasticGradientOracle


@dataclass
class PeConfig:
    """Envelope smoothing lam = 2G^2/eps, budget T = ceil(7GD/eps), constant
    bias target eps/(8R) and shrinking noise budget 2*eps*lam/(k+1)."""

    G: float
    D: float
    R: float
    eps: float
    lam: float
    T: int
    delta: float
    c: float = 32.0

    def sigma_sq(self, k: int) -> float:
        """Square-error budget handed to the gradient estimator at iteration k (1-based)."""
        return 2.0 * self.eps * self.lam / (k + 1)


def pe_params(G: float, D: float, R: float, eps: float, c: float = 32.0) -> PeConfig:
    if min(G, D, R, eps) <= 0:
        raise InvalidInputError("G, D, R, eps must all be positive")
    if eps > G * D:
        raise InvalidInputError("eps > G*D: nothing to solve")
    lam = 2.0 * G**2 / eps
    return PeConfig(
        G=G, D=D, R=R, eps=eps, lam=lam,
        T=int(np.ceil(7.0 * G * D / eps)),
        delta=eps / (8.0 * R),
        c=c,
    )


@dataclass
class PeResult:
    point: Array
    projections: int
    queries: int


def agd_moreau(
    oracle: StochasticGradientOracle,
    domain_x: ConvexDomain,
    x0: Array,
    config: PeConfig,
    rng: np.random.Generator,
    solver: Optional[OdcSolver] = None,
    callback: Optional[Callable[[int, Array], None]] = None,
) -> PeResult:
    """Accelerated descent on f_lam over X ⊆ ball(0, R).

    Per iteration k = 1..T (with x_0 = v_0 the start point):

        y      = ((k-1)/(k+1)) x + (2/(k+1)) v
        g      = Moreau gradient estimate at y over ball(0, R)
        x_new  = Proj_X(y - g/(3 lam))          [the only Proj_X call]
        v_new  = Proj_ball(v - (k/(6 lam)) g)

    Returns x_T with E f(x_T) - f(x_star) <= eps.
    """
    x0 = np.asarray(x0, dtype=float)
    if not domain_x.contains(x0, tol=1e-9):
        raise InvalidInputError("x0 must lie in the projection domain")
    if solver is None:
        solver = EpochSgdSolver()
    ball = Ball(np.zeros_like(x0), config.R)
    queries_before = oracle.counter.count
    x = x0.copy()
    v = x0.copy()
    projections = 0
    for k in range(1, config.T + 1):
        y = ((k - 1) / (k + 1)) * x + (2.0 / (k + 1)) * v
        g = mor_grad_est(
            oracle, y, config.lam, config.delta, config.sigma_sq(k), ball, rng,
            solver=solver, c=config.c,
        )
        x = domain_x.project(y - g / (3.0 * config.lam))
        projections += 1
        v = ball.project(v - (k / (6.0 * config.lam)) * g)
        if callback is not None:
            callback(k, x)
    return PeResult(point=x, projections=projections, queries=oracle.counter.count - queries_before)
