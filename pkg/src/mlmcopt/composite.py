"""Gradient-efficient composite optimization.

Minimizes Psi = Lambda + f where Lambda is L-smooth but its exact gradients
are expensive and f is non-smooth with a cheap stochastic subgradient oracle.
Composite AGD touches grad Lambda once per iteration (at y_k) and solves each
partial-linearization prox subproblem twice: once to expected function-value
accuracy (the primal update) and once through the bias-reduced optimum
estimator (the mirror update).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .estimators import opt_est
from .odc import EpochSgdSolver, OdcSolver, epoch_sgd
from .problems import (
    Array,
    Ball,
    ConvexDomain,
    QueryCounter,
    SimpleRegularizer,
    StochasticGradientOracle,
    intersect_ball,
)


@dataclass
class SmoothOracle:
    """Exact first-order access to the L-smooth part, with a gradient tally."""

    smoothness: float
    value: Callable[[Array], float]
    grad: Callable[[Array], Array]
    counter: QueryCounter = field(default_factory=QueryCounter)

    def gradient(self, x: Array) -> Array:
        self.counter.add(1)
        return self.grad(x)


@dataclass
class CompositeProblem:
    smooth: SmoothOracle
    nonsmooth: StochasticGradientOracle
    nonsmooth_value: Callable[[Array], float]
    domain: ConvexDomain
    radius: float

    def objective(self, x: Array) -> float:
        return float(self.smooth.value(x) + self.nonsmooth_value(x))


@dataclass
class CagdSchedule:
    """beta_k = 2L/k, gamma_k = 2/(k+1), Gamma_k = 2/(k(k+1)); the accuracy
    targets shrink with the iteration count n."""

    n: int
    L: float
    R: float

    def beta(self, k: int) -> float:
        return 2.0 * self.L / k

    def gamma(self, k: int) -> float:
        return 2.0 / (k + 1)

    def big_gamma(self, k: int) -> float:
        return 2.0 / (k * (k + 1))

    def eps_k(self, k: int) -> float:
        return self.L * self.R**2 / (2.0 * k * self.n)

    @property
    def delta(self) -> float:
        return self.R / (16.0 * self.n)

    @property
    def sigma_sq(self) -> float:
        return self.R**2 / (4.0 * self.n)


def cagd_schedule(L: float, R: float, eps: float) -> CagdSchedule:
    """n = ceil(sqrt(4 L R^2 / eps)), making the deterministic part of the
    rate bound 4 L R^2/(n(n+1)) <= eps."""
    if min(L, R, eps) <= 0:
        raise InvalidInputError("L, R, eps must be positive")
    return CagdSchedule(n=max(1, math.ceil(math.sqrt(4.0 * L * R**2 / eps))), L=L, R=R)


@dataclass
class CompositeConfig:
    c: float = 32.0
    accuracy_scale: float = 1.0  # multiplies eps_k, delta, sigma^2
    prox_budget_scale: float = 1.0


@dataclass
class CompositeResult:
    point: Array
    iterations: int
    smooth_grad_queries: int
    subgradient_queries: int


def composite_agd(
    problem: CompositeProblem,
    x0: Array,
    eps: float,
    rng: np.random.Generator,
    solver: Optional[OdcSolver] = None,
    cfg: Optional[CompositeConfig] = None,
    n_override: Optional[int] = None,
) -> CompositeResult:
    """Stochastic composite AGD run to E Psi(x_n) - Psi* <= eps.

    Iteration k: y_k mixes x_{k-1} with Proj_X(v_{k-1}); Lambda is linearized
    at y_k; the prox subproblem min <grad Lambda(y_k), z> + f(z)
    + (beta_k/2)||z - v_{k-1}||^2 is solved to expected value-accuracy eps_k
    for the primal point and estimated by the optimum estimator (bias delta,
    MSE sigma^2, over ball(v_0, R) ∩ X) for the mirror point. Exactly one
    gradient of Lambda per iteration.
    """
    if problem.smooth.smoothness <= 0:
        raise InvalidInputError("smoothness bound must be positive")
    if cfg is None:
        cfg = CompositeConfig()
    if solver is None:
        solver = EpochSgdSolver()
    sched = cagd_schedule(problem.smooth.smoothness, problem.radius, eps)
    if n_override is not None:
        sched = CagdSchedule(n=n_override, L=problem.smooth.smoothness, R=problem.radius)
    x0 = np.asarray(x0, dtype=float)
    scale = cfg.accuracy_scale
    G = problem.nonsmooth.lipschitz_bound
    grad0 = problem.smooth.counter.count
    sub0 = problem.nonsmooth.counter.count
    mirror_domain = intersect_ball(problem.domain, x0, problem.radius)

    x = x0.copy()
    v = x0.copy()
    for k in range(1, sched.n + 1):
        beta, gamma = sched.beta(k), sched.gamma(k)
        y = (1.0 - gamma) * x + gamma * problem.domain.project(v)
        gy = problem.smooth.gradient(y)
        psi_k = SimpleRegularizer(quadratic_weight=beta, center=v, linear=gy)
        eps_k = scale * sched.eps_k(k)
        budget = max(1, math.ceil(cfg.prox_budget_scale * 16.0 * G**2 / (beta * eps_k)))
        v_bar = epoch_sgd(problem.nonsmooth, psi_k, beta, problem.domain, budget, rng)
        v = opt_est(
            problem.nonsmooth, psi_k, beta,
            scale * sched.delta, scale * sched.sigma_sq,
            mirror_domain, rng, solver=solver, c=cfg.c,
        ).point
        x = (1.0 - gamma) * x + gamma * v_bar
    return CompositeResult(
        point=x,
        iterations=sched.n,
        smooth_grad_queries=problem.smooth.counter.count - grad0,
        subgradient_queries=problem.nonsmooth.counter.count - sub0,
    )


# ---------------------------------------------------------------------------
# Benchmark: l1-regularized least squares
# ---------------------------------------------------------------------------


def l1_least_squares_problem(
    a: Array,
    b: Array,
    radius: float,
    reg_weight: float = 1.0,
    domain: Optional[ConvexDomain] = None,
) -> CompositeProblem:
    """Lambda(x) = 0.5||Ax - b||^2, f(x) = reg_weight * ||x||_1 with a
    coordinate-sampling subgradient oracle (E||g||^2 <= (reg_weight * d)^2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.shape[1]
    L = float(np.linalg.norm(a.T @ a, 2))

    smooth = SmoothOracle(
        smoothness=L,
        value=lambda x: 0.5 * float(np.sum((a @ np.asarray(x) - b) ** 2)),
        grad=lambda x: a.T @ (a @ np.asarray(x) - b),
    )

    def sampler(x: Array, gen: np.random.Generator) -> Array:
        idx = gen.integers(0, d, size=x.shape[0])
        g = np.zeros_like(x)
        rows = np.arange(x.shape[0])
        g[rows, idx] = reg_weight * d * np.sign(x[rows, idx])
        return g

    nonsmooth = StochasticGradientOracle(
        dimension=d, lipschitz_bound=reg_weight * d, sampler=sampler
    )
    if domain is None:
        from .problems import WholeSpace

        domain = WholeSpace(d)
    return CompositeProblem(
        smooth=smooth,
        nonsmooth=nonsmooth,
        nonsmooth_value=lambda x: reg_weight * float(np.sum(np.abs(x))),
        domain=domain,
        radius=radius,
    )


def prox_gradient_baseline(
    problem: CompositeProblem,
    x0: Array,
    reg_weight: float,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> tuple[Array, float]:
    """Deterministic FISTA-style solve of the l1 composite benchmark, used as
    the ground-truth Psi* for rate measurements."""
    L = problem.smooth.smoothness
    x = np.asarray(x0, dtype=float).copy()
    z = x.copy()
    t = 1.0
    for _ in range(max_iter):
        g = problem.smooth.grad(z)
        x_next = problem.domain.project(
            np.sign(z - g / L) * np.maximum(np.abs(z - g / L) - reg_weight / L, 0.0)
        )
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_next + ((t - 1.0) / t_next) * (x_next - x)
        if np.linalg.norm(x_next - x) * L < tol:
            x = x_next
            break
        x, t = x_next, t_next
    return x, problem.objective(x)
