"""Bias-reduced optimum estimators.

The single-draw estimator runs an ODC solver at a geometrically random budget
level J and returns

    x_hat = x_0 + 2^J (x_J - x_{J-1})   if 2^J <= t_max, else x_0,

where x_j is the solver output with budget 2^j and P(J = j) = 2^-j. The level
sum telescopes, so E x_hat = E x_{j_max}: bias decays like 1/sqrt(t_max) while
the expected query count stays logarithmic. Averaging N such draws gives an
estimate with prescribed bias delta and mean squared error sigma_sq, and
applying that to the prox objective f + (lam/2)||. - y||^2 yields a low-bias
gradient estimator for the Moreau envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .odc import EpochSgdSolver, OdcSolver, ellipsoid
from .problems import (
    Array,
    Ball,
    ConvexDomain,
    QueryCounter,
    SimpleRegularizer,
    StochasticGradientOracle,
    _check_finite,
)

LEVEL_CAP = 64  # P(J > 64) = 2^-64: truncation far below any measurable scale


@dataclass
class MlmcConfig:
    """Single-draw estimator configuration. ``force_generic`` always runs the
    three independent solver calls (budgets 1, 2^{J-1}, 2^J) instead of the
    coupled single-run extraction available for epoch SGD."""

    t_max: int
    c: float = 32.0
    level_cap: int = LEVEL_CAP
    force_generic: bool = False

    def __post_init__(self):
        if self.t_max < 1:
            raise InvalidInputError("t_max must be >= 1")

    @property
    def j_max(self) -> int:
        return int(math.floor(math.log2(self.t_max)))


@dataclass
class OptEstimate:
    """Point estimate bundled with its realized oracle cost."""

    point: Array
    queries: int
    levels: list[int] = field(default_factory=list)


@dataclass
class OptEstParams:
    t_max: int
    n: int


def sample_levels(rng: np.random.Generator, size: int, cap: int = LEVEL_CAP) -> np.ndarray:
    """Draw J ~ Geom(1/2) on {1, 2, ...} (fair-coin flips until first success)."""
    return np.minimum(rng.geometric(0.5, size=size), cap)


def _counter_delta_per_row(counter: QueryCounter, before: int, rows: int) -> int:
    delta = counter.count - before
    if delta % rows != 0:
        raise InvalidInputError(
            "solver query usage is not row-uniform; per-draw accounting impossible"
        )
    return delta // rows


def mlmc_draw_batch(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    mu: float,
    domain: ConvexDomain,
    config: MlmcConfig,
    rng: np.random.Generator,
    size: int,
    solver: Optional[OdcSolver] = None,
) -> tuple[Array, np.ndarray, np.ndarray]:
    """``size`` independent draws, grouped by level so each group shares one
    vectorized solver run. Returns (points, per-draw queries, levels)."""
    if solver is None:
        solver = EpochSgdSolver()
    levels = sample_levels(rng, size, config.level_cap)
    d = oracle.dimension
    points = np.empty((size, d))
    queries = np.zeros(size, dtype=np.int64)
    coupled = hasattr(solver, "solve_levels") and not config.force_generic
    for j in np.unique(levels):
        rows = np.flatnonzero(levels == j)
        m = rows.size
        before = oracle.counter.count
        if 2**int(j) > config.t_max:
            if coupled:
                x0 = np.broadcast_to(regularizer.argmin(domain), (m, d))
            else:
                x0 = solver.solve(oracle, regularizer, mu, domain, 1, rng, (m,))
            points[rows] = x0
        else:
            budget, prev_budget = 2 ** int(j), 2 ** (int(j) - 1)
            if coupled:
                x0, x_prev, x_last = solver.solve_levels(
                    oracle, regularizer, mu, domain, budget, prev_budget, rng, (m,)
                )
            else:
                x0 = solver.solve(oracle, regularizer, mu, domain, 1, rng, (m,))
                x_prev = solver.solve(oracle, regularizer, mu, domain, prev_budget, rng, (m,))
                x_last = solver.solve(oracle, regularizer, mu, domain, budget, rng, (m,))
            points[rows] = x0 + budget * (x_last - x_prev)
        queries[rows] = _counter_delta_per_row(oracle.counter, before, m)
    return points, queries, levels


def mlmc_draw(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    mu: float,
    domain: ConvexDomain,
    config: MlmcConfig,
    rng: np.random.Generator,
    solver: Optional[OdcSolver] = None,
) -> OptEstimate:
    """One draw of the randomized-level estimator."""
    pts, q, levels = mlmc_draw_batch(oracle, regularizer, mu, domain, config, rng, 1, solver)
    return OptEstimate(point=pts[0], queries=int(q[0]), levels=[int(levels[0])])


def opt_est_params(
    G: float, mu: float, delta: float, sigma_sq: float, c: float = 32.0
) -> OptEstParams:
    """Cutoff and averaging count for prescribed bias delta and MSE sigma_sq:

        t_max = ceil(4 c G^2 / (mu^2 min(delta^2, sigma_sq/2)))
        n     = ceil(32 c G^2 log2(t_max) / (mu^2 sigma_sq))

    (log base 2 throughout, matching the variance bound's log2.)
    """
    if min(G, mu, delta, sigma_sq) <= 0:
        raise InvalidInputError("G, mu, delta, sigma_sq must all be positive")
    t_max = math.ceil(4.0 * c * G**2 / (mu**2 * min(delta**2, 0.5 * sigma_sq)))
    t_max = max(t_max, 1)
    n = math.ceil(32.0 * c * G**2 * math.log2(t_max) / (mu**2 * sigma_sq))
    return OptEstParams(t_max=t_max, n=max(n, 1))


def opt_est(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    mu: float,
    delta: float,
    sigma_sq: float,
    domain: ConvexDomain,
    rng: np.random.Generator,
    solver: Optional[OdcSolver] = None,
    c: float = 32.0,
    n_override: Optional[int] = None,
    t_max_override: Optional[int] = None,
) -> OptEstimate:
    """Average of N independent single draws: bias <= delta, MSE <= sigma_sq.

    ``n_override`` / ``t_max_override`` replace the derived parameters (an
    override of N = 1 reduces the call to the single-draw law).
    """
    params = opt_est_params(G=oracle.lipschitz_bound, mu=mu, delta=delta, sigma_sq=sigma_sq, c=c)
    t_max = t_max_override if t_max_override is not None else params.t_max
    n = n_override if n_override is not None else params.n
    config = MlmcConfig(t_max=t_max, c=c)
    points, queries, levels = mlmc_draw_batch(
        oracle, regularizer, mu, domain, config, rng, n, solver
    )
    return OptEstimate(
        point=points.mean(axis=0),
        queries=int(queries.sum()),
        levels=levels.tolist(),
    )


def mor_grad_est(
    oracle: StochasticGradientOracle,
    y: Array,
    lam: float,
    delta: float,
    sigma_sq: float,
    domain: ConvexDomain,
    rng: np.random.Generator,
    solver: Optional[OdcSolver] = None,
    c: float = 32.0,
    n_override: Optional[int] = None,
) -> Array:
    """Estimate nabla f_lam(y) = lam (y - P_{f,lam}(y)) with bias <= delta and
    MSE <= sigma_sq, by running opt_est on f + (lam/2)||. - y||^2 with targets
    (delta/lam, sigma_sq/lam^2)."""
    if lam <= 0 or delta <= 0 or sigma_sq <= 0:
        raise InvalidInputError("lam, delta, sigma_sq must be positive")
    y = np.asarray(y, dtype=float)
    _check_finite(y, "y")
    psi = SimpleRegularizer(quadratic_weight=lam, center=y)
    est = opt_est(
        oracle, psi, lam, delta / lam, sigma_sq / lam**2, domain, rng,
        solver=solver, c=c, n_override=n_override,
    )
    return lam * (y - est.point)


# ---------------------------------------------------------------------------
# Exactly unbiased estimator for finite sums with first-order component oracles
# ---------------------------------------------------------------------------


@dataclass
class FiniteSumOracle:
    """n-component family F = (1/n) sum_i F_i with per-component first-order
    access. ``component_grad(idx, x)`` returns one subgradient per row (one
    query per row); ``full_first_order(x)`` evaluates F's value and
    subgradient exactly (n component queries). The counter tallies component
    first-order queries under that convention."""

    n: int
    dimension: int
    component_grad: Callable[[np.ndarray, Array], Array]
    full_first_order: Callable[[Array], tuple[float, Array]]
    counter: QueryCounter = field(default_factory=QueryCounter)

    def stochastic_oracle(self, lipschitz_bound: float) -> StochasticGradientOracle:
        def sampler(x: Array, gen: np.random.Generator) -> Array:
            idx = gen.integers(0, self.n, size=x.shape[0])
            return self.component_grad(idx, x)

        return StochasticGradientOracle(
            dimension=self.dimension,
            lipschitz_bound=lipschitz_bound,
            sampler=sampler,
            counter=self.counter,
        )

    def counted_first_order(self) -> Callable[[Array], tuple[float, Array]]:
        def oracle(x: Array) -> tuple[float, Array]:
            self.counter.add(self.n)
            return self.full_first_order(x)

        return oracle


def unbiased_level_cutoff(n: int, d: int) -> int:
    """Level above which the ellipsoid method replaces the SGD solver:
    J0 = ceil(4 log2(14 (n d^2 + d^4)))."""
    return math.ceil(4.0 * math.log2(14.0 * (n * d**2 + d**4)))


def level_solver_kind(j: int, j0: int) -> str:
    return "epoch_sgd" if j <= j0 else "ellipsoid"


def unbiased_opt_est_batch(
    finite_sum: FiniteSumOracle,
    x0: Array,
    radius: float,
    mu: float,
    G: float,
    rng: np.random.Generator,
    size: int,
    solver: Optional[EpochSgdSolver] = None,
    j0: Optional[int] = None,
    level_cap: int = LEVEL_CAP,
) -> tuple[Array, np.ndarray, np.ndarray]:
    """Batched zero-bias draws x_0 + 2^J (x_J - x_{J-1}), J unbounded.

    Levels j <= J0 run the ODC solver at budget 2^j; deeper levels run the
    ellipsoid method at budget ceil(2^{j/2}), whose geometric convergence
    keeps both the variance and the expected cost of the untruncated level
    sum finite.
    """
    x0 = np.asarray(x0, dtype=float)
    _check_finite(x0, "x0")
    if solver is None:
        solver = EpochSgdSolver()
    if j0 is None:
        j0 = unbiased_level_cutoff(finite_sum.n, finite_sum.dimension)
    d = finite_sum.dimension
    domain = Ball(x0, radius)
    psi = SimpleRegularizer(quadratic_weight=0.0, center=x0)
    oracle = finite_sum.stochastic_oracle(G)
    full = finite_sum.counted_first_order()

    def ellipsoid_level(j: int) -> Array:
        return ellipsoid(x0, full, radius, mu, G, budget=math.ceil(2 ** (j / 2.0)))

    levels = sample_levels(rng, size, cap=level_cap)
    points = np.empty((size, d))
    queries = np.zeros(size, dtype=np.int64)
    for j in np.unique(levels):
        j = int(j)
        rows = np.flatnonzero(levels == j)
        m = rows.size
        before = finite_sum.counter.count
        if j <= j0:
            _, x_prev, x_last = solver.solve_levels(
                oracle, psi, mu, domain, 2**j, 2 ** (j - 1), rng, (m,)
            )
        elif j == j0 + 1:
            x_prev = solver.solve(oracle, psi, mu, domain, 2 ** (j - 1), rng, (m,))
            x_last = np.broadcast_to(ellipsoid_level(j), (m, d))
        else:
            # the ellipsoid solve is deterministic: one run serves every row
            x_prev = np.broadcast_to(ellipsoid_level(j - 1), (m, d))
            x_last = np.broadcast_to(ellipsoid_level(j), (m, d))
        points[rows] = x0 + 2**j * (x_last - x_prev)
        delta = finite_sum.counter.count - before
        queries[rows] = delta // m
        queries[rows[0]] += delta % m  # shared ellipsoid run: remainder to one row
    return points, queries, levels


def unbiased_opt_est(
    finite_sum: FiniteSumOracle,
    x0: Array,
    radius: float,
    mu: float,
    G: float,
    rng: np.random.Generator,
    solver: Optional[EpochSgdSolver] = None,
    j0: Optional[int] = None,
) -> OptEstimate:
    """One exactly unbiased draw: E x_hat = x_star, variance and expected cost
    logarithmic in n and d."""
    pts, q, levels = unbiased_opt_est_batch(
        finite_sum, x0, radius, mu, G, rng, 1, solver=solver, j0=j0
    )
    return OptEstimate(point=pts[0], queries=int(q[0]), levels=[int(levels[0])])
