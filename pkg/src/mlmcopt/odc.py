"""Optimal-distance-convergence solvers.

An ODC solver spends a query budget T on a mu-strongly-convex composite
objective F = f + psi and returns x with E||x - x_star||^2 <= c G^2/(mu^2 T).
Epoch-restarted SGD achieves this with c = 32; the ellipsoid method trades
dimension dependence for a geometric rate and backs the zero-bias estimator.

All iterate math runs on batches of shape ``(m, d)`` so replicated draws can
share one vectorized run. Rows evolve independently (the oracle sampler is
responsible for drawing independent noise per row).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

from .errors import InvalidInputError, NumericFailureError
from .problems import (
    Array,
    Ball,
    ConvexDomain,
    SimpleRegularizer,
    StochasticGradientOracle,
    _check_finite,
)


@dataclass
class SolverConfig:
    """Epoch-SGD schedule: eta_1 = step_scale/mu, T_1 = epoch_length0, then
    epoch lengths double and step sizes halve (eta_k T_k stays 4/mu)."""

    epoch_length0: int = 16
    step_scale: float = 0.25


DEFAULT_CONFIG = SolverConfig()


def composite_prox_step(
    x: Array,
    g: Array,
    regularizer: SimpleRegularizer,
    eta: float,
    domain: ConvexDomain,
) -> Array:
    """One composite gradient step: argmin_X <g,z> + psi(z) + ||z-x||^2/(2 eta).

    For psi = (mu/2)||z - c||^2 this is Proj_X((x + mu*eta*c - eta*g)/(1 + mu*eta)).
    """
    return regularizer.prox_step(g, x, eta, domain)


def run_epoch(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    x_start: Array,
    eta: float,
    length: int,
    domain: ConvexDomain,
    rng: np.random.Generator,
) -> tuple[Array, Array]:
    """Run one epoch of ``length`` iterates at fixed step size.

    The first iterate takes a pure psi-prox step (no gradient draw); the
    remaining ``length - 1`` steps each draw one subgradient sample. Returns
    (epoch average, last iterate). ``x_start`` must be a 2-d batch; the prox
    step constants are hoisted out of the loop, so this is the hot path for
    every solver in the package.
    """
    lam = regularizer.quadratic_weight
    inv = 1.0 / (1.0 + lam * eta)
    shift = (lam * eta) * regularizer.center - eta * regularizer.linear
    proj = domain._project_batch
    sampler = oracle.sampler
    counter = oracle.counter
    m = x_start.shape[0]
    x = proj((x_start + shift) * inv)
    acc = x.copy()
    for _ in range(length - 1):
        g = sampler(x, rng)
        counter.add(m)
        x = proj((x - eta * g + shift) * inv)
        acc += x
    return acc / length, x


def epochs_within(budget: int, epoch_length0: int = 16) -> int:
    """Number of whole epochs the schedule fits in ``budget`` iterates."""
    k, total, length = 0, 0, epoch_length0
    while total + length <= budget:
        total += length
        k += 1
        length *= 2
    return k


def _epoch_sgd_boundaries(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    mu: float,
    domain: ConvexDomain,
    budget: int,
    rng: np.random.Generator,
    batch_shape: tuple = (),
    config: SolverConfig = DEFAULT_CONFIG,
) -> list[Array]:
    """All epoch-boundary averages, index 0 being the psi-argmin start point."""
    if mu <= 0:
        raise InvalidInputError("mu must be positive")
    if budget < 1:
        raise InvalidInputError("budget must be >= 1")
    start = regularizer.argmin(domain)
    single = batch_shape == ()
    rows = 1 if single else int(np.prod(batch_shape))
    x = np.broadcast_to(start, (rows,) + start.shape).copy()
    boundaries = [x]
    eta = config.step_scale / mu
    length = config.epoch_length0
    total = 0
    while total + length <= budget:
        avg, _ = run_epoch(oracle, regularizer, x, eta, length, domain, rng)
        boundaries.append(avg)
        x = avg
        total += length
        length *= 2
        eta /= 2
    if single:
        return [b[0] for b in boundaries]
    if batch_shape != (rows,):
        return [b.reshape(batch_shape + start.shape) for b in boundaries]
    return boundaries


def epoch_sgd(
    oracle: StochasticGradientOracle,
    regularizer: SimpleRegularizer,
    mu: float,
    domain: ConvexDomain,
    budget: int,
    rng: np.random.Generator,
    batch_shape: tuple = (),
    config: SolverConfig = DEFAULT_CONFIG,
) -> Array:
    """Composite epoch-restarted SGD.

    Guarantees E F(x) - F(x_star) <= 16 G^2/(mu T) and
    E||x - x_star||^2 <= 32 G^2/(mu^2 T) using at most ``budget`` queries
    (a partial final epoch is never run).
    """
    return _epoch_sgd_boundaries(
        oracle, regularizer, mu, domain, budget, rng, batch_shape, config
    )[-1]


@runtime_checkable
class OdcSolver(Protocol):
    """Budgeted solver satisfying the distance-convergence contract."""

    c: float

    def solve(
        self,
        oracle: StochasticGradientOracle,
        regularizer: SimpleRegularizer,
        mu: float,
        domain: ConvexDomain,
        budget: int,
        rng: np.random.Generator,
        batch_shape: tuple = (),
    ) -> Array:  # pragma: no cover - protocol
        ...


class EpochSgdSolver:
    """Epoch SGD as an ODC solver (c = 32), with coupled level extraction.

    ``solve_levels`` runs once with the larger budget and reads the points a
    budget-1 and a budget-``prev_budget`` run would have produced from the
    epoch boundaries of the same trajectory: the first epochs of the long run
    are distributed exactly like a whole short run, so each extracted point
    keeps the marginal law of an independent call while sharing randomness.
    """

    c = 32.0

    def __init__(self, config: SolverConfig = DEFAULT_CONFIG):
        self.config = config

    def solve(self, oracle, regularizer, mu, domain, budget, rng, batch_shape=()):
        return epoch_sgd(oracle, regularizer, mu, domain, budget, rng, batch_shape, self.config)

    def solve_levels(self, oracle, regularizer, mu, domain, budget, prev_budget, rng, batch_shape=()):
        boundaries = _epoch_sgd_boundaries(
            oracle, regularizer, mu, domain, budget, rng, batch_shape, self.config
        )
        k_prev = min(epochs_within(prev_budget, self.config.epoch_length0), len(boundaries) - 1)
        return boundaries[0], boundaries[k_prev], boundaries[-1]


# ---------------------------------------------------------------------------
# Ellipsoid method
# ---------------------------------------------------------------------------

FirstOrderOracle = Callable[[Array], tuple[float, Array]]


def ellipsoid(
    x0: Array,
    first_order: FirstOrderOracle,
    radius: float,
    mu: float,
    lipschitz_bound: float,
    budget: int,
    trace: Optional[list] = None,
) -> Array:
    """Central-cut ellipsoid method on ball(x0, radius).

    Makes at most ``budget`` first-order queries and returns the best queried
    point; for G-Lipschitz, mu-strongly-convex f the squared distance to the
    minimizer is at most (8 G^2/mu^2) exp(-budget/(2 d^2)). Centers outside
    the ball are handled with feasibility cuts (which cost no query). A zero
    subgradient ends the run at the exact minimizer. ``trace``, if given,
    collects (center, shape matrix) per cut for localization audits.
    """
    x0 = np.asarray(x0, dtype=float)
    _check_finite(x0, "x0")
    if budget < 0:
        raise InvalidInputError("budget must be >= 0")
    d = x0.shape[0]
    if budget == 0:
        return x0.copy()
    if d == 1:
        return _ellipsoid_1d(x0, first_order, radius, budget, trace)

    center = x0.copy()
    shape = radius**2 * np.eye(d)
    best_x, best_val = x0.copy(), np.inf
    queries = 0
    iterations = 0
    max_iterations = 60 * budget + 400
    scale = d * d / (d * d - 1.0)
    while queries < budget and iterations < max_iterations:
        iterations += 1
        off = center - x0
        dist = np.linalg.norm(off)
        if dist > radius:
            g = off  # feasibility cut, no oracle charge
        else:
            val, g = first_order(center)
            queries += 1
            if val < best_val:
                best_val, best_x = float(val), center.copy()
            if np.linalg.norm(g) == 0.0:
                return center.copy()
        mg = shape @ g
        s = float(g @ mg)
        if not np.isfinite(s) or s <= 0:
            raise NumericFailureError(
                "ellipsoid shape matrix became numerically singular",
                diagnostics={"iteration": iterations, "s": s, "center": center},
            )
        b = mg / np.sqrt(s)
        center = center - b / (d + 1)
        shape = scale * (shape - (2.0 / (d + 1)) * np.outer(b, b))
        shape = 0.5 * (shape + shape.T)  # suppress asymmetry drift
        if trace is not None:
            trace.append((center.copy(), shape.copy()))
    return best_x


def _ellipsoid_1d(x0, first_order, radius, budget, trace):
    # the d = 1 central cut is interval bisection
    lo, hi = float(x0[0] - radius), float(x0[0] + radius)
    best_x, best_val = x0.copy(), np.inf
    for _ in range(budget):
        mid = 0.5 * (lo + hi)
        val, g = first_order(np.array([mid]))
        if val < best_val:
            best_val, best_x = float(val), np.array([mid])
        if g[0] == 0.0:
            return np.array([mid])
        if g[0] > 0:
            hi = mid
        else:
            lo = mid
        if trace is not None:
            half = 0.5 * (hi - lo)
            trace.append((np.array([0.5 * (lo + hi)]), np.array([[half**2]])))
    return best_x
