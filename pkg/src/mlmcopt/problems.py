"""Oracle and domain abstractions plus benchmark problems with analytic ground truth.

Points are plain numpy arrays. Every operation accepts either a single point of
shape ``(d,)`` or a batch of shape ``(m, d)`` and returns the matching shape;
batches are how replicated Monte-Carlo work is vectorized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExhaustedError, InvalidInputError

Array = np.ndarray


def _check_finite(x: Array, name: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} must be finite")


def _as_batch(x: Array) -> tuple[Array, bool]:
    """Return (2-d view, was_single). Scalars are treated as d=1 points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        return x.reshape(1, -1), True
    if x.ndim == 2:
        return x, False
    raise InvalidInputError(f"expected point or batch of points, got ndim={x.ndim}")


class BudgetPool:
    """Shared hard cap that one or more counters draw from."""

    __slots__ = ("remaining",)

    def __init__(self, cap: int) -> None:
        if cap < 0:
            raise InvalidInputError("cap must be >= 0")
        self.remaining = int(cap)

    def draw(self, k: int) -> None:
        if k > self.remaining:
            raise BudgetExhaustedError(f"query cap exhausted ({k} > {self.remaining} left)")
        self.remaining -= k


class QueryCounter:
    """Monotone oracle-query tally.

    Workers own separate counters; merging is addition. A counter attached to
    a ``BudgetPool`` raises ``BudgetExhaustedError`` when an increment would
    overdraw the pool, before the queries are tallied (aborted work is never
    counted).
    """

    __slots__ = ("count", "pool")

    def __init__(self) -> None:
        self.count = 0
        self.pool: Optional[BudgetPool] = None

    def add(self, k: int) -> None:
        if self.pool is not None:
            self.pool.draw(k)
        self.count += k

    def merge(self, other: "QueryCounter") -> None:
        self.count += other.count


@dataclass
class StochasticGradientOracle:
    """Unbiased subgradient estimator with bounded second moment.

    ``sampler(x, rng)`` maps a batch ``(m, d)`` to one subgradient sample per
    row; the mean over samples at fixed x lies in the subdifferential and
    E||g||^2 <= lipschitz_bound**2 everywhere. Each sampled row counts as one
    query.
    """

    dimension: int
    lipschitz_bound: float
    sampler: Callable[[Array, np.random.Generator], Array]
    counter: QueryCounter = field(default_factory=QueryCounter)

    @property
    def queries(self) -> int:
        return self.counter.count

    def sample(self, x: Array, rng: np.random.Generator) -> Array:
        xb, single = _as_batch(x)
        _check_finite(xb)
        g = self.sampler(xb, rng)
        self.counter.add(xb.shape[0])
        return g[0] if single else g


def sample_subgradient(oracle: StochasticGradientOracle, x: Array, rng: np.random.Generator) -> Array:
    """Draw one subgradient sample at x, incrementing the counter by one per row."""
    return oracle.sample(x, rng)


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


class ConvexDomain:
    """Closed convex set with exact (or tolerance-certified) Euclidean projection."""

    dimension: int
    kind: str = "abstract"

    def project(self, x: Array) -> Array:
        xb, single = _as_batch(x)
        _check_finite(xb)
        p = self._project_batch(xb)
        return p[0] if single else p

    def _project_batch(self, x: Array) -> Array:  # pragma: no cover - abstract
        raise NotImplementedError

    def contains(self, x: Array, tol: float = 1e-9) -> bool:
        xb, _ = _as_batch(x)
        p = self._project_batch(xb)
        return bool(np.all(np.linalg.norm(p - xb, axis=-1) <= tol))


def project(domain: ConvexDomain, x: Array) -> Array:
    """Euclidean projection of x onto the domain."""
    return domain.project(x)


class WholeSpace(ConvexDomain):
    kind = "whole-space"

    def __init__(self, dimension: int):
        self.dimension = dimension

    def _project_batch(self, x: Array) -> Array:
        return x.copy()


class Ball(ConvexDomain):
    kind = "ball"

    def __init__(self, center: Array, radius: float):
        center = np.asarray(center, dtype=float)
        if radius <= 0:
            raise InvalidInputError("ball radius must be positive")
        self.center = center
        self.radius = float(radius)
        self.dimension = center.shape[0]

    def _project_batch(self, x: Array) -> Array:
        diff = x - self.center
        sq = np.einsum("...i,...i->...", diff, diff)
        scale = np.minimum(1.0, self.radius / np.sqrt(np.maximum(sq, 1e-300)))
        return self.center + diff * scale[..., None]


class Box(ConvexDomain):
    kind = "box"

    def __init__(self, lower: Array, upper: Array):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise InvalidInputError("box lower bound exceeds upper bound")
        self.dimension = self.lower.shape[0]

    def _project_batch(self, x: Array) -> Array:
        return np.clip(x, self.lower, self.upper)


class Simplex(ConvexDomain):
    """Probability simplex {x >= 0, sum x = 1}."""

    kind = "simplex"

    def __init__(self, dimension: int):
        self.dimension = dimension

    def _project_batch(self, x: Array) -> Array:
        # sort-based projection, vectorized across rows
        d = x.shape[-1]
        u = -np.sort(-x, axis=-1)
        css = np.cumsum(u, axis=-1) - 1.0
        idx = np.arange(1, d + 1)
        cond = u - css / idx > 0
        rho = d - 1 - np.argmax(cond[:, ::-1], axis=-1)
        theta = css[np.arange(x.shape[0]), rho] / (rho + 1.0)
        return np.maximum(x - theta[:, None], 0.0)


class BallIntersection(ConvexDomain):
    """Intersection ball(center, radius) ∩ inner domain.

    Projection uses two exact fast paths (either set's projection landing in
    the other set is the answer) and falls back to Dykstra's alternating
    scheme, which converges to the true projection for convex sets.
    """

    kind = "intersection"

    def __init__(self, ball: Ball, inner: ConvexDomain, tol: float = 1e-12, max_iter: int = 500):
        if ball.dimension != inner.dimension:
            raise InvalidInputError("dimension mismatch in intersection domain")
        self.ball = ball
        self.inner = inner
        self.tol = tol
        self.max_iter = max_iter
        self.dimension = ball.dimension

    def _project_batch(self, x: Array) -> Array:
        pb = self.ball._project_batch(x)
        if self.inner.contains(pb, tol=1e-12):
            return pb
        pi = self.inner._project_batch(x)
        in_ball = np.linalg.norm(pi - self.ball.center, axis=-1) <= self.ball.radius + 1e-12
        out = np.where(in_ball[:, None], pi, np.nan)
        todo = ~in_ball
        if np.any(todo):
            out[todo] = self._dykstra(x[todo])
        return out

    def _dykstra(self, x: Array) -> Array:
        z = x.copy()
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(self.max_iter):
            y = self.ball._project_batch(z + p)
            p = z + p - y
            z_new = self.inner._project_batch(y + q)
            q = y + q - z_new
            if np.max(np.linalg.norm(z_new - z, axis=-1)) < self.tol:
                z = z_new
                break
            z = z_new
        return z


def intersect_ball(domain: ConvexDomain, center: Array, radius: float) -> ConvexDomain:
    """X ∩ ball(center, radius), collapsing to the ball when it lies inside X."""
    center = np.asarray(center, dtype=float)
    ball = Ball(center, radius)
    if isinstance(domain, WholeSpace):
        return ball
    if isinstance(domain, Box) and np.all(center - radius >= domain.lower) and np.all(
        center + radius <= domain.upper
    ):
        return ball
    if isinstance(domain, Ball) and (
        np.linalg.norm(center - domain.center) + radius <= domain.radius
    ):
        return ball
    return BallIntersection(ball, domain)


# ---------------------------------------------------------------------------
# Simple regularizer
# ---------------------------------------------------------------------------


@dataclass
class SimpleRegularizer:
    """psi(x) = (lam/2) ||x - center||^2 + <linear, x>, with exact prox steps."""

    quadratic_weight: float
    center: Array
    linear: Optional[Array] = None

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.linear is None:
            self.linear = np.zeros_like(self.center)
        else:
            self.linear = np.atleast_1d(np.asarray(self.linear, dtype=float))
        if self.quadratic_weight < 0:
            raise InvalidInputError("quadratic weight must be nonnegative")

    def value(self, x: Array) -> Array:
        xb, single = _as_batch(x)
        v = 0.5 * self.quadratic_weight * np.sum((xb - self.center) ** 2, axis=-1)
        v = v + xb @ self.linear
        return v[0] if single else v

    def grad(self, x: Array) -> Array:
        xb, single = _as_batch(x)
        g = self.quadratic_weight * (xb - self.center) + self.linear
        return g[0] if single else g

    def prox_step(self, u: Array, y: Array, eta: float, domain: ConvexDomain) -> Array:
        """argmin_{x in X} <u, x> + psi(x) + (1/(2 eta)) ||x - y||^2 (closed form + projection)."""
        if eta <= 0:
            raise InvalidInputError("eta must be positive")
        ub, _ = _as_batch(u)
        yb, single = _as_batch(y)
        lam = self.quadratic_weight
        raw = (lam * eta * self.center + yb - eta * (ub + self.linear)) / (1.0 + lam * eta)
        p = domain.project(raw)
        return p if not single else np.reshape(p, yb.shape)[0]

    def argmin(self, domain: ConvexDomain) -> Array:
        """Minimizer of psi over the domain (start point of epoch SGD)."""
        lam = self.quadratic_weight
        if lam > 0:
            return domain.project(self.center - self.linear / lam)
        if np.any(self.linear != 0):
            raise InvalidInputError("argmin of a pure linear regularizer is unsupported")
        # psi == 0: the center acts as the anchor point
        return domain.project(self.center)


# ---------------------------------------------------------------------------
# Benchmark problems
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkProblem:
    """Ground-truth bundle: oracle + regularizer + domain + analytic answers.

    ``exact_prox(lam, y)`` is the proximal point of f alone (regularizer
    excluded) over the domain. ``value``/``full_subgradient`` evaluate and
    differentiate the deterministic f, for reference solves and audits.
    """

    name: str
    oracle: StochasticGradientOracle
    regularizer: SimpleRegularizer
    domain: ConvexDomain
    value: Callable[[Array], Array]
    full_subgradient: Callable[[Array], Array]
    exact_minimizer: Optional[Array] = None
    exact_prox: Optional[Callable[[float, Array], Array]] = None
    strong_convexity: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.oracle.dimension

    def objective(self, x: Array) -> Array:
        """F = f + psi."""
        return self.value(x) + self.regularizer.value(x)


def soft_threshold(y: Array, thresh: float) -> Array:
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - thresh, 0.0)


def soft_threshold_problem(center: float = 2.0, lam: float = 1.0) -> BenchmarkProblem:
    """1-d f(x) = |x| with psi = (lam/2)(x - center)^2; everything analytic.

    The subgradient oracle is the deterministic sign (0 at the kink, the
    minimum-norm selection), which is the only selection compatible with
    G = 1: a mean-(+-1) sample with second moment <= 1 has zero variance.
    """

    def sampler(x: Array, rng: np.random.Generator) -> Array:
        return np.sign(x)

    oracle = StochasticGradientOracle(dimension=1, lipschitz_bound=1.0, sampler=sampler)
    reg = SimpleRegularizer(quadratic_weight=lam, center=np.array([center]))
    x_star = soft_threshold(np.array([center]), 1.0 / lam)

    def exact_prox(plam: float, y: Array) -> Array:
        if plam <= 0:
            raise InvalidInputError("prox regularization level must be positive")
        return soft_threshold(np.asarray(y, dtype=float), 1.0 / plam)

    return BenchmarkProblem(
        name="soft_threshold",
        oracle=oracle,
        regularizer=reg,
        domain=WholeSpace(1),
        value=lambda x: np.abs(np.asarray(x)).sum(axis=-1),
        full_subgradient=lambda x: np.sign(x),
        exact_minimizer=x_star,
        exact_prox=exact_prox,
        strong_convexity=lam,
        meta={"kind": "soft_threshold", "center": center, "lam": lam},
    )


def l1_regression_problem(
    n: int,
    d: int,
    rng: np.random.Generator,
    domain: Optional[ConvexDomain] = None,
    lam: float = 0.0,
    reg_center: Optional[Array] = None,
    noise: float = 0.1,
) -> BenchmarkProblem:
    """f(x) = (1/n) sum_i |<a_i, x> - b_i| with uniform index sampling."""
    a = rng.standard_normal((n, d))
    x_ref = rng.uniform(0.0, 1.0, size=d)
    x_ref /= x_ref.sum()
    b = a @ x_ref + noise * rng.standard_normal(n)
    if domain is None:
        domain = Simplex(d)
    g_bound = float(np.max(np.linalg.norm(a, axis=1)))

    def sampler(x: Array, gen: np.random.Generator) -> Array:
        idx = gen.integers(0, n, size=x.shape[0])
        rows = a[idx]
        resid = np.einsum("ij,ij->i", rows, x) - b[idx]
        return np.sign(resid)[:, None] * rows

    def value(x: Array) -> Array:
        xb, single = _as_batch(x)
        v = np.mean(np.abs(xb @ a.T - b), axis=-1)
        return v[0] if single else v

    def full_subgradient(x: Array) -> Array:
        xb, single = _as_batch(x)
        s = np.sign(xb @ a.T - b)
        g = (s @ a) / n
        return g[0] if single else g

    center = np.zeros(d) if reg_center is None else np.asarray(reg_center, dtype=float)
    reg = SimpleRegularizer(quadratic_weight=lam, center=center)
    return BenchmarkProblem(
        name="l1_regression",
        oracle=StochasticGradientOracle(dimension=d, lipschitz_bound=g_bound, sampler=sampler),
        regularizer=reg,
        domain=domain,
        value=value,
        full_subgradient=full_subgradient,
        strong_convexity=lam,
        meta={"kind": "l1_regression", "a": a, "b": b, "n": n, "d": d, "lam": lam},
    )


def quadratic_problem(
    target: Array,
    lam: float = 0.0,
    reg_center: Optional[Array] = None,
    noise: float = 0.0,
    domain: Optional[ConvexDomain] = None,
    g_bound: Optional[float] = None,
) -> BenchmarkProblem:
    """f(x) = 0.5 ||x - target||^2 with an optionally noisy gradient oracle."""
    target = np.asarray(target, dtype=float)
    d = target.shape[0]
    if domain is None:
        domain = WholeSpace(d)

    def sampler(x: Array, gen: np.random.Generator) -> Array:
        g = x - target
        if noise > 0:
            g = g + noise * gen.standard_normal(x.shape)
        return g

    def exact_prox(plam: float, y: Array) -> Array:
        if plam <= 0:
            raise InvalidInputError("prox regularization level must be positive")
        return domain.project((target + plam * np.asarray(y, dtype=float)) / (1.0 + plam))

    center = np.zeros(d) if reg_center is None else np.asarray(reg_center, dtype=float)
    if g_bound is None:
        # valid on any ball the experiments use; callers override for tight audits
        g_bound = float(4.0 * (np.linalg.norm(target) + 1.0) + 3.0 * noise)
    return BenchmarkProblem(
        name="quadratic",
        oracle=StochasticGradientOracle(dimension=d, lipschitz_bound=g_bound, sampler=sampler),
        regularizer=SimpleRegularizer(quadratic_weight=lam, center=center),
        domain=domain,
        value=lambda x: 0.5 * np.sum((np.asarray(x) - target) ** 2, axis=-1),
        full_subgradient=lambda x: np.asarray(x) - target,
        exact_minimizer=domain.project(target) if lam == 0 else None,
        exact_prox=exact_prox if isinstance(domain, WholeSpace) else exact_prox,
        strong_convexity=lam + 1.0,
        meta={"kind": "quadratic", "target": target, "lam": lam, "noise": noise},
    )


# ---------------------------------------------------------------------------
# Reference prox solves
# ---------------------------------------------------------------------------


def exact_prox_reference(problem: BenchmarkProblem, lam: float, y: Array) -> Array:
    """P_{f,lam}(y) = argmin_{x in X} f(x) + (lam/2)||x - y||^2.

    Uses the problem's analytic prox when declared; otherwise a deterministic
    projected-subgradient solve on the lam-strongly-convex objective, run to a
    gradient-mapping norm of 1e-8. The fallback is a test oracle only.
    """
    if lam <= 0:
        raise InvalidInputError("lam must be positive")
    y = np.asarray(y, dtype=float)
    _check_finite(y, "y")
    if problem.exact_prox is not None:
        return problem.exact_prox(lam, y)
    return _fallback_prox(problem, lam, y)


def _fallback_prox(
    problem: BenchmarkProblem,
    lam: float,
    y: Array,
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> Array:
    x = problem.domain.project(y)
    for t in range(1, max_iter + 1):
        g = problem.full_subgradient(x) + lam * (x - y)
        eta = min(1.0 / lam, 2.0 / (lam * (t + 1)))
        x_next = problem.domain.project(x - eta * g)
        gap = np.linalg.norm(x - x_next) / eta
        if gap <= tol and t > 10:
            return x_next
        x = x_next
    return x


def moreau_value(problem: BenchmarkProblem, lam: float, y: Array) -> float:
    """f_lam(y) evaluated through the exact prox."""
    p = exact_prox_reference(problem, lam, y)
    return float(problem.value(p) + 0.5 * lam * np.sum((p - y) ** 2))


def moreau_grad_reference(problem: BenchmarkProblem, lam: float, y: Array) -> Array:
    """nabla f_lam(y) = lam (y - P_{f,lam}(y))."""
    return lam * (np.asarray(y, dtype=float) - exact_prox_reference(problem, lam, y))


# ---------------------------------------------------------------------------
# JSON descriptors
# ---------------------------------------------------------------------------


def domain_to_dict(domain: ConvexDomain) -> dict:
    if isinstance(domain, WholeSpace):
        return {"kind": "whole-space", "dimension": domain.dimension}
    if isinstance(domain, Ball):
        return {"kind": "ball", "center": domain.center.tolist(), "radius": domain.radius}
    if isinstance(domain, Box):
        return {"kind": "box", "lower": domain.lower.tolist(), "upper": domain.upper.tolist()}
    if isinstance(domain, Simplex):
        return {"kind": "simplex", "dimension": domain.dimension}
    if isinstance(domain, BallIntersection):
        return {
            "kind": "intersection",
            "ball": domain_to_dict(domain.ball),
            "inner": domain_to_dict(domain.inner),
        }
    raise InvalidInputError(f"unknown domain type {type(domain)!r}")


def domain_from_dict(spec: dict) -> ConvexDomain:
    kind = spec["kind"]
    if kind == "whole-space":
        return WholeSpace(int(spec["dimension"]))
    if kind == "ball":
        return Ball(np.asarray(spec["center"], dtype=float), float(spec["radius"]))
    if kind == "box":
        return Box(np.asarray(spec["lower"], dtype=float), np.asarray(spec["upper"], dtype=float))
    if kind == "simplex":
        return Simplex(int(spec["dimension"]))
    if kind == "intersection":
        ball = domain_from_dict(spec["ball"])
        if not isinstance(ball, Ball):
            raise InvalidInputError("intersection domain must put the ball first")
        return BallIntersection(ball, domain_from_dict(spec["inner"]))
    raise InvalidInputError(f"unknown domain kind {kind!r}")


def problem_to_json(problem: BenchmarkProblem) -> str:
    meta = problem.meta
    kind = meta.get("kind")
    if kind == "soft_threshold":
        payload = {"kind": kind, "center": meta["center"], "lam": meta["lam"]}
    elif kind == "l1_regression":
        payload = {
            "kind": kind,
            "a": meta["a"].tolist(),
            "b": meta["b"].tolist(),
            "lam": meta["lam"],
            "domain": domain_to_dict(problem.domain),
        }
    elif kind == "quadratic":
        payload = {
            "kind": kind,
            "target": meta["target"].tolist(),
            "lam": meta["lam"],
            "noise": meta["noise"],
        }
    else:
        raise InvalidInputError(f"problem kind {kind!r} is not serializable")
    payload["G"] = problem.oracle.lipschitz_bound
    payload["dimension"] = problem.dimension
    return json.dumps(payload, sort_keys=True)


def problem_from_json(text: str, rng: Optional[np.random.Generator] = None) -> BenchmarkProblem:
    spec = json.loads(text)
    kind = spec["kind"]
    if kind == "soft_threshold":
        return soft_threshold_problem(center=spec["center"], lam=spec["lam"])
    if kind == "quadratic":
        return quadratic_problem(
            np.asarray(spec["target"], dtype=float), lam=spec["lam"], noise=spec["noise"]
        )
    if kind == "l1_regression":
        a = np.asarray(spec["a"], dtype=float)
        b = np.asarray(spec["b"], dtype=float)
        prob = l1_regression_problem(
            a.shape[0], a.shape[1], rng or np.random.default_rng(0),
            domain=domain_from_dict(spec["domain"]), lam=spec["lam"],
        )
        # overwrite the generated data with the serialized instance
        prob.meta["a"] = a
        prob.meta["b"] = b
        return _rebind_l1(prob, a, b)
    raise InvalidInputError(f"unknown problem kind {kind!r}")


def _rebind_l1(prob: BenchmarkProblem, a: Array, b: Array) -> BenchmarkProblem:
    n = a.shape[0]

    def sampler(x: Array, gen: np.random.Generator) -> Array:
        idx = gen.integers(0, n, size=x.shape[0])
        rows = a[idx]
        resid = np.einsum("ij,ij->i", rows, x) - b[idx]
        return np.sign(resid)[:, None] * rows

    def value(x: Array) -> Array:
        xb, single = _as_batch(x)
        v = np.mean(np.abs(xb @ a.T - b), axis=-1)
        return v[0] if single else v

    def full_subgradient(x: Array) -> Array:
        xb, single = _as_batch(x)
        g = (np.sign(xb @ a.T - b) @ a) / n
        return g[0] if single else g

    prob.oracle = StochasticGradientOracle(
        dimension=a.shape[1],
        lipschitz_bound=float(np.max(np.linalg.norm(a, axis=1))),
        sampler=sampler,
    )
    prob.value = value
    prob.full_subgradient = full_subgradient
    return prob
