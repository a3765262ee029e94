"""Minimizing the maximum of N Lipschitz convex functions.

Pipeline: replace f_max = max_i f_i by its log-sum-exp smoothing at scale
eps' = eps/(2 ln N) (uniformly within eps/2 of the max); estimate softmax
gradients by rejection sampling against probabilities precomputed at an
anchor, valid in a ball of radius r_eps = eps'/G around it; solve the
ball-restricted prox subproblems with epoch SGD (the BROO); pick each
regularization level by bisection on the prox movement; and drive everything
with a Monteiro-Svaiter-type accelerated proximal point outer loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolationError, InvalidInputError, OutOfBallError
from .estimators import mor_grad_est
from .odc import EpochSgdSolver, epoch_sgd
from .problems import (
    Array,
    ConvexDomain,
    QueryCounter,
    SimpleRegularizer,
    StochasticGradientOracle,
    intersect_ball,
)


@dataclass
class MaxProblem:
    """Component family f_1..f_N with separate value and subgradient tallies.

    ``values(x)`` evaluates every component at one point (N value queries);
    ``value_rows(idx, x)`` / ``grad_rows(idx, x)`` evaluate component idx[r]
    at row r (one query per row). ``value_one``, when provided, is a scalar
    fast path for single evaluations (same queries, less array overhead).
    """

    n_components: int
    dimension: int
    lipschitz_bound: float
    values: Callable[[Array], Array]
    value_rows: Callable[[np.ndarray, Array], Array]
    grad_rows: Callable[[np.ndarray, Array], Array]
    value_one: Optional[Callable[[int, Array], float]] = None
    value_counter: QueryCounter = field(default_factory=QueryCounter)
    grad_counter: QueryCounter = field(default_factory=QueryCounter)
    # (a, b) matrices when the components are affine; enables the scalar
    # fast path for single sequential solver chains
    affine: Optional[tuple[Array, Array]] = None

    def all_values(self, x: Array) -> Array:
        self.value_counter.add(self.n_components)
        return self.values(x)

    def component_values(self, idx: np.ndarray, x: Array) -> Array:
        self.value_counter.add(len(idx))
        return self.value_rows(idx, x)

    def component_grads(self, idx: np.ndarray, x: Array) -> Array:
        self.grad_counter.add(len(idx))
        return self.grad_rows(idx, x)

    def f_max(self, x: Array) -> float:
        """Uncounted reference evaluation (for reporting, not the algorithm)."""
        return float(np.max(self.values(x)))


def affine_max_problem(a: Array, b: Array) -> MaxProblem:
    """f_i(x) = <a_i, x> + b_i."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = a.shape

    def values(x: Array) -> Array:
        return a @ np.asarray(x, dtype=float) + b

    def value_rows(idx: np.ndarray, x: Array) -> Array:
        return np.einsum("ij,ij->i", a[idx], x) + b[idx]

    def grad_rows(idx: np.ndarray, x: Array) -> Array:
        return a[idx]

    def value_one(i: int, x: Array) -> float:
        return float(a[i] @ x) + b[i]

    prob = MaxProblem(
        n_components=n,
        dimension=d,
        lipschitz_bound=float(np.max(np.linalg.norm(a, axis=1))),
        values=values,
        value_rows=value_rows,
        grad_rows=grad_rows,
        value_one=value_one,
    )
    prob.affine = (a, b)
    return prob


# ---------------------------------------------------------------------------
# Softmax smoothing and rejection sampling
# ---------------------------------------------------------------------------


def softmax_value_probs(problem: MaxProblem, x: Array, eps_prime: float) -> tuple[float, Array]:
    """Smoothed value eps' * log(sum_i exp(f_i(x)/eps')) and its weights,
    computed max-subtracted. Costs N value queries."""
    if eps_prime <= 0:
        raise InvalidInputError("eps_prime must be positive")
    if problem.n_components < 2:
        raise InvalidInputError("softmax smoothing needs at least two components")
    vals = problem.all_values(x)
    top = np.max(vals)
    expw = np.exp((vals - top) / eps_prime)
    z = expw.sum()
    value = float(top + eps_prime * np.log(z))
    return value, expw / z


@dataclass
class SoftmaxContext:
    """Anchor-point data enabling cheap sampling from p(x) near the anchor."""

    eps_prime: float
    anchor: Array
    anchor_values: Array
    probs: Array
    r_eps: float


def build_context(problem: MaxProblem, anchor: Array, eps_prime: float, G: float) -> SoftmaxContext:
    """One full data pass at the anchor: values and softmax weights."""
    anchor = np.asarray(anchor, dtype=float)
    vals = problem.all_values(anchor)
    shifted = (vals - np.max(vals)) / eps_prime
    w = np.exp(shifted)
    return SoftmaxContext(
        eps_prime=eps_prime,
        anchor=anchor,
        anchor_values=vals,
        probs=w / w.sum(),
        r_eps=eps_prime / G,
    )


class RejectionSampler:
    """Samples component indices from p(x) for x in ball(anchor, r_eps).

    Proposes i ~ p(anchor) and accepts with exp((f_i(x) - f_i(anchor))/eps' - 1),
    which is a valid probability inside the ball and at least e^-2, so each
    sample costs O(1) value queries and exactly one subgradient query.

    Proposal indices do not depend on the query point, so they are pre-drawn
    into a buffer; single-row queries then run a scalar loop over the buffer
    (same proposal sequence and same query tally as the vectorized path).
    """

    _BUFFER = 2048

    def __init__(self, ctx: SoftmaxContext, problem: MaxProblem):
        self.ctx = ctx
        self.problem = problem
        self.proposals = 0
        self.accepts = 0
        self._cum = np.cumsum(ctx.probs)
        self._cum[-1] = 1.0
        self._ball_tol_sq = (ctx.r_eps * (1 + 1e-9)) ** 2
        self._buf_idx: Optional[np.ndarray] = None
        self._buf_u: Optional[np.ndarray] = None
        self._ptr = 0

    def _check_in_ball(self, x: Array) -> None:
        diff = x - self.ctx.anchor
        if np.max(np.einsum("ij,ij->i", diff, diff)) > self._ball_tol_sq:
            raise OutOfBallError(
                f"query left the sampling ball of radius {self.ctx.r_eps:.3g}"
            )

    def _refill(self, rng: np.random.Generator) -> None:
        self._buf_idx = np.searchsorted(self._cum, rng.random(self._BUFFER), side="right")
        self._buf_u = rng.random(self._BUFFER)
        self._ptr = 0

    def _sample_one(self, x: Array, rng: np.random.Generator) -> int:
        value_one = self.problem.value_one
        anchor_vals = self.ctx.anchor_values
        inv_eps = 1.0 / self.ctx.eps_prime
        counter = self.problem.value_counter
        while True:
            if self._buf_idx is None or self._ptr >= self._BUFFER:
                self._refill(rng)
            i = int(self._buf_idx[self._ptr])
            u = self._buf_u[self._ptr]
            self._ptr += 1
            if value_one is not None:
                fx = value_one(i, x)
                counter.add(1)
            else:
                fx = float(self.problem.component_values(np.array([i]), x[None, :])[0])
            self.proposals += 1
            if u < math.exp((fx - anchor_vals[i]) * inv_eps - 1.0):
                self.accepts += 1
                return i

    def sample_indices(self, x: Array, rng: np.random.Generator) -> np.ndarray:
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_in_ball(xb)
        m = xb.shape[0]
        if m == 1:
            return np.array([self._sample_one(xb[0], rng)], dtype=np.int64)
        out = np.full(m, -1, dtype=np.int64)
        alive = np.arange(m)
        while alive.size:
            # inverse-cdf sampling from the anchor weights
            idx = np.searchsorted(self._cum, rng.random(alive.size), side="right")
            fx = self.problem.component_values(idx, xb[alive])
            q = np.exp((fx - self.ctx.anchor_values[idx]) / self.ctx.eps_prime - 1.0)
            self.proposals += alive.size
            accept = rng.random(alive.size) < q
            self.accepts += int(accept.sum())
            out[alive[accept]] = idx[accept]
            alive = alive[~accept]
        return out

    def sample_grads(self, x: Array, rng: np.random.Generator) -> Array:
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.sample_indices(xb, rng)
        return self.problem.component_grads(idx, xb)


def softmax_grad_est(
    ctx: SoftmaxContext, problem: MaxProblem, x: Array, rng: np.random.Generator
) -> Array:
    """Unbiased sample of the smoothed objective's gradient at x, norm <= G."""
    sampler = RejectionSampler(ctx, problem)
    return sampler.sample_grads(np.asarray(x, dtype=float).reshape(1, -1), rng)[0]


def smax_oracle(ctx: SoftmaxContext, problem: MaxProblem) -> StochasticGradientOracle:
    """Rejection sampling wrapped as a stochastic subgradient oracle."""
    sampler = RejectionSampler(ctx, problem)
    return StochasticGradientOracle(
        dimension=problem.dimension,
        lipschitz_bound=problem.lipschitz_bound,
        sampler=sampler.sample_grads,
    )


# ---------------------------------------------------------------------------
# Scalar fast path for single epoch-SGD chains on affine components
# ---------------------------------------------------------------------------


def _epoch_chain_affine(
    problem: MaxProblem,
    ctx: SoftmaxContext,
    lam: float,
    center: Array,
    domain: ConvexDomain,
    budget: int,
    rng: np.random.Generator,
    epoch_length0: int = 16,
) -> Array:
    """Epoch SGD with the rejection-sampled gradient, one sequential chain.

    Identical schedule, update math, and query counting as
    ``epoch_sgd(smax_oracle(ctx, problem), psi, lam, domain, budget, rng)``
    with psi = (lam/2)||. - center||^2; runs on python scalars because the
    chain cannot be vectorized and tiny-array overhead dominates otherwise.
    """
    from .problems import Ball, BallIntersection, Box

    a_mat, b_vec = problem.affine
    d = problem.dimension
    if isinstance(domain, Ball):
        ball, box = domain, None
    elif isinstance(domain, BallIntersection) and isinstance(domain.inner, Box):
        ball, box = domain.ball, domain.inner
    else:
        raise InvalidInputError("fast chain supports ball or ball-and-box domains")

    a = a_mat.tolist()
    b = b_vec.tolist()
    av = ctx.anchor_values.tolist()
    inv_eps = 1.0 / ctx.eps_prime
    bc = ball.center.tolist()
    br = ball.radius
    br_sq = br * br
    lo = box.lower.tolist() if box is not None else None
    hi = box.upper.tolist() if box is not None else None
    cen = np.asarray(center, dtype=float).tolist()
    rng_random = rng.random
    cum = np.cumsum(ctx.probs)
    cum[-1] = 1.0
    exp = math.exp
    rdim = range(d)

    buf_i: list = []
    buf_u: list = []
    ptr = 0

    def refill():
        nonlocal buf_i, buf_u, ptr
        n_draw = 4096
        buf_i = np.searchsorted(cum, rng_random(n_draw), side="right").tolist()
        buf_u = rng_random(n_draw).tolist()
        ptr = 0

    refill()

    def project(x: list) -> list:
        if box is not None:
            x = [min(max(x[t], lo[t]), hi[t]) for t in rdim]
            # a couple of alternating passes is exact whenever one set's
            # projection lands in the other (the usual case at these radii)
            for _ in range(40):
                s = sum((x[t] - bc[t]) ** 2 for t in rdim)
                if s <= br_sq * (1 + 1e-14):
                    break
                f = br / math.sqrt(s)
                x = [bc[t] + (x[t] - bc[t]) * f for t in rdim]
                clipped = [min(max(x[t], lo[t]), hi[t]) for t in rdim]
                moved = sum((clipped[t] - x[t]) ** 2 for t in rdim)
                x = clipped
                if moved < 1e-28:
                    break
            return x
        s = sum((x[t] - bc[t]) ** 2 for t in rdim)
        if s <= br_sq:
            return x
        f = br / math.sqrt(s)
        return [bc[t] + (x[t] - bc[t]) * f for t in rdim]

    x = project(list(cen))
    eta = 0.25 / lam
    length = epoch_length0
    total = 0
    proposals = 0
    accepts = 0
    while total + length <= budget:
        lam_eta = lam * eta
        inv = 1.0 / (1.0 + lam_eta)
        shift = [lam_eta * cen[t] for t in rdim]
        x = project([(x[t] + shift[t]) * inv for t in rdim])
        acc = list(x)
        for _ in range(length - 1):
            while True:
                if ptr >= 4096:
                    refill()
                i = buf_i[ptr]
                u = buf_u[ptr]
                ptr += 1
                proposals += 1
                ai = a[i]
                fx = b[i]
                for t in rdim:
                    fx += ai[t] * x[t]
                if u < exp((fx - av[i]) * inv_eps - 1.0):
                    accepts += 1
                    break
            x = project([(x[t] - eta * ai[t] + shift[t]) * inv for t in rdim])
            for t in rdim:
                acc[t] += x[t]
        x = [acc[t] / length for t in rdim]
        total += length
        length *= 2
        eta /= 2
        problem.value_counter.add(proposals)
        problem.grad_counter.add(accepts)
        proposals = 0
        accepts = 0
    return np.asarray(x)


# ---------------------------------------------------------------------------
# BROO: ball-restricted regularized optimization via epoch SGD
# ---------------------------------------------------------------------------


def broo_budget(G: float, lam: float, rho: float, p_fail: float, scale: float = 1.0) -> int:
    """Query budget for a ball oracle call at accuracy (lam/2) rho^2: the
    expected-suboptimality budget 32 G^2/(lam rho)^2, inflated by
    ceil(log2(1/p_fail)) to boost the confidence."""
    base = math.ceil(scale * 32.0 * G**2 / (lam * rho) ** 2)
    boost = max(1, math.ceil(math.log2(1.0 / p_fail))) if p_fail < 1 else 1
    return max(base, 1) * boost


def broo(
    problem: MaxProblem,
    anchor: Array,
    lam: float,
    rho: float,
    radius: float,
    domain: ConvexDomain,
    p_fail: float,
    rng: np.random.Generator,
    eps_prime: float,
    budget_scale: float = 1.0,
    solver: Optional[EpochSgdSolver] = None,
) -> Array:
    """Approximate minimizer of f_smax + (lam/2)||. - anchor||^2 over
    X ∩ ball(anchor, radius), within additive (lam/2) rho^2 of the ball
    optimum with probability at least 1 - p_fail. One full data pass for the
    anchor context, then pure rejection-sampled subgradient steps."""
    if min(lam, rho, radius) <= 0:
        raise InvalidInputError("lam, rho, radius must be positive")
    anchor = np.asarray(anchor, dtype=float)
    ctx = build_context(problem, anchor, eps_prime, problem.lipschitz_bound)
    if radius > ctx.r_eps * (1 + 1e-9):
        raise InvalidInputError("BROO radius exceeds the rejection-sampling radius")
    oracle = smax_oracle(ctx, problem)
    ball_domain = intersect_ball(domain, anchor, radius)
    psi = SimpleRegularizer(quadratic_weight=lam, center=anchor)
    budget = broo_budget(problem.lipschitz_bound, lam, rho, p_fail, budget_scale)
    if solver is not None:
        return solver.solve(oracle, psi, lam, ball_domain, budget, rng)
    return epoch_sgd(oracle, psi, lam, ball_domain, budget, rng)


# ---------------------------------------------------------------------------
# Lambda bisection
# ---------------------------------------------------------------------------


def alpha_tau(tau: float) -> float:
    """Momentum weight tau/(1 + tau + sqrt(1 + 2 tau)) placing y between x and v."""
    return tau / (1.0 + tau + math.sqrt(1.0 + 2.0 * tau))


BrooHandle = Callable[[Array, float, float, np.random.Generator], Array]


def lambda_bisection(
    x: Array,
    v: Array,
    acc: float,
    broo_handle: BrooHandle,
    lam_min: float,
    lam_max: float,
    G: float,
    R: float,
    r: float,
    rng: np.random.Generator,
    stats: Optional[dict] = None,
) -> float:
    """Pick a regularization level whose prox step moves y by roughly r.

    For each candidate lam the query point is
    y_lam = alpha_tau(2 acc lam) x + (1 - alpha_tau(2 acc lam)) v, and
    Delta(lam) = ||broo(y_lam, lam, r/17) - y_lam||. Halve lam from lam_max
    while Delta <= 13r/16, then geometrically bisect into [13r/16, 15r/16].
    Returns lam with the prox movement at most r; unless lam < 2 lam_min the
    movement is also at least 3r/4.
    """
    if not (0 < lam_min < lam_max):
        raise InvalidInputError("need 0 < lam_min < lam_max")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)

    cache: dict[float, float] = {}

    def delta(lam: float) -> float:
        if lam not in cache:
            w = alpha_tau(2.0 * acc * lam)
            y = w * x + (1.0 - w) * v
            cache[lam] = float(np.linalg.norm(broo_handle(y, lam, r / 17.0, rng) - y))
        return cache[lam]

    halving_cap = 2 * math.ceil(math.log2(lam_max / lam_min)) + 4
    lam = lam_max
    halvings = 0
    while lam >= lam_min and delta(lam) <= 13.0 * r / 16.0:
        lam /= 2.0
        halvings += 1
        if halvings > halving_cap:
            raise ContractViolationError("bisection halving loop exceeded its bound")
    if stats is not None:
        stats["halvings"] = halvings
    if lam <= lam_min:
        if stats is not None:
            stats["refinements"] = 0
            stats["broo_calls"] = len(cache)
        return 2.0 * lam
    lam_u, lam_l = 2.0 * lam, lam
    if delta(lam_l) <= 15.0 * r / 16.0:
        if stats is not None:
            stats["refinements"] = 0
            stats["broo_calls"] = len(cache)
        return lam_l
    lam_m = math.sqrt(lam_u * lam_l)
    refinements = 0
    refine_cap = 200
    while (
        not (13.0 * r / 16.0 <= delta(lam_m) <= 15.0 * r / 16.0)
        and math.log2(lam_u / lam_l) >= r / (8.0 * (R + G / lam_l))
    ):
        if delta(lam_m) < 13.0 * r / 16.0:
            lam_u = lam_m
        else:
            lam_l = lam_m
        lam_m = math.sqrt(lam_u * lam_l)
        refinements += 1
        if refinements > refine_cap:
            raise ContractViolationError("bisection refinement loop exceeded its bound")
    if stats is not None:
        stats["refinements"] = refinements
        stats["broo_calls"] = len(cache)
    return lam_m


# ---------------------------------------------------------------------------
# Accelerated proximal point outer loop
# ---------------------------------------------------------------------------


@dataclass
class ApmParams:
    """Per-iteration accuracy targets and stopping rules for the outer loop.

    phi(k, lam, a): function-value accuracy of the approximate prox;
    delta(k): bias target of the Moreau gradient estimate;
    sigma_sq(k, a): its square-error target; ball radius r bounds the prox
    movement that next_lambda guarantees.
    """

    phi: Callable[[int, float, float], float]
    delta: Callable[[int], float]
    sigma_sq: Callable[[int, float], float]
    a_max: float
    k_max: int
    r: float


@dataclass
class ApmResult:
    point: Array
    iterations: int
    acc: float
    lambdas: list[float]


NextLambda = Callable[[Array, Array, float, np.random.Generator], float]
ProxHandle = Callable[[Array, float, float, np.random.Generator], Array]
GradHandle = Callable[[Array, float, float, float, float, np.random.Generator], Array]


def accel_prox(
    prox_handle: ProxHandle,
    grad_handle: GradHandle,
    next_lambda: NextLambda,
    x0: Array,
    a0: float,
    params: ApmParams,
    domain: ConvexDomain,
    rng: np.random.Generator,
) -> ApmResult:
    """Stochastic accelerated proximal point method.

    Each round: pick lam = next_lambda(x, v, A); set the coupling weight a as
    the positive root of lam a^2 = A + a (so A_next = lam a^2 holds exactly);
    form y between x and v; take an approximate prox step from y at accuracy
    phi; estimate the Moreau gradient at y within ball r; mirror-step v.
    Stops once A reaches a_max or after k_max rounds.
    """
    x = np.asarray(x0, dtype=float).copy()
    v = x.copy()
    acc = float(a0)
    lambdas: list[float] = []
    k = 0
    while True:
        lam = float(next_lambda(x, v, acc, rng))
        lambdas.append(lam)
        a = (1.0 + math.sqrt(1.0 + 4.0 * lam * acc)) / (2.0 * lam)
        acc_next = acc + a
        if abs(lam * a * a - acc_next) > 1e-10 * max(1.0, acc_next):
            raise ContractViolationError("coupling identity lam a^2 = A + a failed")
        y = (acc / acc_next) * x + (a / acc_next) * v
        k += 1
        x_next = prox_handle(y, lam, params.phi(k, lam, a), rng)
        if np.linalg.norm(x_next - y) > params.r * (1 + 1e-9):
            raise ContractViolationError("approximate prox left the movement ball")
        g = grad_handle(y, lam, params.delta(k), params.sigma_sq(k, a), params.r, rng)
        v = domain.project(v - 0.5 * a * g)
        x, acc = x_next, acc_next
        if acc >= params.a_max or k >= params.k_max:
            return ApmResult(point=x, iterations=k, acc=acc, lambdas=lambdas)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class MinMaxConfig:
    """Tuning knobs; the defaults are the analysis constants. The phi/delta/
    sigma scales multiply the per-iteration tolerances, trading guarantee
    slack for queries; lambda_min_scale and kmax_scale move the bisection
    floor and the iteration cap the same way."""

    c: float = 32.0
    phi_scale: float = 1.0
    delta_scale: float = 1.0
    sigma_scale: float = 1.0
    lambda_min_scale: float = 1.0
    kmax_scale: float = 1.0
    broo_budget_scale: float = 1.0
    prox_budget_scale: float = 1.0


@dataclass
class MinMaxResult:
    point: Array
    iterations: int
    value_queries: int
    grad_queries: int
    lambdas: list[float]


def minmax_scales(problem: MaxProblem, R: float, eps: float, cfg: MinMaxConfig) -> dict:
    """Derived constants for one run: smoothing scale, sampling radius,
    bisection range, iteration caps, per-call failure probability."""
    n = problem.n_components
    G = problem.lipschitz_bound
    if n < 2:
        raise InvalidInputError("need at least two components")
    if eps >= 0.5 * G * R / math.log(n):
        raise InvalidInputError("eps out of range for softmax smoothing")
    eps_prime = eps / (2.0 * math.log(n))
    r_eps = eps_prime / G
    eps_half = eps / 2.0
    lam_max = 2.0 * G / r_eps
    lam_min = cfg.lambda_min_scale * (eps / (r_eps ** (4.0 / 3.0) * R ** (2.0 / 3.0)))
    lam_min *= math.log(G * R / eps) ** 2
    lam_min = min(lam_min, lam_max / 4.0)  # keep the bisection range nonempty at desk scale
    k_max = math.ceil(
        cfg.kmax_scale
        * (
            8.0 * (R / r_eps) ** (2.0 / 3.0) * math.log2(G * R / eps)
            + 8.0 * math.sqrt(lam_min * R**2 / eps)
        )
    )
    k_bisect = math.ceil(
        2.0 * (math.log2(lam_max / lam_min) + math.log2((R + G / lam_min) / r_eps)) + 4
    )
    p_fail = 1.0 / (6.0 * k_max * k_bisect)
    return {
        "eps_prime": eps_prime,
        "r_eps": r_eps,
        "eps_half": eps_half,
        "lam_min": lam_min,
        "lam_max": lam_max,
        "k_max": k_max,
        "k_bisect": k_bisect,
        "p_fail": p_fail,
        "a0": R / G,
        "a_max": 9.0 * R**2 / eps_half,
    }


def min_the_max(
    problem: MaxProblem,
    domain: ConvexDomain,
    x0: Array,
    R: float,
    eps: float,
    rng: np.random.Generator,
    cfg: Optional[MinMaxConfig] = None,
) -> MinMaxResult:
    """Find x with f_max(x) <= min f_max + eps, with probability >= 1/2.

    Targets eps/2 on the smoothed objective; both the approximate prox and
    the Moreau gradient estimator run on X ∩ ball(y, r_eps) with rejection
    sampled gradients, and the level sequence comes from the bisection.
    """
    if cfg is None:
        cfg = MinMaxConfig()
    s = minmax_scales(problem, R, eps, cfg)
    G = problem.lipschitz_bound
    eps_half, eps_p, r_eps = s["eps_half"], s["eps_prime"], s["r_eps"]
    x0 = np.asarray(x0, dtype=float)
    if not domain.contains(x0, tol=1e-9):
        raise InvalidInputError("x0 must lie in the domain")

    def broo_handle(y: Array, lam: float, rho: float, gen: np.random.Generator) -> Array:
        return broo(
            problem, y, lam, rho, r_eps, domain, s["p_fail"], gen, eps_p,
            budget_scale=cfg.broo_budget_scale,
        )

    def next_lambda(x: Array, v: Array, acc: float, gen: np.random.Generator) -> float:
        return lambda_bisection(
            x, v, acc, broo_handle, s["lam_min"], s["lam_max"], G, R, r_eps, gen
        )

    def prox_handle(y: Array, lam: float, phi: float, gen: np.random.Generator) -> Array:
        ctx = build_context(problem, y, eps_p, G)
        oracle = smax_oracle(ctx, problem)
        dom = intersect_ball(domain, y, r_eps)
        budget = math.ceil(cfg.prox_budget_scale * 16.0 * G**2 / (lam * phi))
        psi = SimpleRegularizer(quadratic_weight=lam, center=y)
        return epoch_sgd(oracle, psi, lam, dom, max(budget, 1), gen)

    def grad_handle(
        y: Array, lam: float, delta: float, sigma_sq: float, r: float, gen: np.random.Generator
    ) -> Array:
        ctx = build_context(problem, y, eps_p, G)
        oracle = smax_oracle(ctx, problem)
        dom = intersect_ball(domain, y, r)
        return mor_grad_est(oracle, y, lam, delta, sigma_sq, dom, gen, c=cfg.c)

    params = ApmParams(
        phi=lambda k, lam, a: cfg.phi_scale * eps_half / (60.0 * lam * a),
        delta=lambda k: cfg.delta_scale * eps_half / (120.0 * R),
        sigma_sq=lambda k, a: cfg.sigma_scale * eps_half / (60.0 * a),
        a_max=s["a_max"],
        k_max=s["k_max"],
        r=r_eps,
    )
    v0 = problem.value_counter.count
    g0 = problem.grad_counter.count
    res = accel_prox(prox_handle, grad_handle, next_lambda, x0, s["a0"], params, domain, rng)
    return MinMaxResult(
        point=res.point,
        iterations=res.iterations,
        value_queries=problem.value_counter.count - v0,
        grad_queries=problem.grad_counter.count - g0,
        lambdas=res.lambdas,
    )
