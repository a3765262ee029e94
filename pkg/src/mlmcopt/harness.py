"""Measurement harness: seeded Monte-Carlo estimator statistics, rate-law
fits, expected-to-worst-case budget capping, and CSV reporting.

Reproducibility contract: every run is a pure function of (config, seed).
Randomness flows from a counter-based Philox generator through SeedSequence
spawning, so replication streams are independent of scheduling order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import BudgetExhaustedError, InvalidInputError
from .estimators import OptEstimate
from .problems import Array, QueryCounter

CSV_SCHEMA = "mlmcopt-csv v1"


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child streams, reproducible regardless of scheduling."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class EstimateStats:
    """Monte-Carlo summary of M estimator draws against a known target.

    ``bias_norm`` is ||mean - x_star||; ``sample_variance`` is the trace of
    the sample covariance; standard errors: ``se_bias`` bounds the mean's
    fluctuation scale (delta method through the norm), ``se_variance`` and
    ``se_queries`` are the usual standard errors of those sample means.
    """

    replications: int
    mean_point: Array
    bias_norm: float
    sample_variance: float
    mean_queries: float
    se_bias: float
    se_variance: float
    se_queries: float


def summarize_draws(points: Array, queries: Array, x_star: Array) -> EstimateStats:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    queries = np.asarray(queries, dtype=float)
    m = points.shape[0]
    if m < 2:
        raise InvalidInputError("need at least 2 replications")
    x_star = np.asarray(x_star, dtype=float)
    mean = points.mean(axis=0)
    dev_sq = np.sum((points - mean) ** 2, axis=1)
    variance = float(dev_sq.sum() / (m - 1))
    return EstimateStats(
        replications=m,
        mean_point=mean,
        bias_norm=float(np.linalg.norm(mean - x_star)),
        sample_variance=variance,
        mean_queries=float(queries.mean()),
        se_bias=float(np.sqrt(variance / m)),
        se_variance=float(np.std(dev_sq, ddof=1) / np.sqrt(m)),
        se_queries=float(np.std(queries, ddof=1) / np.sqrt(m)),
    )


def measure_estimator(
    factory: Callable[[np.random.Generator], OptEstimate],
    x_star: Array,
    replications: int,
    seed: int,
) -> EstimateStats:
    """Stats over M independent draws of ``factory`` on split rng streams."""
    if replications < 2:
        raise InvalidInputError("replications must be >= 2")
    rngs = spawn_rngs(seed, replications)
    points = []
    queries = []
    for gen in rngs:
        est = factory(gen)
        points.append(np.atleast_1d(est.point))
        queries.append(est.queries)
    return summarize_draws(np.asarray(points), np.asarray(queries), x_star)


def measure_estimator_batched(
    batch_factory: Callable[[np.random.Generator, int], tuple[Array, Array]],
    x_star: Array,
    replications: int,
    seed: int,
) -> EstimateStats:
    """Same statistics via one vectorized batch of draws (single stream)."""
    if replications < 2:
        raise InvalidInputError("replications must be >= 2")
    points, queries = batch_factory(rng_from_seed(seed), replications)
    return summarize_draws(points, queries, x_star)


def fit_loglog_slope(points: Iterable[tuple[float, float]]) -> float:
    """Least-squares slope of log(value) against log(scale)."""
    pts = list(points)
    if len(pts) < 3:
        raise InvalidInputError("need at least 3 points for a slope fit")
    scales = np.array([p[0] for p in pts], dtype=float)
    values = np.array([p[1] for p in pts], dtype=float)
    if np.any(scales <= 0) or np.any(values <= 0):
        raise InvalidInputError("log-log fit needs positive scales and values")
    lx = np.log(scales)
    ly = np.log(values)
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))


def budget_cap(
    run: Callable[[], Array],
    counters: Sequence[QueryCounter],
    cap: float,
    fallback: Array,
) -> Array:
    """Run ``run`` but abort with ``fallback`` once the summed query count of
    ``counters`` would exceed ``cap``. Capping at (2/p) times the expected
    cost degrades a success probability p to at least p/2 (Markov plus a
    union bound); aborted work is never tallied."""
    if cap < 0:
        raise InvalidInputError("cap must be >= 0")
    if np.isinf(cap):
        return run()
    from .problems import BudgetPool

    pool = BudgetPool(int(cap))
    for c in counters:
        c.pool = pool
    try:
        return run()
    except BudgetExhaustedError:
        return np.asarray(fallback, dtype=float)
    finally:
        for c in counters:
            c.pool = None


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def render_csv(experiment: str, seed: int, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} experiment={experiment} seed={seed}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(format_cell(c) for c in row) + "\n")
    return buf.getvalue()


def write_csv(
    path: str, experiment: str, seed: int, columns: Sequence[str], rows: Iterable[Sequence]
) -> None:
    text = render_csv(experiment, seed, columns, rows)
    with open(path, "w") as fh:
        fh.write(text)


def oracle_second_moment_audit(
    oracle, points: Array, draws_per_point: int, rng: np.random.Generator
) -> bool:
    """Running empirical mean of ||g||^2 never exceeds G^2 + 3 SE."""
    sq = []
    for x in np.atleast_2d(points):
        xb = np.broadcast_to(x, (draws_per_point,) + x.shape)
        g = oracle.sample(xb.copy(), rng)
        sq.extend(np.sum(np.atleast_2d(g) ** 2, axis=1).tolist())
    sq = np.asarray(sq)
    running_mean = np.cumsum(sq) / np.arange(1, len(sq) + 1)
    bound = oracle.lipschitz_bound**2
    for m in range(1, len(sq) + 1):
        se = sq[:m].std(ddof=1) / np.sqrt(m) if m > 1 else 0.0
        if running_mean[m - 1] > bound + 3 * se + 1e-12:
            return False
    return True
