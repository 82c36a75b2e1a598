"""Monte Carlo estimators for splitting-algorithm costs.

Four independent stochastic routes to the same quantities live here:

  * direct simulation of the splitting tree (level-synchronous over batches),
  * the Poissonized weight-product walk (expected cost at Poisson(x) items),
  * the fixed-n weight-product walk driven by an order-statistic threshold,
  * the q-adic interval-occupancy representation for symmetric q-ary specs.

Plus the renewal walk for the scaled crossing functional and its overshoot,
and two study drivers (law of large numbers, central limit behaviour).

Determinism contract: every estimate is a pure function of its arguments.
Replicas are processed in fixed-size batches; each batch draws from a
generator derived from (seed, stream tag, batch index), and batch results
are reduced in batch order.  Thread counts can never change a result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .model import (
    Mixture,
    SamplerLaw,
    SplittingMeasure,
    SplittingSpec,
    SpecError,
    _law_vectors,
    validate,
)
from . import seeding
from .seeding import derive_rng

__all__ = [
    "TreeStats",
    "McEstimate",
    "WalkConfig",
    "PsiWalkResult",
    "SimulationBudgetError",
    "simulate_tree",
    "iter_tree_batches",
    "estimate_cost",
    "rep8_estimate",
    "rep12_estimate",
    "psi_walk",
    "overshoot_bound",
    "qadic_sample_rn",
    "qadic_cost_samples",
    "poisson_qadic_sample",
    "poisson_qadic_samples",
    "qadic_cost_from_points",
    "poisson_qadic_coupled",
    "lln_study",
    "clt_study",
    "LlnRow",
    "CltReport",
]

DEFAULT_BATCH = 1 << 16
DEFAULT_NODE_BUDGET = 10**7
_POINTS_PER_BATCH_CAP = 1 << 22


class SimulationBudgetError(RuntimeError):
    """A per-replica node budget was exhausted."""


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class TreeStats:
    """Statistics of one simulated splitting tree.

    cost: total node count (root included).
    max_depth: deepest level holding a node; 0 when the root never splits.
    full_levels: deepest p such that every node above level p is internal;
        equivalently the first level containing a leaf.
    level_nodes: node counts per level starting at level 1.
    """

    cost: int
    max_depth: int
    full_levels: int
    level_nodes: tuple[int, ...]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    replicas: int
    seed: int
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.replicas < 2:
            raise ValueError("an estimate needs at least 2 replicas")


@dataclass(frozen=True)
class WalkConfig:
    """Configuration of the log-weight renewal walk."""

    measure: SplittingMeasure
    x: float
    max_steps: int | None = None

    def __post_init__(self) -> None:
        if self.x < 0:
            raise ValueError("crossing level x must be nonnegative")
        floor_steps = _min_steps(self.measure, self.x)
        if self.max_steps is not None and self.max_steps < floor_steps:
            raise ValueError(
                f"max_steps={self.max_steps} below the guaranteed crossing bound {floor_steps}"
            )

    @property
    def steps_bound(self) -> int:
        return self.max_steps if self.max_steps is not None else _min_steps(self.measure, self.x)


def _neg_log_delta(measure: SplittingMeasure) -> float:
    # smallest per-step drift of the walk: -log of the largest atom
    return -math.log(float(measure.delta))


def _min_steps(measure: SplittingMeasure, x: float) -> int:
    # every step moves at least -log(delta), so crossing x is certain by here
    return int(math.ceil(x / _neg_log_delta(measure))) + 1


@dataclass(frozen=True)
class PsiWalkResult:
    psi: McEstimate
    overshoot: McEstimate


# ---------------------------------------------------------------------------
# streaming mean/variance (Chan et al. pairwise combine)


class _MeanVar:
    __slots__ = ("count", "mean", "m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add_array(self, arr: np.ndarray) -> None:
        n = int(arr.size)
        if n == 0:
            return
        mean = float(arr.mean())
        m2 = float(((arr - mean) ** 2).sum())
        if self.count == 0:
            self.count, self.mean, self.m2 = n, mean, m2
            return
        tot = self.count + n
        delta = mean - self.mean
        self.m2 += m2 + delta * delta * self.count * n / tot
        self.mean += delta * n / tot
        self.count = tot

    def stderr(self) -> float:
        if self.count < 2:
            return float("nan")
        return math.sqrt(self.m2 / (self.count - 1) / self.count)


def _batches(replicas: int, batch_size: int) -> Iterator[tuple[int, int]]:
    start = 0
    b = 0
    while start < replicas:
        size = min(batch_size, replicas - start)
        yield b, size
        start += size
        b += 1


# ---------------------------------------------------------------------------
# atom sampling


class _AtomSampler:
    """Inverse-CDF sampler over the measure atoms."""

    def __init__(self, measure: SplittingMeasure) -> None:
        vals, masses = measure.values_masses()
        self.values = np.asarray(vals)
        cum = np.cumsum(masses)
        cum[-1] = 1.0
        self.cum = cum

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return self.values[np.searchsorted(self.cum, u, side="right")]


# ---------------------------------------------------------------------------
# tree simulation


def _degree_tables(spec: SplittingSpec):
    pairs = [(d, float(p)) for d, p in spec.branch if p > 0]
    degs = np.asarray([d for d, _ in pairs], dtype=np.int64)
    cum = np.cumsum([p for _, p in pairs])
    cum[-1] = 1.0
    return degs, cum


def _law_table(law, degree: int):
    """Normalize a weight law into ("fixed", pvals) | ("mixture", cum, rows) | ("sampler", fn)."""
    if isinstance(law, SamplerLaw):
        return ("sampler", law.sample)
    if isinstance(law, Mixture):
        cum = np.cumsum([float(p) for p, _ in law.cases])
        cum[-1] = 1.0
        rows = [np.asarray([float(w) for w in vec]) for _, vec in law.cases]
        return ("mixture", cum, rows)
    (_, vec), = _law_vectors(law, degree)
    return ("fixed", np.asarray([float(w) for w in vec]))


def _simulate_forest(
    spec: SplittingSpec,
    n: int,
    replicas: int,
    rng: np.random.Generator,
    node_budget: int,
    collect_levels: bool = False,
):
    """Level-synchronous simulation of `replicas` independent trees on n items."""
    d = spec.threshold
    degs, deg_cum = _degree_tables(spec)
    laws = {int(q): _law_table(spec.weight_laws[q], int(q)) for q in degs}
    any_mixture = any(t[0] == "mixture" for t in laws.values())

    owner = np.arange(replicas, dtype=np.int64)
    counts = np.full(replicas, n, dtype=np.int64)
    cost = np.ones(replicas, dtype=np.int64)
    max_depth = np.zeros(replicas, dtype=np.int64)
    full_levels = np.zeros(replicas, dtype=np.int64)
    full_open = np.ones(replicas, dtype=bool)
    budget_used = np.zeros(replicas, dtype=np.int64)
    levels: list[int] = []

    level = 0
    while owner.size:
        internal = counts >= d
        if not internal.all():
            closed = np.zeros(replicas, dtype=bool)
            closed[owner[~internal]] = True
            newly = closed & full_open
            if newly.any():
                full_levels[newly] = level
            full_open &= ~closed
        if not internal.any():
            break

        o = owner[internal]
        c = counts[internal]
        budget_used += np.bincount(o, minlength=replicas)
        if int(budget_used.max()) > node_budget:
            raise SimulationBudgetError(
                f"node budget {node_budget} exhausted at level {level} (n={n})"
            )

        if degs.size == 1:
            deg = np.full(o.size, int(degs[0]), dtype=np.int64)
        else:
            deg = degs[np.searchsorted(deg_cum, rng.random(o.size), side="right")]
        case_u = rng.random(o.size) if any_mixture else None

        part_owner = []
        part_counts = []
        for q in sorted(laws):
            sel = deg == q
            if not sel.any():
                continue
            table = laws[q]
            cq = c[sel]
            if table[0] == "fixed":
                children = rng.multinomial(cq, table[1])
            elif table[0] == "mixture":
                _, cum, rows = table
                idx = np.searchsorted(cum, case_u[sel], side="right")
                children = np.empty((cq.size, q), dtype=np.int64)
                for ci, row in enumerate(rows):
                    mask = idx == ci
                    if mask.any():
                        children[mask] = rng.multinomial(cq[mask], row)
            else:
                _, fn = table
                children = np.empty((cq.size, q), dtype=np.int64)
                for i, items in enumerate(cq):
                    pv = np.asarray(fn(rng), dtype=float)
                    if pv.size != q or pv.min() < 0 or pv.max() >= 1 or abs(pv.sum() - 1) > 1e-9:
                        raise SpecError("sampler law returned an invalid weight vector")
                    children[i] = rng.multinomial(int(items), pv)
            part_owner.append(np.repeat(o[sel], q))
            part_counts.append(children.reshape(-1))

        owner = np.concatenate(part_owner)
        counts = np.concatenate(part_counts)
        level += 1
        if collect_levels:
            levels.append(int(owner.size))
        cost += np.bincount(owner, minlength=replicas)
        max_depth[owner] = level

    return cost, max_depth, full_levels, levels


def simulate_tree(
    spec: SplittingSpec, n: int, rng_seed: int, node_budget: int = DEFAULT_NODE_BUDGET
) -> TreeStats:
    """Simulate one splitting tree and return its statistics."""
    errs = validate(spec)
    if errs:
        raise SpecError("; ".join(errs))
    rng = derive_rng(rng_seed, seeding.STREAM_TREE)
    cost, depth, full, levels = _simulate_forest(
        spec, n, 1, rng, node_budget, collect_levels=True
    )
    return TreeStats(
        cost=int(cost[0]),
        max_depth=int(depth[0]),
        full_levels=int(full[0]),
        level_nodes=tuple(levels),
    )


def iter_tree_batches(
    spec: SplittingSpec,
    n: int,
    replicas: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    node_budget: int = DEFAULT_NODE_BUDGET,
):
    """Yield (cost, max_depth, full_levels) arrays per deterministic batch."""
    errs = validate(spec)
    if errs:
        raise SpecError("; ".join(errs))
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_TREE, b)
        cost, depth, full, _ = _simulate_forest(spec, n, size, rng, node_budget)
        yield cost, depth, full


def estimate_cost(
    spec: SplittingSpec,
    n: int,
    replicas: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> McEstimate:
    """Plain tree-simulation estimate of the expected cost on n items."""
    mv = _MeanVar()
    for cost, _, _ in iter_tree_batches(spec, n, replicas, seed, batch_size, node_budget):
        mv.add_array(cost.astype(float))
    return McEstimate(
        mean=mv.mean,
        stderr=mv.stderr(),
        replicas=replicas,
        seed=seed,
        extras={"op": "tree", "n": n},
    )


# ---------------------------------------------------------------------------
# weight-product walks


def _walk_steps_cap(measure: SplittingMeasure, x: float) -> int:
    # the product can only fall below t/x once log-drift accumulates; with
    # double precision the driving threshold is at least ~exp(-745), so this
    # cap cannot bind for a valid measure and healthy RNG output
    return int(math.ceil((math.log(max(x, 1.0)) + 760.0) / _neg_log_delta(measure))) + 16


def rep8_estimate(
    measure: SplittingMeasure,
    expected_branch: float,
    threshold: int,
    x: float,
    replicas: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    max_steps: int | None = None,
) -> McEstimate:
    """Estimate the expected cost at Poisson(x) items from the product walk.

    Each replica draws a Gamma(threshold, 1) barrier t as a sum of unit
    exponentials and accumulates inverse weight products while x times the
    running product stays at or above t.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    sampler = _AtomSampler(measure)
    cap = max_steps if max_steps is not None else _walk_steps_cap(measure, x)
    eg = float(expected_branch)
    mv = _MeanVar()
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_REP8, b)
        t = rng.standard_exponential((size, threshold)).sum(axis=1)
        prod = np.ones(size)
        acc = np.zeros(size)
        alive = t <= x * prod
        steps = 0
        while alive.any():
            acc[alive] += 1.0 / prod[alive]
            w = sampler.draw(rng, int(alive.sum()))
            prod[alive] *= w
            alive[alive] = t[alive] <= x * prod[alive]
            steps += 1
            if steps > cap:
                raise ArithmeticError("product walk failed to terminate; measure corrupted")
        mv.add_array(acc)
    return McEstimate(
        mean=1.0 + eg * mv.mean,
        stderr=eg * mv.stderr(),
        replicas=replicas,
        seed=seed,
        extras={"op": "poisson-walk", "x": x},
    )


def rep12_estimate(
    measure: SplittingMeasure,
    expected_branch: float,
    threshold: int,
    n: int,
    replicas: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    max_steps: int | None = None,
) -> McEstimate:
    """Estimate the expected cost on exactly n items from the product walk.

    The stopping threshold is the threshold-th smallest of n uniforms,
    realized through the exponential-spacings identity as a ratio of two
    Gamma variables, which keeps the cost per replica independent of n.
    """
    if n < threshold:
        raise ValueError(f"need n >= threshold, got n={n} < {threshold}")
    sampler = _AtomSampler(measure)
    cap = max_steps if max_steps is not None else _walk_steps_cap(measure, 1.0)
    eg = float(expected_branch)
    mv = _MeanVar()
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_REP12, b)
        g1 = rng.standard_gamma(threshold, size=size)
        g2 = rng.standard_gamma(n + 1 - threshold, size=size)
        u = g1 / (g1 + g2)
        prod = np.ones(size)
        acc = np.zeros(size)
        alive = np.ones(size, dtype=bool)
        steps = 0
        while alive.any():
            acc[alive] += 1.0 / prod[alive]
            w = sampler.draw(rng, int(alive.sum()))
            prod[alive] *= w
            alive[alive] = prod[alive] >= u[alive]
            steps += 1
            if steps > cap:
                raise ArithmeticError("product walk failed to terminate; measure corrupted")
        mv.add_array(acc)
    return McEstimate(
        mean=1.0 + eg * mv.mean,
        stderr=eg * mv.stderr(),
        replicas=replicas,
        seed=seed,
        extras={"op": "fixed-n-walk", "n": n},
    )


# ---------------------------------------------------------------------------
# renewal walk


def psi_walk(config: WalkConfig, replicas: int, seed: int,
             batch_size: int = DEFAULT_BATCH) -> PsiWalkResult:
    """Estimate the scaled pre-crossing functional and the overshoot moment.

    The walk adds -log(W) increments until it exceeds x.  Reported are the
    mean of sum_{i < crossing} exp(S_i - x) (the scaled crossing functional)
    and the mean of exp(S_crossing - x) (the overshoot exponential moment).
    """
    measure = config.measure
    x = float(config.x)
    sampler = _AtomSampler(measure)
    cap = config.steps_bound
    mv_psi = _MeanVar()
    mv_over = _MeanVar()
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_PSI, b)
        s = np.zeros(size)
        acc = np.zeros(size)
        over = np.zeros(size)
        alive = np.ones(size, dtype=bool)
        steps = 0
        while alive.any():
            acc[alive] += np.exp(s[alive] - x)
            w = sampler.draw(rng, int(alive.sum()))
            s[alive] += -np.log(w)
            idx = np.flatnonzero(alive)
            crossed = s[idx] > x
            hit = idx[crossed]
            over[hit] = np.exp(s[hit] - x)
            alive[hit] = False
            steps += 1
            if steps > cap:
                raise ArithmeticError("renewal walk exceeded its certain crossing bound")
        mv_psi.add_array(acc)
        mv_over.add_array(over)
    common = {"replicas": replicas, "seed": seed}
    return PsiWalkResult(
        psi=McEstimate(mean=mv_psi.mean, stderr=mv_psi.stderr(),
                       extras={"op": "psi", "x": x}, **common),
        overshoot=McEstimate(mean=mv_over.mean, stderr=mv_over.stderr(),
                             extras={"op": "overshoot", "x": x}, **common),
    )


def overshoot_bound(measure: SplittingMeasure) -> float:
    """Uniform bound on the overshoot exponential moment: E((1 - log W)/W) - 1."""
    return measure.heavy_moment + measure.recip_moment - 1.0


# ---------------------------------------------------------------------------
# q-adic representation


def _qadic_internal_counts(
    q: int,
    d: int,
    u: np.ndarray,
    owner: np.ndarray,
    replicas: int,
    max_depth: int = 4096,
) -> np.ndarray:
    """Per replica, count q-adic intervals (all levels) holding >= d points."""
    internal = np.zeros(replicas, dtype=np.int64)
    if u.size == 0:
        return internal
    group = owner.astype(np.int64, copy=True)
    grp_replica = np.arange(replicas, dtype=np.int64)
    frac = u.astype(float, copy=True)
    depth = 0
    while True:
        counts = np.bincount(group, minlength=grp_replica.size)
        full = counts >= d
        if not full.any():
            return internal
        internal += np.bincount(grp_replica[full], minlength=replicas)
        keep = full[group]
        group = group[keep]
        frac = frac[keep]
        frac *= q
        digit = np.floor(frac).astype(np.int64)
        np.clip(digit, 0, q - 1, out=digit)
        frac -= digit
        key = group * q + digit
        uniq, group = np.unique(key, return_inverse=True)
        grp_replica = grp_replica[uniq // q]
        depth += 1
        if depth > max_depth:
            raise ArithmeticError("q-adic descent exceeded its depth bound; degenerate points")


def qadic_cost_from_points(q: int, d: int, points: Sequence[float]) -> int:
    """Cost of the splitting tree built over the given points in [0, 1)."""
    u = np.asarray(points, dtype=float)
    owner = np.zeros(u.size, dtype=np.int64)
    internal = _qadic_internal_counts(q, d, u, owner, 1)
    return 1 + q * int(internal[0])


def qadic_sample_rn(q: int, d: int, n: int, rng_seed: int) -> int:
    """One sample of the cost on n items via interval occupancy counts."""
    rng = derive_rng(rng_seed, seeding.STREAM_QADIC)
    return qadic_cost_from_points(q, d, rng.random(n))


def qadic_cost_samples(
    q: int, d: int, n: int, replicas: int, seed: int, batch_size: int | None = None
) -> np.ndarray:
    """Vectorized batch of cost samples on exactly n items."""
    if batch_size is None:
        batch_size = max(1, min(DEFAULT_BATCH, _POINTS_PER_BATCH_CAP // max(n, 1)))
    out = np.empty(replicas, dtype=np.int64)
    pos = 0
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_QADIC, b)
        u = rng.random(size * n)
        owner = np.repeat(np.arange(size, dtype=np.int64), n)
        internal = _qadic_internal_counts(q, d, u, owner, size)
        out[pos : pos + size] = 1 + q * internal
        pos += size
    return out


def poisson_qadic_sample(q: int, d: int, x: float, rng_seed: int) -> int:
    """One sample of the cost at Poisson(x) items via interval occupancy."""
    rng = derive_rng(rng_seed, seeding.STREAM_POISSON_QADIC)
    n = int(rng.poisson(x))
    return qadic_cost_from_points(q, d, rng.random(n))


def poisson_qadic_samples(
    q: int,
    d: int,
    x: float,
    replicas: int,
    seed: int,
    batch_size: int | None = None,
    stream_index: int = 0,
) -> np.ndarray:
    """Vectorized batch of cost samples at Poisson(x) items."""
    if batch_size is None:
        per = max(int(x), 1)
        batch_size = max(1, min(DEFAULT_BATCH, _POINTS_PER_BATCH_CAP // per))
    out = np.empty(replicas, dtype=np.int64)
    pos = 0
    for b, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_POISSON_QADIC, stream_index, b)
        k = rng.poisson(x, size)
        owner = np.repeat(np.arange(size, dtype=np.int64), k)
        u = rng.random(int(k.sum()))
        internal = _qadic_internal_counts(q, d, u, owner, size)
        out[pos : pos + size] = 1 + q * internal
        pos += size
    return out


def poisson_qadic_coupled(q: int, d: int, x_list: Sequence[float], rng_seed: int) -> list[int]:
    """Costs at several x from one two-dimensional Poisson point set.

    Points (u, h) are drawn once on [0,1) x [0, max x); the cost at x uses the
    points with h below x.  Costs are nondecreasing in x by construction.
    """
    x_max = max(x_list)
    rng = derive_rng(rng_seed, seeding.STREAM_COUPLED)
    k = int(rng.poisson(x_max))
    u = rng.random(k)
    h = rng.random(k) * x_max
    return [qadic_cost_from_points(q, d, u[h <= x]) for x in x_list]


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class LlnRow:
    x: float
    exceed_freq: float
    stderr: float
    replicas: int


def lln_study(
    q: int,
    d: int,
    x_list: Sequence[float],
    replicas: int,
    eps: float,
    seed: int,
) -> list[LlnRow]:
    """Frequency of |cost/(x * F1(log_q x)) - 1| >= eps at each x."""
    from .asymptotics import f1_quadrature

    rows = []
    for i, x in enumerate(x_list):
        frac = math.log(x) / math.log(q) % 1.0
        f1x = f1_quadrature(q, d, frac)
        samples = poisson_qadic_samples(q, d, float(x), replicas, seed, stream_index=i)
        dev = np.abs(samples / (x * f1x) - 1.0)
        freq = float((dev >= eps).mean())
        se = math.sqrt(max(freq * (1.0 - freq), 1.0 / replicas) / replicas)
        rows.append(LlnRow(x=float(x), exceed_freq=freq, stderr=se, replicas=replicas))
    return rows


@dataclass(frozen=True)
class CltReport:
    x: float
    replicas: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    f2_value: float
    variance_ratio: float
    seed: int


def clt_study(
    q: int, d: int, y: float, levels: int, replicas: int, seed: int
) -> CltReport:
    """Moments of the cost at x = y * q^levels against the variance profile."""
    from .asymptotics import f2_quadrature

    if not (0 < y < q):
        raise ValueError("y must lie in (0, q)")
    x = float(y) * float(q) ** levels
    samples = poisson_qadic_samples(q, d, x, replicas, seed).astype(float)
    mean = float(samples.mean())
    ctr = samples - mean
    m2 = float((ctr**2).mean())
    m3 = float((ctr**3).mean())
    m4 = float((ctr**4).mean())
    var = m2 * replicas / (replicas - 1)
    skew = m3 / m2**1.5
    exkurt = m4 / m2**2 - 3.0
    frac = math.log(y) / math.log(q) % 1.0
    f2v = f2_quadrature(q, d, frac)
    return CltReport(
        x=x,
        replicas=replicas,
        mean=mean,
        variance=var,
        skewness=skew,
        excess_kurtosis=exkurt,
        f2_value=f2v,
        variance_ratio=var / (x * f2v),
        seed=seed,
    )
