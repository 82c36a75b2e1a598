"""Exact expected costs and cost distributions of splitting algorithms.

The expected node count e(n) = E(cost on n items) satisfies a self-referential
recurrence: conditioning one split on degree, weight vector and multinomial
routing gives

    e(n) = 1 for n < threshold,
    e(n) - 1 = E(G) + sum_V coef(V) * sum_k Binom(n, V)(k) * (e(k) - 1),

where coef(V) counts occurrences of weight value V across the branch and
weight laws (probability-weighted).  The k = n term re-enters on the left with
coefficient c(n) = sum_V coef(V) V^n < 1, so each e(n) is solved by dividing
by 1 - c(n).  The same conditioning at distribution level gives the cost
probability mass function as a fixed point of a convolution operator whose
self-referential part is the all-items-in-one-subset event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .model import SplittingSpec, SpecError, _law_vectors, validate
from .special import gammainc_lower

__all__ = [
    "CostTable",
    "CostPmf",
    "expected_cost_table",
    "closed_form_qary",
    "cost_distribution",
    "poisson_transform_expect",
    "poisson_transform_with_bound",
    "write_cost_table_csv",
    "write_pmf_csv",
]


@dataclass(frozen=True)
class CostTable:
    """Expected costs e(0..n_max) for one spec, exact rationals or float64."""

    threshold: int
    mode: str  # "exact" | "float64"
    values: tuple  # Fraction entries in exact mode, floats in float64 mode

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "float64"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def as_floats(self) -> np.ndarray:
        return np.asarray([float(v) for v in self.values], dtype=float)


def _weight_groups(spec: SplittingSpec) -> list[tuple[Fraction, Fraction]]:
    """Distinct weight values with their occurrence coefficients.

    coef(V) = sum over (degree, case) of p_degree * p_case * multiplicity(V).
    The size-biased measure mass of V is coef(V) * V; here the unbiased
    coefficient is what the binomial conditioning needs.
    """
    groups: dict[Fraction, Fraction] = {}
    for degree, pdeg in spec.branch:
        if pdeg == 0:
            continue
        for pcase, vec in _law_vectors(spec.weight_laws[degree], degree):
            if pcase == 0:
                continue
            for w in vec:
                if w > 0:
                    groups[w] = groups.get(w, Fraction(0)) + pdeg * pcase
    return sorted(groups.items())


def _require_exact(spec: SplittingSpec) -> None:
    errs = validate(spec)
    if errs:
        raise SpecError("; ".join(errs))
    if spec.has_sampler():
        raise SpecError("spec contains a black-box sampler law; exact routines refuse it")


def _table_exact(spec: SplittingSpec, n_max: int) -> list[Fraction]:
    groups = _weight_groups(spec)
    eg = spec.expected_branch
    d = spec.threshold
    # e[n] stores E(cost) - 1
    e = [Fraction(0)] * (n_max + 1)
    for n in range(d, n_max + 1):
        s = Fraction(0)
        c_n = Fraction(0)
        for v, coef in groups:
            # binomial row via the multiplicative recurrence, exact arithmetic
            one_minus = 1 - v
            ratio = v / one_minus
            t = one_minus**n  # k = 0 term
            acc = Fraction(0)
            for k in range(0, n):
                if k >= d and e[k]:
                    acc += t * e[k]
                tfac = Fraction(n - k, k + 1)
                t = t * tfac * ratio
            s += coef * acc
            c_n += coef * v**n
        e[n] = (eg + s) / (1 - c_n)
    return [v + 1 for v in e]


def _table_float(spec: SplittingSpec, n_max: int) -> list[float]:
    groups = [(float(v), float(c)) for v, c in _weight_groups(spec)]
    eg = float(spec.expected_branch)
    d = spec.threshold
    # log-factorials; binomial rows are assembled in log space throughout,
    # since the direct recurrence's first term (1-V)^n underflows long before
    # anything else misbehaves
    logfact = np.asarray([math.lgamma(i + 1) for i in range(n_max + 1)])

    e = np.zeros(n_max + 1)
    ks = np.arange(n_max + 1)
    for n in range(d, n_max + 1):
        k = ks[: n + 1]
        s = 0.0
        c_n = 0.0
        for v, coef in groups:
            logpmf = (
                logfact[n]
                - logfact[k]
                - logfact[n - k]
                + k * math.log(v)
                + (n - k) * math.log1p(-v)
            )
            pmf = np.exp(logpmf)
            s += coef * float(pmf[:n] @ e[:n])
            c_n += coef * math.exp(n * math.log(v))
        e[n] = (eg + s) / (1.0 - c_n)
    return [float(x) + 1.0 for x in e]


def expected_cost_table(spec: SplittingSpec, n_max: int, mode: str = "exact") -> CostTable:
    """Expected cost for every n up to n_max.

    Exact mode keeps all arithmetic rational (practical to a few hundred);
    float64 mode runs the same recurrence in doubles and is O(n^2) overall.
    """
    _require_exact(spec)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if mode == "exact":
        values = tuple(_table_exact(spec, n_max))
    elif mode == "float64":
        values = tuple(_table_float(spec, n_max))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return CostTable(threshold=spec.threshold, mode=mode, values=values)


# ---------------------------------------------------------------------------
# symmetric q-ary closed form


def _order_stat_tail(n: int, d: int, x: float) -> float:
    """P(threshold-th smallest of n uniforms > x) = P(Binom(n, x) < d)."""
    if x >= 1.0:
        return 0.0
    total = 0.0
    log1mx = math.log1p(-x)
    for k in range(min(d, n + 1)):
        total += math.comb(n, k) * x**k * math.exp((n - k) * log1mx)
    return total


def _order_stat_below(n: int, d: int, x: float) -> float:
    """P(threshold-th smallest of n uniforms <= x) = P(Binom(n, x) >= d).

    Summed upward from k = d with geometric truncation, so the result keeps
    full relative accuracy even when it is far below machine epsilon.  Only
    intended for the regime n * x < d where that truncation kicks in fast.
    """
    if x <= 0.0:
        return 0.0
    log1mx = math.log1p(-x)
    total = 0.0
    term = math.comb(n, d) * x**d * math.exp((n - d) * log1mx)
    k = d
    while k <= n:
        total += term
        if term < total * 1e-18:
            break
        term *= (n - k) / (k + 1.0) * (x / (1.0 - x))
        k += 1
    return total


def closed_form_qary(q: int, threshold: int, n: int, tol: float = 1e-14) -> float:
    """Expected cost of the symmetric q-ary algorithm on n items, closed form.

    With U the threshold-th smallest of n uniforms, the cost equals
    1 + q/(q-1) * (E(q^ceil_strict(-log_q U)) - 1), where ceil_strict(y) is
    the smallest integer strictly greater than y.  The expectation is summed
    over the geometric-in-q slices of U with an explicit tail cutoff.

    Each slice probability is amplified by q^j, so for deep slices it is
    computed as a difference of lower tails (small, fully accurate numbers)
    rather than of upper tails, which would cancel catastrophically.
    """
    if q < 2 or threshold < 2:
        raise ValueError("need q >= 2 and threshold >= 2")
    if n < threshold:
        return 1.0

    def below(x: float) -> float:
        if n * x < threshold:
            return _order_stat_below(n, threshold, x)
        return 1.0 - _order_stat_tail(n, threshold, x)

    s = 0.0
    below_prev = 1.0  # P(U <= q^0) = 1
    j = 1
    while True:
        x = float(q) ** (-j)
        b = below(x)
        s += float(q) ** j * (below_prev - b)
        below_prev = b
        if b * float(q) ** (j + 1) / (q - 1) < tol:
            break
        j += 1
        if j > 100_000:
            raise ArithmeticError("closed form series failed to truncate")
    return 1.0 + q / (q - 1.0) * (s - 1.0)


# ---------------------------------------------------------------------------
# cost distribution for small n


@dataclass(frozen=True)
class CostPmf:
    """Truncated distribution of the cost on n items."""

    n: int
    support: tuple[int, ...]
    probs: tuple[float, ...]
    tail_mass: float

    def mean_lower_bound(self) -> float:
        return sum(k * p for k, p in zip(self.support, self.probs))


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _convolve(a: dict[int, float], b: dict[int, float]) -> dict[int, float]:
    out: dict[int, float] = {}
    for ka, pa in a.items():
        for kb, pb in b.items():
            out[ka + kb] = out.get(ka + kb, 0.0) + pa * pb
    return out


def cost_distribution(
    spec: SplittingSpec,
    n: int,
    tail_eps: float = 1e-9,
    n_bound: int = 16,
    max_iter: int = 100_000,
) -> CostPmf:
    """Distribution of the cost on n items, truncated to omitted mass < tail_eps.

    Enumerates multinomial compositions per split.  The only self-referential
    compositions put all n items into one subset; the pmf is the fixed point
    of base + sum_self p * shift(pmf, degree), iterated until the mass still
    recoverable by further rounds drops below the target.  Sub-costs for
    m < n use a much tighter tolerance; their truncation is an irreducible
    deficit that no amount of top-level iteration can close, so it is kept
    far below tail_eps and simply counted into the reported tail.
    """
    _require_exact(spec)
    if n > n_bound:
        raise ValueError(f"n={n} exceeds the configured bound {n_bound} for distribution work")
    if n < spec.threshold:
        return CostPmf(n=n, support=(1,), probs=(1.0,), tail_mass=0.0)

    pmfs: dict[int, dict[int, float]] = {m: {1: 1.0} for m in range(spec.threshold)}
    for m in range(spec.threshold, n + 1):
        level_eps = tail_eps if m == n else tail_eps * 1e-3 / (n + 1)
        base: dict[int, float] = {}
        self_terms: list[tuple[float, int]] = []  # (probability, degree)
        for degree, pdeg in spec.branch:
            if pdeg == 0:
                continue
            for pcase, vec in _law_vectors(spec.weight_laws[degree], degree):
                if pcase == 0:
                    continue
                for comp in _compositions(m, degree):
                    # exact composition probability, then floats
                    prob = pdeg * pcase
                    mult = math.factorial(m)
                    for part, w in zip(comp, vec):
                        if part and w == 0:
                            prob = Fraction(0)
                            break
                        mult //= math.factorial(part)
                        prob *= w**part
                    prob = float(prob * mult)
                    if prob == 0.0:
                        continue
                    if max(comp) == m:
                        # all items into one subset: the other degree-1
                        # children are empty leaves with cost 1 each
                        self_terms.append((prob, degree))
                        continue
                    # node itself plus one leaf per sub-threshold child
                    dist = {1 + sum(1 for p in comp if p < spec.threshold): 1.0}
                    for part in comp:
                        if part >= spec.threshold:
                            dist = _convolve(dist, pmfs[part])
                    for k, v in dist.items():
                        base[k] = base.get(k, 0.0) + prob * v
        p_self = math.fsum(prob for prob, _ in self_terms)
        if p_self >= 1.0:
            raise ArithmeticError(f"self-split probability is 1 at m={m}; the cost diverges")
        # the fixed point cannot exceed this: child truncation leaves a deficit
        reachable = math.fsum(base.values()) / (1.0 - p_self)
        pmf: dict[int, float] = {}
        for it in range(max_iter):
            nxt = dict(base)
            for prob, degree in self_terms:
                for k, v in pmf.items():
                    nxt[k + degree] = nxt.get(k + degree, 0.0) + prob * v
            pmf = nxt
            if reachable - math.fsum(pmf.values()) < 0.9 * level_eps:
                break
        else:
            raise ArithmeticError(
                f"cost distribution fixed point did not reach eps={level_eps} in {max_iter} rounds"
            )
        pmfs[m] = pmf

    final = pmfs[n]
    support = tuple(sorted(final))
    probs = tuple(final[k] for k in support)
    tail = 1.0 - math.fsum(probs)
    return CostPmf(n=n, support=support, probs=probs, tail_mass=max(tail, 0.0))


# ---------------------------------------------------------------------------
# Poisson transform


def poisson_transform_with_bound(table: CostTable, x: float) -> tuple[float, float]:
    """sum_n e(n) x^n e^-x / n! over the table, plus a truncation bound.

    The tail beyond the table is bounded through a linear envelope A*n + B
    fitted to the last quarter of the table (expected cost grows linearly),
    combined with exact Poisson tail probabilities.
    """
    if x < 0:
        raise ValueError("transform argument must be nonnegative")
    vals = table.as_floats()
    n_max = len(vals) - 1
    if x == 0.0:
        return float(vals[0]), 0.0
    # envelope: factor-2 margin over the steepest late increment
    lo = max(1, (3 * (n_max + 1)) // 4)
    incs = np.diff(vals[lo - 1 :]) if n_max >= lo else np.array([0.0])
    a_slope = 2.0 * float(max(incs.max(initial=0.0), 0.0))
    b_off = float(vals[-1])
    bound = a_slope * x * gammainc_lower(n_max, x) + b_off * gammainc_lower(n_max + 1, x)
    # Poisson pmf by upward recurrence; x is moderate in every intended use
    value = 0.0
    p = math.exp(-x)
    for n in range(n_max + 1):
        value += vals[n] * p
        p *= x / (n + 1)
    return value, bound


def poisson_transform_expect(table: CostTable, x: float, tol: float = 1e-10) -> float:
    """Poisson transform of the cost table at x; errors out on a short table."""
    value, bound = poisson_transform_with_bound(table, x)
    if bound > tol:
        raise ValueError(
            f"cost table too short for x={x}: truncation bound {bound:.3e} exceeds {tol:.1e}"
        )
    return value


# ---------------------------------------------------------------------------
# CSV


def _fmt_value(v, mode: str) -> str:
    if mode == "exact":
        f = Fraction(v)
        return f"{f.numerator}/{f.denominator}"
    return format(float(v), ".17g")


def write_cost_table_csv(table: CostTable, path: str) -> None:
    lines = ["n,expected_cost,mode"]
    for n, v in enumerate(table.values):
        lines.append(f"{n},{_fmt_value(v, table.mode)},{table.mode}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pmf_csv(pmf: CostPmf, path: str) -> None:
    lines = ["k,prob"]
    for k, p in zip(pmf.support, pmf.probs):
        lines.append(f"{k},{format(p, '.17g')}")
    lines.append(f"# tail_mass={format(pmf.tail_mass, '.17g')}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
