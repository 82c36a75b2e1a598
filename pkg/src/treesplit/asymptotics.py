"""Asymptotic characterization of splitting costs.

For a splitting algorithm with threshold D and measure W the mean cost obeys
E(R_n)/n -> E(G)/((D-1) E(-log W)) when the log-atom lattice is non-arithmetic,
and E(R_n)/n - F(log n / lambda) -> 0 with a period-1 profile F when the atoms
live on a lattice of span lambda.  This module evaluates the limit constant,
the profile F, its symmetric q-ary specialization F1 (two independent routes:
kink quadrature and a two-sided series), and the variance profile F2 that
normalizes the CLT for the Poissonized symmetric model.

All profile integrals are done by kink decomposition: the only non-smoothness
of the integrands comes from fractional-part kinks at geometric grid points,
and between consecutive kinks the integrals reduce to differences of
regularized incomplete gamma values.  No generic quadrature is used.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exact import CostTable
from .model import SpanResult, SplittingMeasure, SplittingSpec
from . import seeding
from .seeding import derive_rng
from .special import gammainc_lower, gammainc_upper

__all__ = [
    "PeriodicProfile",
    "ConvergenceRow",
    "limit_constant",
    "f_value",
    "periodic_profile_F",
    "f1_quadrature",
    "f1_series",
    "f2_pointwise",
    "f2_quadrature",
    "f2_montecarlo",
    "f2_profile",
    "var_phi_series",
    "validate_profile",
    "write_profile_csv",
    "write_convergence_csv",
    "convergence_report",
]

_MAX_KINKS = 100_000


@dataclass(frozen=True)
class PeriodicProfile:
    """A period-1 asymptotic profile sampled on a grid in [0, 1)."""

    kind: str  # "F" | "F1" | "F2"
    lam: float
    grid: tuple[float, ...]
    values: tuple[float, ...]
    method: str  # "kink-quadrature" | "series" | "monte-carlo"
    tol: float

    def __post_init__(self) -> None:
        if self.kind not in ("F", "F1", "F2"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.method not in ("kink-quadrature", "series", "monte-carlo"):
            raise ValueError(f"unknown profile method {self.method!r}")
        if len(self.grid) != len(self.values) or not self.grid:
            raise ValueError("grid and values must be nonempty and equal length")
        g = np.asarray(self.grid)
        if g.min() < 0 or g.max() >= 1 or (np.diff(g) <= 0).any():
            raise ValueError("grid must be strictly increasing within [0, 1)")
        v = np.asarray(self.values)
        if not np.isfinite(v).all():
            raise ValueError("profile values must be finite")
        if self.kind in ("F", "F1") and v.min() <= 0:
            raise ValueError(f"{self.kind} values must be strictly positive")
        if self.kind == "F2" and v.min() < 0:
            raise ValueError("F2 values must be nonnegative")

    def mean_value(self) -> float:
        """Trapezoidal mean over one period, closing the loop at x = 1."""
        g = np.asarray(self.grid)
        v = np.asarray(self.values)
        gg = np.append(g, g[0] + 1.0)
        vv = np.append(v, v[0])
        return float(np.trapezoid(vv, gg))


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    ratio: float
    predicted: float
    rel_error: float


# ---------------------------------------------------------------------------
# limit constant and the general profile F


def limit_constant(measure: SplittingMeasure, expected_branch: float, threshold: int) -> float:
    """E(G) / ((D - 1) * E(-log W)); the non-arithmetic limit of E(R_n)/n."""
    if threshold < 2:
        raise ValueError("threshold must be at least 2")
    return float(expected_branch) / ((threshold - 1) * measure.neg_log_moment)


def _kink_sum(threshold: int, lam: float, x: float, tol: float) -> float:
    """Sum over integer m of (P(D, u_m) - P(D, u_m e^-lam)) / u_m, u_m = e^{lam (x - m)}.

    Both tails decay geometrically or faster: toward m -> +inf the terms are
    below u^(D-1)/D!, toward m -> -inf they are below the upper gamma tail at
    u e^-lam divided by u.
    """
    d = threshold
    fact = math.factorial(d)
    ratio_hi = math.exp(-lam * (d - 1))
    total = 0.0
    m = 0
    while True:
        u = math.exp(lam * (x - m))
        total += (gammainc_lower(d, u) - gammainc_lower(d, u * math.exp(-lam))) / u
        bound = u ** (d - 1) / fact / (1.0 - ratio_hi)
        if bound < tol * max(total, 1.0):
            break
        m += 1
        if m > _MAX_KINKS:
            raise ArithmeticError("kink sum failed to converge toward small cells")
    m = -1
    while True:
        u = math.exp(lam * (x - m))
        total += (gammainc_lower(d, u) - gammainc_lower(d, u * math.exp(-lam))) / u
        bound = 2.0 * gammainc_upper(d, u * math.exp(-lam)) / u
        if u * math.exp(-lam) > d and bound < tol * max(total, 1.0):
            break
        m -= 1
        if m < -_MAX_KINKS:
            raise ArithmeticError("kink sum failed to converge toward large cells")
    return total


def f_value(
    measure: SplittingMeasure,
    expected_branch: float,
    threshold: int,
    span: SpanResult,
    x: float,
    tol: float = 1e-12,
) -> float:
    """The periodic mean profile F at x for an arithmetic measure."""
    if not span.arithmetic:
        raise ValueError("the oscillating profile needs an arithmetic measure")
    lam = span.lam
    pref = (float(expected_branch) / measure.neg_log_moment) * lam / (1.0 - math.exp(-lam))
    return pref * _kink_sum(threshold, lam, x % 1.0, tol)


def periodic_profile_F(
    measure: SplittingMeasure,
    expected_branch: float,
    threshold: int,
    span: SpanResult,
    grid_size: int,
    tol: float = 1e-12,
) -> PeriodicProfile:
    """Sample F on a uniform grid of fractional positions."""
    grid = [j / grid_size for j in range(grid_size)]
    vals = [f_value(measure, expected_branch, threshold, span, x, tol) for x in grid]
    return PeriodicProfile(
        kind="F",
        lam=span.lam,
        grid=tuple(grid),
        values=tuple(vals),
        method="kink-quadrature",
        tol=tol,
    )


# ---------------------------------------------------------------------------
# symmetric q-ary specialization F1: independent quadrature and series routes


def f1_quadrature(q: int, d: int, x: float, tol: float = 1e-12) -> float:
    """Mean profile of the symmetric q-ary model at fractional position x.

    Kink form: (Q^2/(Q-1)) * sum_m Q^(m-x) (P(D, Q^(x-m)) - P(D, Q^(x-m-1))).
    Written directly in powers of Q, independently of the general-lambda route.
    """
    if q < 2 or d < 2:
        raise ValueError("need q >= 2 and d >= 2")
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    fact = math.factorial(d)
    qf = float(q)
    total = 0.0
    m = 0
    while True:
        u = qf ** (x - m)
        total += (gammainc_lower(d, u) - gammainc_lower(d, u / qf)) * qf ** (m - x)
        bound = u ** (d - 1) / fact / (1.0 - qf ** -(d - 1))
        if bound < tol * max(total, 1.0):
            break
        m += 1
        if m > _MAX_KINKS:
            raise ArithmeticError("kink sum failed to converge toward small cells")
    m = -1
    while True:
        u = qf ** (x - m)
        total += (gammainc_lower(d, u) - gammainc_lower(d, u / qf)) * qf ** (m - x)
        if u / qf > d and 2.0 * gammainc_upper(d, u / qf) / u < tol * max(total, 1.0):
            break
        m -= 1
        if m < -_MAX_KINKS:
            raise ArithmeticError("kink sum failed to converge toward large cells")
    return qf * qf / (qf - 1.0) * total


def f1_series(q: int, d: int, y: float, tol: float = 1e-12) -> float:
    """Series route: G(y) = Q * sum_{n in Z} P(D, y Q^n) / (y Q^n), 0 < y <= Q.

    Toward n -> +inf the terms fall below 1/(y Q^n) (geometric in 1/Q); toward
    n -> -inf below (y Q^n)^(D-1)/D! (geometric since D >= 2).
    """
    if not 0 < y <= q:
        raise ValueError("y must lie in (0, q]")
    qf = float(q)
    fact = math.factorial(d)
    total = 0.0
    n = 0
    while True:
        s = y * qf**n
        total += gammainc_lower(d, s) / s
        if (1.0 / s) * (qf / (qf - 1.0)) < tol * max(total, 1.0):
            break
        n += 1
        if n > _MAX_KINKS:
            raise ArithmeticError("series failed to converge toward large arguments")
    n = -1
    while True:
        s = y * qf**n
        total += gammainc_lower(d, s) / s
        bound = s ** (d - 1) / fact / (1.0 - qf ** -(d - 1))
        if bound < tol * max(total, 1.0):
            break
        n -= 1
        if n < -_MAX_KINKS:
            raise ArithmeticError("series failed to converge toward small arguments")
    return qf * total


# ---------------------------------------------------------------------------
# variance profile F2


def _f2_coeff_terms(q: int, mu: np.ndarray, mv: np.ndarray,
                    eu: np.ndarray, ev: np.ndarray) -> np.ndarray:
    """The cell coefficient of the variance integrand.

    Three pieces: an ordered-difference term active when mu > mv, a linear
    gap term with the positive part (mu - mv - 1)+, and a subtracted positive
    part (eu - q ev)+ whose sign condition is exactly mu >= mv + 2 because
    eu and ev are pure powers of q.
    """
    qf = float(q)
    a = qf**3 / (qf - 1.0)
    b = 2.0 * qf**3 / (qf - 1.0) ** 2
    gap = mu - mv
    c = np.where(gap > 0, a * (eu - ev), 0.0)
    c = c + np.where(gap > 1, 2.0 * a * (gap - 1) * eu, 0.0)
    c = c - np.where(gap > 1, b * (eu - qf * ev), 0.0)
    return c


def f2_pointwise(q: int, d: int, a: float, b: float, u: float, v: float) -> float:
    """Variance integrand at fractional parts (a, b) and Gamma points (u, v).

    a and b are the fractional parts of x - log_q u and x - log_q v; the
    integrand is constant on each kink cell, so only the cell indices and the
    pure q-powers q^(-a)/u, q^(-b)/v enter.
    """
    eu = float(q) ** (-a) / u
    ev = float(q) ** (-b) / v
    gap = round((b - a) + math.log(v / u) / math.log(q))
    c = _f2_coeff_terms(
        q, np.asarray([gap]), np.asarray([0]), np.asarray([eu]), np.asarray([ev])
    )
    return float(c[0])


def _f2_window(q: int, d: int) -> tuple[int, int]:
    # lower side: the gamma argument q^(y-m) exceeds the exp underflow scale
    # and the cell masses vanish identically in float64
    m_lo = -(math.ceil(math.log(760.0) / math.log(q)) + 8)
    # upper side: cell mass ~ q^(-D m) against coefficient growth ~ q^m
    m_hi = math.ceil(130.0 / ((d - 1) * math.log(q))) + 8
    return m_lo, m_hi


def _f2_cell_sum(q: int, d: int, y: float, m_lo: int, m_hi: int) -> float:
    """Exact double cell sum via prefix sums, O(window) per evaluation."""
    qf = float(q)
    ms = np.arange(m_lo, m_hi + 2)
    p_hi = np.asarray([gammainc_lower(d, qf ** (y - m)) for m in ms])
    w = p_hi[:-1] - p_hi[1:]  # mass of Gamma(D) on (q^(y-m-1), q^(y-m)]
    m_idx = ms[:-1].astype(float)
    e = qf ** (m_idx - y)
    a = qf**3 / (qf - 1.0)
    b = 2.0 * qf**3 / (qf - 1.0) ** 2

    cw = np.cumsum(w)
    cew = np.cumsum(e * w)
    cmw = np.cumsum(m_idx * w)
    # strictly-below prefix sums: sums over j < i and over j <= i - 2
    w1 = np.concatenate(([0.0], cw[:-1]))
    ew1 = np.concatenate(([0.0], cew[:-1]))
    w2 = np.concatenate(([0.0, 0.0], cw[:-2]))
    ew2 = np.concatenate(([0.0, 0.0], cew[:-2]))
    mw2 = np.concatenate(([0.0, 0.0], cmw[:-2]))

    term1 = a * np.sum(w * (e * w1 - ew1))
    term2 = 2.0 * a * np.sum(w * e * ((m_idx - 1.0) * w2 - mw2))
    term3 = -b * np.sum(w * (e * w2 - qf * ew2))
    return float(term1 + term2 + term3)


def f2_quadrature(q: int, d: int, y: float, tol: float = 1e-9) -> float:
    """Variance profile at fractional position y by exact kink-cell summation.

    The integrand is constant on every two-dimensional kink cell, so each
    cell contributes its coefficient times a product of Gamma(D) cell masses;
    no quadrature rule is needed inside cells.  The only error source is
    window truncation, estimated by re-summing on a window shrunk by 8 cells
    per side.
    """
    if q < 2 or d < 2:
        raise ValueError("need q >= 2 and d >= 2")
    y = y % 1.0
    m_lo, m_hi = _f2_window(q, d)
    full = _f2_cell_sum(q, d, y, m_lo, m_hi)
    # the low tail dies double-exponentially (4 cells of margin suffice);
    # the high tail is geometric, so probe it with a wider 8-cell shrink
    shrunk = _f2_cell_sum(q, d, y, m_lo + 4, m_hi - 8)
    err = abs(full - shrunk) + 1e-14 * abs(full)
    if err > tol:
        raise ArithmeticError(
            f"cell-sum truncation error estimate {err:.3e} exceeds tol {tol:.3e}"
        )
    return full


def _f2_at_points(q: int, d: int, y: float, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Vectorized integrand at Gamma sample pairs for fractional position y."""
    lq = math.log(q)
    mu = np.floor(y - np.log(t) / lq)
    mv = np.floor(y - np.log(s) / lq)
    eu = float(q) ** (mu - y)
    ev = float(q) ** (mv - y)
    return _f2_coeff_terms(q, mu, mv, eu, ev)


def f2_montecarlo(
    q: int,
    d: int,
    y: float,
    replicas: int = 10**7,
    seed: int = 0,
    batch_size: int = 1 << 20,
) -> tuple[float, float]:
    """Monte Carlo estimate (value, stderr) of the variance profile at y.

    Averages the symmetrized cell integrand over independent Gamma(D, 1)
    pairs.  Symmetrizing in (t, s) halves the variance at no extra cost.
    """
    from .montecarlo import _MeanVar, _batches

    y = y % 1.0
    mv = _MeanVar()
    for bi, size in _batches(replicas, batch_size):
        rng = derive_rng(seed, seeding.STREAM_F2_MC, bi)
        t = rng.standard_gamma(d, size=size)
        s = rng.standard_gamma(d, size=size)
        vals = 0.5 * (_f2_at_points(q, d, y, t, s) + _f2_at_points(q, d, y, s, t))
        mv.add_array(vals)
    return mv.mean, mv.stderr()


def f2_profile(
    q: int,
    d: int,
    grid_size: int,
    method: str = "kink-quadrature",
    tol: float = 1e-9,
    replicas: int = 10**7,
    seed: int = 0,
) -> PeriodicProfile:
    """Sample the variance profile on a uniform grid by either method."""
    grid = [j / grid_size for j in range(grid_size)]
    if method == "kink-quadrature":
        vals = [f2_quadrature(q, d, x, tol) for x in grid]
        out_tol = tol
    elif method == "monte-carlo":
        pairs = [f2_montecarlo(q, d, x, replicas, seed) for x in grid]
        vals = [max(v, 0.0) for v, _ in pairs]  # clip sampling noise at the floor
        out_tol = max(se for _, se in pairs)
    else:
        raise ValueError(f"unknown profile method {method!r}")
    return PeriodicProfile(
        kind="F2",
        lam=math.log(q),
        grid=tuple(grid),
        values=tuple(vals),
        method=method,
        tol=out_tol,
    )


def var_phi_series(q: int, d: int, x: float, tol: float = 1e-12) -> float:
    """Variance of the Poissonized occupancy functional at intensity x.

    Independent oracle for F2: with Phi = total count of q-adic intervals
    holding at least D of the Poisson(x) points, Var(cost) = q^2 Var(Phi) and
    q^2 Var(Phi)/x approaches the variance profile at log_q x for large x.
    Series over interval levels p, truncated once the remaining level weights
    q^p P(t_D <= x / q^p) fall below tol relative to the accumulated sum.
    """
    qf = float(q)
    p_max = max(0, math.ceil(math.log(max(x, 1.0)) / math.log(q))) + math.ceil(
        130.0 / ((d - 1) * math.log(q))
    )
    lows = np.asarray([gammainc_lower(d, x / qf**p) for p in range(p_max + 1)])
    ups = 1.0 - lows
    scale = qf ** np.arange(p_max + 1)
    total = float(np.sum(scale * lows * ups))
    # cross terms: levels p' > p, cov(level p', level p) = q^p' P_low(p') P_up(p)
    lowscale = scale * lows
    tail = np.cumsum((lowscale)[::-1])[::-1]  # tail[p] = sum_{p'>=p} q^p' P_low(p')
    total += float(2.0 * np.sum(ups[:-1] * tail[1:]))
    if lowscale[-1] > tol * max(total, 1.0):
        raise ArithmeticError("level series truncated too early; raise p_max")
    return total


# ---------------------------------------------------------------------------
# profile validation and serialization


def _neville(xs: np.ndarray, ys: np.ndarray, x: float) -> float:
    """Neville polynomial extrapolation through (xs, ys) evaluated at x."""
    p = [float(y) for y in ys]
    n = len(p)
    for lvl in range(1, n):
        for i in range(n - lvl):
            p[i] = ((x - xs[i + lvl]) * p[i] + (xs[i] - x) * p[i + 1]) / (
                xs[i] - xs[i + lvl]
            )
    return p[0]


def validate_profile(profile: PeriodicProfile, limit: float | None = None) -> None:
    """Check the periodic-consistency contracts of a sampled profile.

    Meaningful for reasonably fine grids (at least 8 points): the wraparound
    check extrapolates the last six samples to x = 1 and compares with the
    sample at the first grid point.  The allowed mismatch is 10*tol plus a
    data-driven term (the trailing sixth difference) that measures what the
    extrapolation itself can resolve at this grid spacing.  For F and F1 the
    trapezoidal period mean must match the limit constant when one is given.
    """
    g = np.asarray(profile.grid)
    v = np.asarray(profile.values)
    if g.size >= 8:
        at_one = _neville(g[-6:], v[-6:], g[0] + 1.0)
        resolution = abs(float(np.diff(v[-7:], 6)[0]))
        if abs(at_one - v[0]) > 10 * profile.tol + 3 * resolution:
            raise ValueError(
                f"wraparound mismatch {abs(at_one - v[0]):.3e} exceeds 10*tol"
            )
    if limit is not None and profile.kind in ("F", "F1"):
        mean = profile.mean_value()
        if abs(mean - limit) > 100 * profile.tol:
            raise ValueError(
                f"period mean {mean!r} deviates from the limit constant {limit!r}"
            )


def write_profile_csv(profile: PeriodicProfile, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "value", "method", "tol"])
        for x, val in zip(profile.grid, profile.values):
            wr.writerow([f"{x:.17g}", f"{val:.17g}", profile.method, f"{profile.tol:.17g}"])


def write_convergence_csv(rows: Sequence[ConvergenceRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "ratio", "predicted", "rel_error"])
        for r in rows:
            wr.writerow([r.n, f"{r.ratio:.17g}", f"{r.predicted:.17g}", f"{r.rel_error:.17g}"])


# ---------------------------------------------------------------------------
# convergence report


def convergence_report(
    spec: SplittingSpec,
    measure: SplittingMeasure,
    span: SpanResult,
    n_list: Sequence[int],
    cost_source: CostTable | Callable[[int], float],
) -> list[ConvergenceRow]:
    """Tabulate E(R_n)/n against its asymptotic prediction for each n."""
    if list(n_list) != sorted(n_list):
        raise ValueError("n_list must be ascending")
    eg = float(spec.expected_branch)
    d = spec.threshold
    if isinstance(cost_source, CostTable):
        floats = cost_source.as_floats()

        def mean_cost(n: int) -> float:
            if n > cost_source.n_max:
                raise ValueError(f"cost table covers n <= {cost_source.n_max}, got {n}")
            return floats[n]

    else:
        mean_cost = cost_source

    rows = []
    const = limit_constant(measure, eg, d)
    for n in n_list:
        ratio = mean_cost(n) / n
        if span.arithmetic:
            frac = (math.log(n) / span.lam) % 1.0
            predicted = f_value(measure, eg, d, span, frac)
        else:
            predicted = const
        rows.append(
            ConvergenceRow(
                n=int(n),
                ratio=ratio,
                predicted=predicted,
                rel_error=abs(ratio - predicted) / predicted,
            )
        )
    return rows
