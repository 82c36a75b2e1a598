"""Splitting-algorithm specifications and their splitting measures.

A splitting algorithm takes n items, draws a branching degree G from a fixed
law on {2, 3, ...}, draws a random probability vector for that degree, routes
the items multinomially into the subsets, and recurses into every subset until
fewer than `threshold` items remain.  Its cost is the number of tree nodes.

The central derived object is the splitting measure: the size-biased law of a
single subset weight.  A weight value a occurring with vector probability q
contributes mass q * a, so the masses sum to one.  All measure atoms are exact
rationals, which is what makes the arithmetic/non-arithmetic dichotomy of the
support decidable by integer factorization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence, Union

__all__ = [
    "Symmetric",
    "Deterministic",
    "Mixture",
    "SamplerLaw",
    "WeightLaw",
    "SplittingSpec",
    "SplittingMeasure",
    "SpanResult",
    "SpecError",
    "validate",
    "build_measure",
    "measure_from_atoms",
    "detect_span",
    "moments",
    "parse_spec",
    "load_spec_file",
    "spec_to_jsonable",
    "make_qary_spec",
]


class SpecError(ValueError):
    """A specification or spec file failed validation."""


# ---------------------------------------------------------------------------
# weight laws


@dataclass(frozen=True)
class Symmetric:
    """Equal deterministic weights 1/degree on every subset."""


@dataclass(frozen=True)
class Deterministic:
    """One fixed weight vector."""

    weights: tuple[Fraction, ...]


@dataclass(frozen=True)
class Mixture:
    """Finitely many weight vectors, one drawn per split.

    cases: tuple of (case probability, weight vector).
    """

    cases: tuple[tuple[Fraction, tuple[Fraction, ...]], ...]


@dataclass(frozen=True)
class SamplerLaw:
    """Black-box weight sampler, usable only by the tree simulator.

    `sample(rng)` must return a length-`length` sequence of floats in [0, 1)
    summing to one.  Exact routines (measure construction, cost recurrences)
    reject specs containing one of these.
    """

    length: int
    sample: Callable = field(compare=False)


WeightLaw = Union[Symmetric, Deterministic, Mixture, SamplerLaw]


# ---------------------------------------------------------------------------
# specification


@dataclass(frozen=True)
class SplittingSpec:
    """Complete description of one splitting algorithm.

    threshold: recursion stops on fewer than this many items (>= 2).
    branch: tuple of (degree, probability) pairs for the branching law.
    weight_laws: weight law per declared degree.
    """

    threshold: int
    branch: tuple[tuple[int, Fraction], ...]
    weight_laws: dict[int, WeightLaw]

    @property
    def expected_branch(self) -> Fraction:
        return sum((Fraction(d) * p for d, p in self.branch), Fraction(0))

    def has_sampler(self) -> bool:
        return any(isinstance(w, SamplerLaw) for w in self.weight_laws.values())

    def constant_degree(self) -> int | None:
        """The single degree Q if the branching law is degenerate, else None."""
        live = [d for d, p in self.branch if p > 0]
        return live[0] if len(live) == 1 else None

    def is_symmetric_qary(self) -> bool:
        """True when a single degree Q splits with equal weights 1/Q."""
        q = self.constant_degree()
        if q is None:
            return False
        law = self.weight_laws.get(q)
        if isinstance(law, Symmetric):
            return True
        if isinstance(law, Deterministic):
            return all(w == Fraction(1, q) for w in law.weights)
        return False


def _law_vectors(law: WeightLaw, degree: int) -> list[tuple[Fraction, tuple[Fraction, ...]]]:
    """Expand a law into (case probability, weight vector) pairs."""
    if isinstance(law, Symmetric):
        return [(Fraction(1), tuple(Fraction(1, degree) for _ in range(degree)))]
    if isinstance(law, Deterministic):
        return [(Fraction(1), law.weights)]
    if isinstance(law, Mixture):
        return list(law.cases)
    raise SpecError("black-box sampler laws have no exact expansion")


def _check_vector(weights: Sequence[Fraction], degree: int, where: str) -> list[str]:
    errs = []
    if len(weights) != degree:
        errs.append(f"{where}: vector length {len(weights)} != degree {degree}")
        return errs
    if sum(weights) != 1:
        errs.append(f"{where}: weights sum to {sum(weights)}, expected 1")
    for i, w in enumerate(weights):
        if w < 0:
            errs.append(f"{where}[{i}]: weight {w} is negative")
        if w >= 1:
            errs.append(f"{where}[{i}]: weight {w} is not strictly below 1")
    if sum(1 for w in weights if w > 0) < 2:
        errs.append(f"{where}: fewer than two strictly positive weights")
    return errs


def validate(spec: SplittingSpec) -> list[str]:
    """Return a list of violations; empty means the spec is well formed."""
    errs: list[str] = []
    if spec.threshold < 2:
        errs.append(f"threshold: must be at least 2, got {spec.threshold}")
    if not spec.branch:
        errs.append("branch: empty branching law")
    seen = set()
    total = Fraction(0)
    for i, (degree, prob) in enumerate(spec.branch):
        if degree < 2:
            errs.append(f"branch[{i}].degree: must be at least 2, got {degree}")
        if degree in seen:
            errs.append(f"branch[{i}].degree: duplicate degree {degree}")
        seen.add(degree)
        if prob < 0:
            errs.append(f"branch[{i}].prob: negative probability {prob}")
        total += prob
        if degree not in spec.weight_laws:
            errs.append(f"weights: no weight law for degree {degree}")
    if spec.branch and total != 1:
        errs.append(f"branch: probabilities sum to {total}, expected exactly 1")
    for degree in sorted(spec.weight_laws):
        if degree not in seen:
            errs.append(f"weights[{degree}]: law for degree not present in branch")
            continue
        law = spec.weight_laws[degree]
        where = f"weights[{degree}]"
        if isinstance(law, Symmetric):
            continue
        if isinstance(law, SamplerLaw):
            if law.length != degree:
                errs.append(f"{where}: sampler length {law.length} != degree {degree}")
            continue
        if isinstance(law, Deterministic):
            errs.extend(_check_vector(law.weights, degree, where))
            continue
        if isinstance(law, Mixture):
            if not law.cases:
                errs.append(f"{where}: mixture with no cases")
                continue
            csum = sum((p for p, _ in law.cases), Fraction(0))
            if csum != 1:
                errs.append(f"{where}: case probabilities sum to {csum}, expected 1")
            for j, (p, vec) in enumerate(law.cases):
                if p < 0:
                    errs.append(f"{where}.cases[{j}].prob: negative probability {p}")
                errs.extend(_check_vector(vec, degree, f"{where}.cases[{j}]"))
            continue
        errs.append(f"{where}: unknown weight law type {type(law).__name__}")
    return errs


# ---------------------------------------------------------------------------
# splitting measure


@dataclass(frozen=True)
class SplittingMeasure:
    """Size-biased subset-weight law: sorted rational atoms with masses summing to 1."""

    atoms: tuple[tuple[Fraction, Fraction], ...]  # (value, mass), values ascending
    expected_branch: Fraction

    def __post_init__(self) -> None:
        if not self.atoms:
            raise SpecError("measure has no atoms")
        if sum((m for _, m in self.atoms), Fraction(0)) != 1:
            raise SpecError("measure masses do not sum to 1")
        vals = [a for a, _ in self.atoms]
        if any(not (0 < a < 1) for a in vals):
            raise SpecError("measure atoms must lie strictly inside (0, 1)")
        if sorted(set(vals)) != vals:
            raise SpecError("measure atoms must be sorted and distinct")

    @property
    def delta(self) -> Fraction:
        """Largest atom value; strict upper bound witness sup V <= delta < 1."""
        return self.atoms[-1][0]

    @cached_property
    def neg_log_moment(self) -> float:
        """E(-log W), the drift of the associated log-weight walk."""
        return sum(float(m) * -math.log(float(a)) for a, m in self.atoms)

    @cached_property
    def heavy_moment(self) -> float:
        """E(|log W| / W), used by the walk overshoot bound."""
        return sum(float(m) * -math.log(float(a)) / float(a) for a, m in self.atoms)

    @cached_property
    def recip_moment(self) -> float:
        """E(1 / W)."""
        return sum(float(m) / float(a) for a, m in self.atoms)

    def values_masses(self) -> tuple[list[float], list[float]]:
        return [float(a) for a, _ in self.atoms], [float(m) for _, m in self.atoms]


def build_measure(spec: SplittingSpec) -> SplittingMeasure:
    """Construct the splitting measure of a validated spec.

    Zero weights carry zero mass and drop out; equal values merge.
    """
    errs = validate(spec)
    if errs:
        raise SpecError("; ".join(errs))
    if spec.has_sampler():
        raise SpecError("spec contains a black-box sampler law; no exact measure")
    masses: dict[Fraction, Fraction] = {}
    for degree, pdeg in spec.branch:
        if pdeg == 0:
            continue
        for pcase, vec in _law_vectors(spec.weight_laws[degree], degree):
            if pcase == 0:
                continue
            for w in vec:
                if w > 0:
                    masses[w] = masses.get(w, Fraction(0)) + pdeg * pcase * w
    atoms = tuple(sorted(masses.items()))
    return SplittingMeasure(atoms=atoms, expected_branch=spec.expected_branch)


def measure_from_atoms(
    atoms: Sequence[tuple[Fraction, Fraction]], expected_branch: Fraction | int = 2
) -> SplittingMeasure:
    """Build a measure directly from (value, mass) atoms (mainly for tests/studies)."""
    merged: dict[Fraction, Fraction] = {}
    for a, m in atoms:
        merged[Fraction(a)] = merged.get(Fraction(a), Fraction(0)) + Fraction(m)
    return SplittingMeasure(
        atoms=tuple(sorted(merged.items())), expected_branch=Fraction(expected_branch)
    )


def moments(measure: SplittingMeasure) -> tuple[float, float, float, Fraction]:
    """Return (E(G), E(-log W), E(|log W|/W), delta)."""
    return (
        float(measure.expected_branch),
        measure.neg_log_moment,
        measure.heavy_moment,
        measure.delta,
    )


# ---------------------------------------------------------------------------
# span detection

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)  # deterministic below 3.3e24


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _factorize(n: int) -> dict[int, int]:
    """Prime factorization by trial division with a primality early-out.

    The early-out runs only when a factor was stripped, so the worst case is
    plain trial division up to sqrt(n).
    """
    out: dict[int, int] = {}
    if n <= 1:
        return out
    if _is_prime(n):
        out[n] = 1
        return out
    d = 2
    while n > 1 and d * d <= n:
        if n % d == 0:
            while n % d == 0:
                out[d] = out.get(d, 0) + 1
                n //= d
            if n > 1 and _is_prime(n):
                out[n] = out.get(n, 0) + 1
                return out
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


@dataclass(frozen=True)
class SpanResult:
    """Outcome of exponential-arithmeticity detection.

    arithmetic: every atom is exp(-k * lam) for positive integers k.
    lam: the span (largest such rate), None unless arithmetic.
    multipliers: the k per atom in measure order, gcd 1, None unless arithmetic.
    undecidable: an atom exceeded the factorization bound; distinct from
        a definite non-arithmetic verdict.
    """

    arithmetic: bool
    lam: float | None = None
    multipliers: tuple[int, ...] | None = None
    undecidable: bool = False


def detect_span(measure: SplittingMeasure, factor_bound: int = 10**12) -> SpanResult:
    """Decide arithmeticity of the measure support exactly.

    Writing each atom as a product of prime powers, the support lies on a
    geometric lattice iff all exponent vectors are integer multiples of one
    primitive vector.  The span follows from the gcd of the multiples.
    """
    vectors: list[dict[int, int]] = []
    for a, _ in measure.atoms:
        if a.numerator > factor_bound or a.denominator > factor_bound:
            return SpanResult(arithmetic=False, undecidable=True)
        expo: dict[int, int] = {}
        for p, e in _factorize(a.numerator).items():
            expo[p] = expo.get(p, 0) + e
        for p, e in _factorize(a.denominator).items():
            expo[p] = expo.get(p, 0) - e
        vectors.append(expo)

    primes = sorted(set().union(*[set(v) for v in vectors]))
    mat = [[v.get(p, 0) for p in primes] for v in vectors]

    base = mat[0]
    g0 = math.gcd(*(abs(e) for e in base))
    prim = [e // g0 for e in base]
    ks = [g0]
    for row in mat[1:]:
        pivot = next(i for i, w in enumerate(prim) if w != 0)
        if row[pivot] % prim[pivot] != 0:
            return SpanResult(arithmetic=False)
        k = row[pivot] // prim[pivot]
        if k < 1 or any(e != k * w for e, w in zip(row, prim)):
            return SpanResult(arithmetic=False)
        ks.append(k)

    g = math.gcd(*ks)
    # prim . log(primes) = log of an atom root, negative for atoms in (0,1)
    log_root = sum(w * math.log(p) for w, p in zip(prim, primes))
    lam = -g * log_root
    mults = tuple(k // g for k in ks)
    return SpanResult(arithmetic=True, lam=lam, multipliers=mults)


# ---------------------------------------------------------------------------
# JSON spec files


def _parse_rational(obj, path: str) -> Fraction:
    if isinstance(obj, str):
        try:
            return Fraction(obj.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise SpecError(f"{path}: not a rational 'num/den' string ({exc})") from exc
    if isinstance(obj, int):
        return Fraction(obj)
    raise SpecError(f"{path}: expected a rational 'num/den' string, got {type(obj).__name__}")


def _parse_vector(obj, path: str) -> tuple[Fraction, ...]:
    if not isinstance(obj, list):
        raise SpecError(f"{path}: expected an array of rationals")
    return tuple(_parse_rational(x, f"{path}[{i}]") for i, x in enumerate(obj))


def _parse_law(obj, path: str) -> WeightLaw:
    if not isinstance(obj, dict) or "type" not in obj:
        raise SpecError(f"{path}: expected an object with a 'type' field")
    kind = obj["type"]
    if kind == "symmetric":
        return Symmetric()
    if kind == "deterministic":
        if "vector" not in obj:
            raise SpecError(f"{path}.vector: missing")
        return Deterministic(weights=_parse_vector(obj["vector"], f"{path}.vector"))
    if kind == "mixture":
        if not isinstance(obj.get("cases"), list):
            raise SpecError(f"{path}.cases: expected an array of cases")
        cases = []
        for j, case in enumerate(obj["cases"]):
            cp = f"{path}.cases[{j}]"
            if not isinstance(case, dict):
                raise SpecError(f"{cp}: expected an object")
            prob = _parse_rational(case.get("prob"), f"{cp}.prob")
            vec = _parse_vector(case.get("vector"), f"{cp}.vector")
            cases.append((prob, vec))
        return Mixture(cases=tuple(cases))
    raise SpecError(f"{path}.type: unknown weight law type {kind!r}")


def parse_spec(data) -> SplittingSpec:
    """Parse a spec from a JSON object (already deserialized).

    Raises SpecError naming the JSON path for malformed fields, then runs
    full validation and raises on any violation.
    """
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SpecError(f"$: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise SpecError("$: expected a JSON object")
    if "D" not in data:
        raise SpecError("$.D: missing")
    if not isinstance(data["D"], int) or isinstance(data["D"], bool):
        raise SpecError("$.D: expected an integer")
    if not isinstance(data.get("branch"), list):
        raise SpecError("$.branch: expected an array")
    branch = []
    for i, entry in enumerate(data["branch"]):
        bp = f"$.branch[{i}]"
        if not isinstance(entry, dict):
            raise SpecError(f"{bp}: expected an object")
        deg = entry.get("degree")
        if not isinstance(deg, int) or isinstance(deg, bool):
            raise SpecError(f"{bp}.degree: expected an integer")
        branch.append((deg, _parse_rational(entry.get("prob"), f"{bp}.prob")))
    if not isinstance(data.get("weights"), dict):
        raise SpecError("$.weights: expected an object keyed by degree")
    laws: dict[int, WeightLaw] = {}
    for key, law_obj in data["weights"].items():
        try:
            degree = int(key)
        except ValueError:
            raise SpecError(f"$.weights[{key!r}]: key is not an integer degree") from None
        laws[degree] = _parse_law(law_obj, f"$.weights.{key}")
    spec = SplittingSpec(threshold=data["D"], branch=tuple(branch), weight_laws=laws)
    errs = validate(spec)
    if errs:
        # keep the first few; each names field and rule already
        raise SpecError("; ".join(f"$.{e}" for e in errs))
    return spec


def load_spec_file(path: str) -> SplittingSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"$: invalid JSON in {path} ({exc})") from exc
    return parse_spec(data)


def _rat_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def spec_to_jsonable(spec: SplittingSpec) -> dict:
    """Inverse of parse_spec, for writing spec files."""

    def law_obj(law: WeightLaw) -> dict:
        if isinstance(law, Symmetric):
            return {"type": "symmetric"}
        if isinstance(law, Deterministic):
            return {"type": "deterministic", "vector": [_rat_str(w) for w in law.weights]}
        if isinstance(law, Mixture):
            return {
                "type": "mixture",
                "cases": [
                    {"prob": _rat_str(p), "vector": [_rat_str(w) for w in vec]}
                    for p, vec in law.cases
                ],
            }
        raise SpecError("sampler laws cannot be written to a spec file")

    return {
        "D": spec.threshold,
        "branch": [{"degree": d, "prob": _rat_str(p)} for d, p in spec.branch],
        "weights": {str(d): law_obj(law) for d, law in sorted(spec.weight_laws.items())},
    }


def make_qary_spec(q: int, threshold: int) -> SplittingSpec:
    """Symmetric constant-degree spec: always split q ways with weights 1/q."""
    return SplittingSpec(
        threshold=threshold,
        branch=((q, Fraction(1)),),
        weight_laws={q: Symmetric()},
    )
