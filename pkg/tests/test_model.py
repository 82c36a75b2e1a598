"""Spec parsing, splitting measures, and span detection."""
import math
from fractions import Fraction

import pytest

from treesplit.model import (
    Deterministic,
    Mixture,
    SamplerLaw,
    SpecError,
    SplittingSpec,
    Symmetric,
    build_measure,
    detect_span,
    load_spec_file,
    make_qary_spec,
    measure_from_atoms,
    moments,
    parse_spec,
    spec_to_jsonable,
    validate,
)

F = Fraction


# ---------------------------------------------------------------------------
# validation


def test_validate_clean_spec(knuth_spec):
    assert validate(knuth_spec) == []


def test_validate_threshold():
    spec = SplittingSpec(threshold=1, branch=((2, F(1)),), weight_laws={2: Symmetric()})
    assert any("threshold" in msg for msg in validate(spec))


def test_validate_branch_probability_sum():
    spec = SplittingSpec(threshold=2, branch=((2, F(1, 2)),), weight_laws={2: Symmetric()})
    assert any("sum" in msg for msg in validate(spec))


def test_validate_vector_length():
    spec = SplittingSpec(
        threshold=2,
        branch=((2, F(1)),),
        weight_laws={2: Deterministic(weights=(F(1, 2),))},
    )
    msgs = validate(spec)
    assert any("length" in msg for msg in msgs)


def test_validate_missing_and_extra_law():
    spec = SplittingSpec(threshold=2, branch=((2, F(1)),), weight_laws={3: Symmetric()})
    msgs = validate(spec)
    assert any("no weight law" in msg for msg in msgs)
    assert any("not present in branch" in msg for msg in msgs)


# ---------------------------------------------------------------------------
# measures


def test_measure_fair_binary(knuth_spec):
    meas = build_measure(knuth_spec)
    assert meas.atoms == ((F(1, 2), F(1)),)
    assert meas.expected_branch == 2


def test_measure_mixed_degrees(g23_spec):
    meas = build_measure(g23_spec)
    assert meas.atoms == ((F(1, 3), F(1, 2)), (F(1, 2), F(1, 2)))
    assert meas.expected_branch == F(5, 2)


def test_measure_mixture_cases(mixture_spec):
    meas = build_measure(mixture_spec)
    assert meas.atoms == (
        (F(1, 16), F(1, 32)),
        (F(1, 4), F(1, 8)),
        (F(3, 4), F(3, 8)),
        (F(15, 16), F(15, 32)),
    )


def test_measure_drops_zeros_and_merges_duplicates():
    spec = SplittingSpec(
        threshold=2,
        branch=((3, F(1)),),
        weight_laws={3: Deterministic(weights=(F(0), F(1, 2), F(1, 2)))},
    )
    meas = build_measure(spec)
    assert meas.atoms == ((F(1, 2), F(1)),)


def test_measure_masses_sum_to_one(g23_spec, mixture_spec):
    for spec in (g23_spec, mixture_spec):
        meas = build_measure(spec)
        assert sum(mass for _, mass in meas.atoms) == 1


def test_measure_requires_exact_laws():
    spec = SplittingSpec(
        threshold=2,
        branch=((2, F(1)),),
        weight_laws={2: SamplerLaw(length=2, sample=lambda rng: [0.5, 0.5])},
    )
    assert spec.has_sampler()
    with pytest.raises(SpecError):
        build_measure(spec)


def test_moments_fair_binary(knuth_spec):
    e_g, neg_log, heavy, delta = moments(build_measure(knuth_spec))
    assert e_g == 2.0
    assert abs(neg_log - math.log(2)) < 1e-15
    assert abs(heavy - 2 * math.log(2)) < 1e-15
    assert delta == F(1, 2)


def test_moments_uneven_binary(asym_spec):
    meas = build_measure(asym_spec)
    _, neg_log, _, delta = moments(meas)
    # (1/3) log 3 + (2/3) log(3/2)
    want = math.log(3) / 3 + 2 * math.log(1.5) / 3
    assert abs(neg_log - want) < 1e-15
    assert delta == F(2, 3)
    assert abs(meas.recip_moment - 2.0) < 1e-15


# ---------------------------------------------------------------------------
# span detection


def test_span_single_atom(knuth_spec):
    res = detect_span(build_measure(knuth_spec))
    assert res.arithmetic and not res.undecidable
    assert abs(res.lam - math.log(2)) < 1e-15
    assert res.multipliers == (1,)


def test_span_incommensurable(g23_spec):
    res = detect_span(build_measure(g23_spec))
    assert not res.arithmetic
    assert not res.undecidable
    assert res.lam is None and res.multipliers is None


def test_span_common_base():
    meas = measure_from_atoms([(F(1, 4), F(1, 2)), (F(1, 16), F(1, 2))])
    res = detect_span(meas)
    assert res.arithmetic
    assert abs(res.lam - math.log(4)) < 1e-15
    # atoms sort ascending, so 1/16 = exp(-2 lam) leads
    assert res.multipliers == (2, 1)


def test_span_mixture_is_not_lattice(mixture_spec):
    res = detect_span(build_measure(mixture_spec))
    assert not res.arithmetic and not res.undecidable


def test_span_powers_property():
    # any finite set of powers of one ratio is arithmetic with the right span
    base = F(2, 5)
    for exps in [(1, 2), (2, 4, 6), (3, 5)]:
        n = len(exps)
        meas = measure_from_atoms([(base**e, F(1, n)) for e in exps])
        res = detect_span(meas)
        assert res.arithmetic
        g = math.gcd(*exps)
        assert abs(res.lam - g * (-math.log(float(base)))) < 1e-12
        assert res.multipliers == tuple(sorted((e // g for e in exps), reverse=True))


def test_span_rational_non_lattice():
    # 1/2 and 1/3 share no common exponential base
    meas = measure_from_atoms([(F(1, 2), F(1, 2)), (F(1, 3), F(1, 2))])
    assert not detect_span(meas).arithmetic


def test_span_undecidable_at_factor_bound():
    p = 1000000000039  # prime above the default bound of 1e12
    meas = measure_from_atoms([(F(1, 2), F(1, 2)), (F(1, p), F(1, 2))])
    res = detect_span(meas)
    assert res.undecidable
    assert not res.arithmetic
    # a raised bound resolves the same measure
    res2 = detect_span(meas, factor_bound=10**13)
    assert not res2.undecidable
    assert not res2.arithmetic


# ---------------------------------------------------------------------------
# JSON spec files


def _knuth_json():
    return {
        "D": 2,
        "branch": [{"degree": 2, "prob": "1"}],
        "weights": {"2": {"type": "symmetric"}},
    }


def test_parse_round_trip(knuth_spec, g23_spec, asym_spec, mixture_spec):
    for spec in (knuth_spec, g23_spec, asym_spec, mixture_spec):
        assert parse_spec(spec_to_jsonable(spec)) == spec


def test_parse_minimal(knuth_spec):
    assert parse_spec(_knuth_json()) == knuth_spec


def test_parse_error_paths():
    cases = [
        ({}, "$.D"),
        ({"D": "two"}, "$.D"),
        ({"D": 2}, "$.branch"),
        (
            {"D": 2, "branch": [{"degree": 1, "prob": "1"}], "weights": {"1": {"type": "symmetric"}}},
            "$.branch[0].degree",
        ),
        (
            {"D": 2, "branch": [{"degree": 2, "prob": 0.5}], "weights": {"2": {"type": "symmetric"}}},
            "$.branch[0].prob",
        ),
        (
            {"D": 2, "branch": [{"degree": 2, "prob": "1/2"}], "weights": {"2": {"type": "symmetric"}}},
            "$.branch",
        ),
        (
            {"D": 2, "branch": [{"degree": 2, "prob": "1"}], "weights": {"2": {"type": "nope"}}},
            "$.weights.2",
        ),
    ]
    for data, fragment in cases:
        with pytest.raises(SpecError) as exc:
            parse_spec(data)
        assert fragment in str(exc.value), (data, str(exc.value))


def test_load_spec_file(tmp_path, knuth_spec):
    import json

    path = tmp_path / "spec.json"
    path.write_text(json.dumps(_knuth_json()))
    assert load_spec_file(str(path)) == knuth_spec


def test_spec_properties(knuth_spec, g23_spec):
    assert knuth_spec.is_symmetric_qary()
    assert knuth_spec.constant_degree() == 2
    assert not knuth_spec.has_sampler()
    assert not g23_spec.is_symmetric_qary()
    assert g23_spec.constant_degree() is None
    q3 = make_qary_spec(3, 4)
    assert q3.is_symmetric_qary() and q3.threshold == 4
    assert build_measure(q3).atoms == ((F(1, 3), F(1)),)
