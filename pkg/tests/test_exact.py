"""Exact expected costs, cost distribution, and the Poisson transform."""
from fractions import Fraction

import pytest

from treesplit.exact import (
    closed_form_qary,
    cost_distribution,
    expected_cost_table,
    poisson_transform_expect,
    poisson_transform_with_bound,
    write_cost_table_csv,
    write_pmf_csv,
)
from treesplit.model import build_measure, make_qary_spec

F = Fraction

CLOSED_VS_DP_TOL = 1e-10
FLOAT64_VS_EXACT_TOL = 1e-9


def test_fair_binary_small_values(knuth_spec):
    table = expected_cost_table(knuth_spec, 4)
    assert table.values[0] == 1
    assert table.values[1] == 1
    assert table.values[2] == 5
    assert table.values[3] == F(23, 3)
    assert table.values[4] == F(221, 21)
    assert table.mode == "exact"
    assert table.n_max == 4


def test_threshold_region_is_one():
    spec = make_qary_spec(2, 3)
    table = expected_cost_table(spec, 6)
    assert table.values[:3] == (F(1), F(1), F(1))
    assert table.values[3] > 1


def test_costs_nondecreasing(knuth_spec, g23_spec, mixture_spec):
    for spec in (knuth_spec, g23_spec, mixture_spec):
        table = expected_cost_table(spec, 24)
        vals = table.values
        assert all(vals[i] <= vals[i + 1] for i in range(len(vals) - 1))


def test_cost_at_least_tree_lower_bound(g23_spec):
    # splitting n items with branching at most 3 needs at least (n-1)/2 internal nodes
    table = expected_cost_table(g23_spec, 20)
    for n in range(2, 21):
        assert table.values[n] >= 1 + F(n - 1, 2)


def test_float64_matches_exact(knuth_spec, g23_spec):
    for spec in (knuth_spec, g23_spec):
        exact = expected_cost_table(spec, 64)
        approx = expected_cost_table(spec, 64, mode="float64")
        for n in range(65):
            want = float(exact.values[n])
            assert abs(approx.values[n] - want) <= FLOAT64_VS_EXACT_TOL * want


def test_closed_form_matches_dp():
    for q in (2, 3):
        for d in (2, 3):
            spec = make_qary_spec(q, d)
            table = expected_cost_table(spec, 64)
            for n in range(65):
                want = float(table.values[n])
                got = closed_form_qary(q, d, n)
                assert abs(got - want) <= CLOSED_VS_DP_TOL * max(1.0, want), (q, d, n)


def test_closed_form_threshold_region():
    assert closed_form_qary(2, 2, 0) == 1.0
    assert closed_form_qary(3, 4, 3) == 1.0


def test_pmf_fair_binary_two_items(knuth_spec):
    # two items resplit together with chance 1/2, else both leaves close
    pmf = cost_distribution(knuth_spec, 2, tail_eps=1e-3)
    assert pmf.support == tuple(2 * k + 3 for k in range(11))
    for k, p in enumerate(pmf.probs):
        assert p == pytest.approx(0.5 ** (k + 1), rel=1e-12)
    assert pmf.tail_mass == pytest.approx(2.0**-11, rel=1e-12)
    assert pmf.tail_mass < 1e-3


def test_pmf_three_items_head(knuth_spec):
    pmf = cost_distribution(knuth_spec, 3, tail_eps=1e-6)
    assert pmf.support[0] == 5
    assert pmf.probs[0] == pytest.approx(0.375, rel=1e-12)


def test_pmf_mass_conservation(knuth_spec, g23_spec, mixture_spec):
    for spec in (knuth_spec, g23_spec, mixture_spec):
        pmf = cost_distribution(spec, 4, tail_eps=1e-8)
        total = sum(pmf.probs) + pmf.tail_mass
        assert total == pytest.approx(1.0, abs=1e-12)
        assert all(p >= 0 for p in pmf.probs)


def test_pmf_support_parity(knuth_spec):
    # a binary split tree always has odd node count
    pmf = cost_distribution(knuth_spec, 5, tail_eps=1e-6)
    assert all(k % 2 == 1 for k in pmf.support)


def test_pmf_mean_bounds_dp(knuth_spec):
    table = expected_cost_table(knuth_spec, 8)
    for n in (2, 3, 5, 8):
        pmf = cost_distribution(knuth_spec, n, tail_eps=1e-10)
        assert pmf.mean_lower_bound() <= float(table.values[n])
        assert pmf.mean_lower_bound() == pytest.approx(float(table.values[n]), rel=1e-6)


def test_poisson_transform_at_zero(knuth_spec):
    table = expected_cost_table(knuth_spec, 16)
    assert poisson_transform_expect(table, 0.0) == 1.0


def test_poisson_transform_frozen_value(knuth_spec):
    # reference values pinned from a converged 64-entry table
    table = expected_cost_table(knuth_spec, 64)
    value, bound = poisson_transform_with_bound(table, 1.0)
    assert bound < 1e-20
    assert value == pytest.approx(2.3379426605041584, rel=1e-13)
    value4, bound4 = poisson_transform_with_bound(table, 4.0)
    assert bound4 < 1e-20
    assert value4 == pytest.approx(10.544590854289938, rel=1e-13)


def test_poisson_transform_short_table_raises(knuth_spec):
    table = expected_cost_table(knuth_spec, 8)
    with pytest.raises(ValueError):
        poisson_transform_expect(table, 16.0, tol=1e-10)


def test_cost_table_csv(tmp_path, knuth_spec):
    table = expected_cost_table(knuth_spec, 4)
    path = tmp_path / "table.csv"
    write_cost_table_csv(table, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,expected_cost,mode"
    assert lines[4] == "3,23/3,exact"
    assert len(lines) == 6


def test_pmf_csv(tmp_path, knuth_spec):
    pmf = cost_distribution(knuth_spec, 2, tail_eps=1e-2)
    path = tmp_path / "pmf.csv"
    write_pmf_csv(pmf, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,prob"
    assert lines[1] == "3,0.5"
    assert lines[-1].startswith("# tail_mass=")


def test_as_floats_round_trip(knuth_spec):
    table = expected_cost_table(knuth_spec, 8)
    floats = table.as_floats()
    assert floats[2] == 5.0
    assert len(floats) == 9
