"""Limit constants, oscillating profiles, and variance asymptotics."""
import math

import pytest

from treesplit.asymptotics import (
    PeriodicProfile,
    convergence_report,
    f1_quadrature,
    f1_series,
    f2_montecarlo,
    f2_pointwise,
    f2_profile,
    f2_quadrature,
    f_value,
    limit_constant,
    periodic_profile_F,
    validate_profile,
    var_phi_series,
    write_convergence_csv,
    write_profile_csv,
)
from treesplit.exact import expected_cost_table
from treesplit.model import (
    SpanResult,
    build_measure,
    detect_span,
    make_qary_spec,
    moments,
)

F1_VS_SERIES_TOL = 1e-8
PERIOD_MEAN_TOL = 1e-6

# pinned reference values; dual independent routes agreed on these to far
# higher accuracy than the tolerances used here
LIMIT_FAIR_BINARY = 2.8853900817779268
LIMIT_UNEVEN_BINARY = 3.1421138752620266
LIMIT_MIXED_23 = 2.7905531327562363
F1_FAIR_BINARY_AT_0 = 2.8853926835210664
F2_FAIR_BINARY_AT_0 = 11.709020267316486


def _measure_span(spec):
    meas = build_measure(spec)
    return meas, float(meas.expected_branch), detect_span(meas)


# ---------------------------------------------------------------------------
# limit constants


def test_limit_constant_values(knuth_spec, asym_spec, g23_spec):
    for spec, want in (
        (knuth_spec, LIMIT_FAIR_BINARY),
        (asym_spec, LIMIT_UNEVEN_BINARY),
        (g23_spec, LIMIT_MIXED_23),
    ):
        meas = build_measure(spec)
        got = limit_constant(meas, float(meas.expected_branch), spec.threshold)
        assert got == pytest.approx(want, rel=1e-12)


def test_limit_constant_formula(knuth_spec, asym_spec):
    # with threshold 2 the constant reduces to E(G) / E(-log W)
    for spec in (knuth_spec, asym_spec):
        meas = build_measure(spec)
        e_g, neg_log, _, _ = moments(meas)
        got = limit_constant(meas, e_g, 2)
        assert got == pytest.approx(e_g / neg_log, rel=1e-12)


# ---------------------------------------------------------------------------
# oscillating profile for general arithmetic measures


def test_f_value_refuses_non_arithmetic(knuth_spec):
    meas = build_measure(knuth_spec)
    with pytest.raises(ValueError):
        f_value(meas, 2.0, 2, SpanResult(arithmetic=False), 0.0)


def test_f_profile_structure(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    prof = periodic_profile_F(meas, e_g, 2, span, 64)
    assert prof.kind == "F"
    assert prof.lam == pytest.approx(math.log(2), rel=1e-15)
    assert len(prof.grid) == len(prof.values) == 64
    assert prof.grid[0] == 0.0
    assert all(0.0 <= g < 1.0 for g in prof.grid)
    validate_profile(prof, limit=LIMIT_FAIR_BINARY)


def test_f_profile_matches_pointwise(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    prof = periodic_profile_F(meas, e_g, 2, span, 16)
    for g, v in zip(prof.grid, prof.values):
        assert v == f_value(meas, e_g, 2, span, g)


def test_f_profile_period_mean(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    prof = periodic_profile_F(meas, e_g, 2, span, 256)
    assert abs(prof.mean_value() - LIMIT_FAIR_BINARY) < PERIOD_MEAN_TOL


def test_f_profile_period_mean_ternary():
    spec = make_qary_spec(3, 3)
    meas, e_g, span = _measure_span(spec)
    prof = periodic_profile_F(meas, e_g, 3, span, 256)
    limit = limit_constant(meas, e_g, 3)
    assert abs(prof.mean_value() - limit) < PERIOD_MEAN_TOL
    validate_profile(prof, limit=limit)


def test_f_oscillation_amplitudes():
    # fair binary oscillates only in the sixth decimal; ternary with a
    # higher threshold is visibly wavy
    spec2 = make_qary_spec(2, 2)
    meas, e_g, span = _measure_span(spec2)
    prof = periodic_profile_F(meas, e_g, 2, span, 128)
    amp = max(prof.values) - min(prof.values)
    assert 1e-6 < amp < 1e-4

    spec3 = make_qary_spec(3, 3)
    meas3, e_g3, span3 = _measure_span(spec3)
    prof3 = periodic_profile_F(meas3, e_g3, 3, span3, 128)
    amp3 = max(prof3.values) - min(prof3.values)
    assert amp3 > 1e-3


def test_f_profile_lattice_measure():
    # atoms 1/4 and 1/16 share span log 4 with multipliers 2 and 1; the
    # kink quadrature must weight each atom by its lattice position
    from fractions import Fraction

    from treesplit.model import measure_from_atoms

    meas = measure_from_atoms([(Fraction(1, 4), Fraction(1, 2)), (Fraction(1, 16), Fraction(1, 2))])
    span = detect_span(meas)
    assert span.multipliers == (2, 1)
    prof = periodic_profile_F(meas, 2.0, 2, span, 64)
    limit = limit_constant(meas, 2.0, 2)
    validate_profile(prof, limit=limit)
    assert abs(prof.mean_value() - limit) < PERIOD_MEAN_TOL


def test_f_specializes_to_f1():
    # the general kink quadrature evaluated on a symmetric q-ary measure
    # must match the dedicated power-of-q route
    for q in (2, 3):
        for d in (2, 3):
            spec = make_qary_spec(q, d)
            meas, e_g, span = _measure_span(spec)
            for x in (0.0, 0.25, 0.7):
                general = f_value(meas, e_g, d, span, x)
                direct = f1_quadrature(q, d, x)
                assert general == pytest.approx(direct, rel=1e-12), (q, d, x)


# ---------------------------------------------------------------------------
# first-order profile, two routes


def test_f1_quadrature_vs_series_grid():
    for q in (2, 3):
        for d in (2, 3):
            for j in range(32):
                x = j / 32.0
                quad = f1_quadrature(q, d, x)
                series = f1_series(q, d, float(q) ** x)
                assert abs(quad - series) < F1_VS_SERIES_TOL, (q, d, x)


def test_f1_frozen_value():
    assert f1_quadrature(2, 2, 0.0) == pytest.approx(F1_FAIR_BINARY_AT_0, rel=1e-13)


def test_f1_series_scale_invariance():
    for q in (2, 3):
        for y in (0.3, 0.8, 1.0):
            a = f1_series(q, 2, y)
            b = f1_series(q, 2, q * y)
            assert a == pytest.approx(b, rel=1e-10)


def test_f1_domain_restricted_to_unit_interval():
    with pytest.raises(ValueError):
        f1_quadrature(2, 2, 1.0)
    with pytest.raises(ValueError):
        f1_quadrature(2, 2, -0.1)


def test_f_value_periodic_extension(knuth_spec):
    # the general evaluator wraps any real phase into the period
    meas, e_g, span = _measure_span(knuth_spec)
    for x in (0.1, 0.6):
        assert f_value(meas, e_g, 2, span, x) == pytest.approx(
            f_value(meas, e_g, 2, span, x + 1.0), rel=1e-12
        )
        assert f_value(meas, e_g, 2, span, x) == pytest.approx(
            f_value(meas, e_g, 2, span, x - 3.0), rel=1e-12
        )


# ---------------------------------------------------------------------------
# second-order (variance) profile


def test_f2_frozen_value():
    assert f2_quadrature(2, 2, 0.0) == pytest.approx(F2_FAIR_BINARY_AT_0, rel=1e-12)


def test_f2_nonnegative_grid():
    for q, d in ((2, 2), (3, 2), (2, 3)):
        prof = f2_profile(q, d, 16)
        assert prof.kind == "F2"
        assert min(prof.values) >= 0.0
        validate_profile(prof)


def test_f2_pointwise_kernel():
    # same cell twice contributes nothing; a positive level gap does
    assert f2_pointwise(2, 2, 0.3, 0.3, 1.7, 1.7) == 0.0
    assert f2_pointwise(2, 2, 0.0, 0.0, 0.1, 1.6) > 0.0
    assert f2_pointwise(2, 2, 0.0, 0.0, 1.6, 0.1) == 0.0


def test_f2_quadrature_unreachable_tolerance():
    with pytest.raises(ArithmeticError):
        f2_quadrature(2, 2, 0.0, tol=1e-16)


def test_f2_two_methods_agree():
    for y in (0.0, 0.5):
        quad = f2_quadrature(2, 2, y)
        mc, se = f2_montecarlo(2, 2, y, replicas=2_000_000, seed=7)
        assert abs(quad - mc) <= 3.0 * (se + 1e-9), (y, quad, mc, se)


def test_f2_montecarlo_deterministic():
    a = f2_montecarlo(2, 2, 0.0, replicas=100_000, seed=3)
    b = f2_montecarlo(2, 2, 0.0, replicas=100_000, seed=3)
    assert a == b


def test_var_phi_matches_f2_scaling():
    # q^2 Var(Phi(x)) / x reproduces the variance profile at the matching
    # phase; by x = 2^10 the truncated levels are below double precision
    for k in (8, 10):
        x = 2.0**k
        ratio = 4.0 * var_phi_series(2, 2, x) / x
        assert ratio == pytest.approx(F2_FAIR_BINARY_AT_0, rel=1e-12)
    x = 3.0**7
    ratio3 = 9.0 * var_phi_series(3, 2, x) / x
    assert ratio3 == pytest.approx(f2_quadrature(3, 2, 0.0), rel=1e-12)


# ---------------------------------------------------------------------------
# profile validation and serialization


def test_validate_profile_rejects_corruption(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    prof = periodic_profile_F(meas, e_g, 2, span, 64)
    bent = list(prof.values)
    bent[10] += 1e-3
    broken = PeriodicProfile(
        kind=prof.kind,
        lam=prof.lam,
        grid=prof.grid,
        values=tuple(bent),
        method=prof.method,
        tol=prof.tol,
    )
    with pytest.raises(ValueError):
        validate_profile(broken, limit=LIMIT_FAIR_BINARY)


def test_profile_type_invariants():
    with pytest.raises(ValueError):
        PeriodicProfile(
            kind="F",
            lam=math.log(2),
            grid=(0.0, 0.5),
            values=(1.0, -1.0),
            method="kink-quadrature",
            tol=1e-12,
        )
    with pytest.raises(ValueError):
        PeriodicProfile(
            kind="F",
            lam=math.log(2),
            grid=(0.5, 0.25),
            values=(1.0, 1.0),
            method="kink-quadrature",
            tol=1e-12,
        )


def test_profile_csv(tmp_path, knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    prof = periodic_profile_F(meas, e_g, 2, span, 8)
    path = tmp_path / "profile.csv"
    write_profile_csv(prof, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,value,method,tol"
    assert len(lines) == 9
    assert lines[1].startswith("0,2.88539268")


# ---------------------------------------------------------------------------
# convergence reporting


def test_convergence_report_fair_binary(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    table = expected_cost_table(knuth_spec, 64, mode="float64")
    rows = convergence_report(knuth_spec, meas, span, [4, 8, 16, 32, 64], table)
    assert [r.n for r in rows] == [4, 8, 16, 32, 64]
    # at powers of the span base the predicted value has constant phase
    for r in rows:
        assert r.predicted == pytest.approx(F1_FAIR_BINARY_AT_0, rel=1e-12)
    errors = [r.rel_error for r in rows]
    assert all(e2 < e1 for e1, e2 in zip(errors, errors[1:]))
    assert errors[-1] < 0.01


def test_convergence_report_callable_source(knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    table = expected_cost_table(knuth_spec, 16, mode="float64")
    rows = convergence_report(
        knuth_spec, meas, span, [8, 16], lambda n: table.values[n]
    )
    assert rows[0].ratio == pytest.approx(table.values[8] / 8.0, rel=1e-12)


def test_convergence_csv(tmp_path, knuth_spec):
    meas, e_g, span = _measure_span(knuth_spec)
    table = expected_cost_table(knuth_spec, 8, mode="float64")
    rows = convergence_report(knuth_spec, meas, span, [4, 8], table)
    path = tmp_path / "conv.csv"
    write_convergence_csv(rows, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,ratio,predicted,rel_error"
    assert len(lines) == 3
