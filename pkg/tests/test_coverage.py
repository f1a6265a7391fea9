"""Corridor and coverage-deviation tests.

The constant-offset expected value is analytic: a sample curve sitting a
constant c above the upper border integrates to exactly c after interval
normalization, whatever the grid.
"""

import random

import pytest

from idmkit.bounds import EtaBounds, EtaParams, eta_plus, make_bounds
from idmkit.coverage import (
    Corridor,
    compare_corners,
    coverage_deviation,
    read_corner_csv,
    write_corner_csv,
)
from idmkit.delay import ExpTerm, ParametricDelay, derive_pair
from idmkit.errors import InvalidArgument
from idmkit.fitting import DelaySampleSet

EXP = ParametricDelay(asymptote=2000.0, terms=(ExpTerm(1500.0, 1e-3),))


@pytest.fixture(scope="module")
def pair():
    return derive_pair(EXP)


@pytest.fixture(scope="module")
def bounds(pair):
    return make_bounds(pair, EtaParams(eta_plus_min=20.0, eta_minus_min=15.0,
                                       eta_plus_inf=300.0, eta_minus_inf=250.0,
                                       rho_plus=0.2, rho_minus=0.2))


def grid():
    return [-150.0 + 10.0 * i for i in range(20)] + \
           [60.0 * 1.2 ** i for i in range(25)]


def test_deviation_zero_on_center(pair, bounds):
    corr = Corridor(pair.up, bounds)
    samples = [(T, pair.up.eval(T)) for T in grid()]
    assert coverage_deviation(samples, corr) == 0.0


def test_deviation_zero_inside(pair, bounds):
    corr = Corridor(pair.up, bounds)
    samples = [(T, pair.up.eval(T) + 0.5 * eta_plus(bounds, T)) for T in grid()]
    assert coverage_deviation(samples, corr) == 0.0


def test_deviation_constant_offset_analytic(pair, bounds):
    corr = Corridor(pair.up, bounds)
    for c in (1.0, 17.5, 400.0):
        samples = [(T, corr.upper(T) + c) for T in grid()]
        assert coverage_deviation(samples, corr) == pytest.approx(c, rel=1e-9)
        below = [(T, corr.lower(T) - c) for T in grid()]
        assert coverage_deviation(below, corr) == pytest.approx(c, rel=1e-9)


def test_deviation_needs_two_samples(pair, bounds):
    corr = Corridor(pair.up, bounds)
    with pytest.raises(InvalidArgument):
        coverage_deviation([(0.0, 1.0)], corr)
    with pytest.raises(InvalidArgument):
        coverage_deviation([(1.0, 1.0), (1.0, 2.0)], corr)  # equal T


def test_widening_never_increases(pair, bounds):
    rng = random.Random(4)
    ts = grid()
    for _ in range(100):
        base = EtaParams(
            eta_plus_min=rng.uniform(1.0, 30.0),
            eta_minus_min=rng.uniform(1.0, 30.0),
            eta_plus_inf=rng.uniform(40.0, 400.0),
            eta_minus_inf=rng.uniform(40.0, 400.0),
            rho_plus=rng.uniform(0.0, 0.5),
            rho_minus=rng.uniform(0.0, 0.5))
        try:
            b1 = make_bounds(pair, base)
        except Exception:
            continue
        wide = EtaParams(
            eta_plus_min=base.eta_plus_min * rng.uniform(1.0, 2.0),
            eta_minus_min=base.eta_minus_min * rng.uniform(1.0, 2.0),
            eta_plus_inf=base.eta_plus_inf * rng.uniform(1.0, 2.0),
            eta_minus_inf=base.eta_minus_inf * rng.uniform(1.0, 2.0),
            rho_plus=base.rho_plus, rho_minus=base.rho_minus)
        try:
            b2 = make_bounds(pair, wide)
        except Exception:
            continue
        samples = [(T, pair.up.eval(T) + rng.uniform(-80.0, 80.0)) for T in ts]
        d1 = coverage_deviation(samples, Corridor(pair.up, b1))
        d2 = coverage_deviation(samples, Corridor(pair.up, b2))
        # wider eta_min also moves delta/delta_prime, so compare only when
        # the envelope is pointwise wider
        if all(b2.eta_plus_min <= eta_plus(b2, T) and
               eta_plus(b1, T) <= eta_plus(b2, T) for T in ts):
            assert d2 <= d1 + 1e-12


def test_uniform_shift_is_lipschitz(pair, bounds):
    corr = Corridor(pair.up, bounds)
    rng = random.Random(9)
    ts = grid()
    base = [(T, pair.up.eval(T) + rng.uniform(-50.0, 50.0)) for T in ts]
    d0 = coverage_deviation(base, corr)
    for u in (-30.0, -1.0, 0.5, 12.0):
        shifted = [(T, d + u) for T, d in base]
        d1 = coverage_deviation(shifted, corr)
        assert abs(d1 - d0) <= abs(u) + 1e-12


def _corner_from(pair, perturb, label):
    ts = grid()
    return DelaySampleSet(
        rising=[(T, pair.up.eval(T) + perturb(T)) for T in ts],
        falling=[(T, pair.down.eval(T) + perturb(T)) for T in ts],
        source_label=label)


def test_compare_corners_ordering(pair, bounds):
    old = EtaBounds.constant(bounds.eta_plus_min, bounds.eta_minus_min)
    corners = [
        _corner_from(pair, lambda T: 0.0, "baseline"),
        # exceeds eta_min but stays below eta_inf over nearly all T
        _corner_from(pair, lambda T: 100.0, "shifted"),
    ]
    report = compare_corners(pair, corners, old, bounds)
    rows = {(r.corner, r.edge): r for r in report.rows}
    for edge in "RF":
        assert rows[("baseline", edge)].deviation_old == 0.0
        assert rows[("baseline", edge)].deviation_new == 0.0
        assert rows[("shifted", edge)].deviation_new < \
            rows[("shifted", edge)].deviation_old
    agg_old, agg_new = report.aggregate()
    assert agg_new < agg_old


def test_corner_inside_new_corridor_scores_zero(pair, bounds):
    old = EtaBounds.constant(bounds.eta_plus_min, bounds.eta_minus_min)
    # positive-T samples only: the new corridor is eta_inf wide there
    ts = [60.0 * 1.2 ** i for i in range(25)]
    corner = DelaySampleSet(
        rising=[(T, pair.up.eval(T) + 0.9 * bounds.eta_plus_inf) for T in ts],
        falling=[(T, pair.down.eval(T) + 0.9 * bounds.eta_plus_inf) for T in ts],
        source_label="+10%vdd")
    report = compare_corners(pair, [corner], old, bounds)
    for r in report.rows:
        assert r.deviation_new == 0.0
        assert r.deviation_old > 0.0


def test_corner_csv_round_trip(tmp_path, pair, bounds):
    old = EtaBounds.constant(bounds.eta_plus_min, bounds.eta_minus_min)
    corners = [_corner_from(pair, lambda T: 40.0, "85C")]
    report = compare_corners(pair, corners, old, bounds)
    p = tmp_path / "corners.csv"
    write_corner_csv(p, report)
    rows = read_corner_csv(p)
    assert rows[0]["corner"] == "85C"
    assert float(rows[0]["deviation_old_fs"]) == pytest.approx(
        report.rows[0].deviation_old)
    assert rows[-1]["corner"] == "aggregate"
