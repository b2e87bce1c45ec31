import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from filreg import gallery
from filreg.fields import (CuscoOracle, FieldSpecError, NullStratum, PiecewiseField, Stratum, UncoveredPointError,
                           check_usc, constant_oracle, dumps, dyadic_sequence, enlarge, essential_values, eval_field,
                           field_from_text, modify_on_null, selections_from_oracle, validate_field)
from filreg.geometry import ConvexBody, hausdorff, hull
from filreg.polynomial import Polynomial as P
from helpers import const, random_piecewise, surface_point


def as_set(rows):
    return sorted(map(tuple, np.asarray(rows).tolist()))


def two_half_planes():
    x1 = P.coordinate(2, 0)
    return PiecewiseField(2, 2, (Stratum((x1,), const(2, 1, 0)), Stratum((x1.scaled(-1),), const(2, 0, 1))),
                          (), 1.0, name="half-planes")


def test_eval_examples():
    f = gallery.sign1d(at_zero=7.0)
    assert eval_field(f, [2.0]).tolist() == [1.0]
    assert eval_field(f, [0.0]).tolist() == [7.0]
    assert eval_field(gallery.rational_scale(), [1 / 3]).tolist() == [1 / 3]
    assert eval_field(gallery.rational_scale(), [np.sqrt(2) / 3]).tolist() == [0.0]


def test_eval_errors():
    f = gallery.sign1d(at_zero=None)
    with pytest.raises(ValueError, match="finite"):
        eval_field(f, [np.nan])
    bare = PiecewiseField(1, 1, (Stratum((P.coordinate(1, 0),), const(1, 1.0)),), (), 1.0)
    with pytest.raises(UncoveredPointError, match="uncovered point"):
        eval_field(bare, [-1.0])


def test_latest_override_wins():
    f = modify_on_null(gallery.sign1d(at_zero=7.0), NullStratum.from_points([[0.0]]), [3.0])
    assert eval_field(f, [0.0]).tolist() == [3.0]


def test_essential_values_examples():
    f = gallery.sign1d(at_zero=7.0)
    assert as_set(essential_values(f, [0.0])) == [(-1.0,), (1.0,)]
    assert as_set(essential_values(f, [2.0])) == [(1.0,)]
    assert as_set(essential_values(two_half_planes(), [0.0, 5.0])) == [(0.0, 1.0), (1.0, 0.0)]


def test_modify_on_null_examples():
    zero = PiecewiseField(1, 1, (Stratum((), const(1, 0.0)),), (), 0.0)
    g = modify_on_null(zero, NullStratum.from_points([[0.0]]), [1.0])
    assert eval_field(g, [0.0]).tolist() == [1.0]
    assert eval_field(g, [0.3]).tolist() == [0.0]
    assert g.bound >= 1.0
    s = modify_on_null(gallery.sign1d(), NullStratum.from_points([[0.0]]), [0.0])
    assert eval_field(s, [0.0]).tolist() == [0.0]
    assert as_set(essential_values(s, [0.0])) == [(-1.0,), (1.0,)]


def test_modify_on_null_line_keeps_essential_values(rng):
    f = two_half_planes()
    g = modify_on_null(f, P.coordinate(2, 0), [9.0, 9.0])
    assert g.bound == pytest.approx(9.0 * np.sqrt(2))
    probes = rng.uniform(-1, 1, (50, 2))
    probes[:10, 0] = 0.0
    for x in probes:
        assert as_set(essential_values(g, x)) == as_set(essential_values(f, x))
    assert eval_field(g, [0.0, 0.4]).tolist() == [9.0, 9.0]


def test_modify_on_null_rejects_full_dimensional():
    f = gallery.sign1d()
    with pytest.raises(ValueError, match="not a null set"):
        modify_on_null(f, f.strata[0], [1.0])
    with pytest.raises(ValueError, match="not a null set"):
        modify_on_null(f, P.constant(1, 0.0), [1.0])
    with pytest.raises(ValueError):
        modify_on_null(f, NullStratum.from_points([[0.0]]), [1.0, 2.0])


@given(st.integers(0, 2 ** 32 - 1))
def test_null_invisibility(seed):
    rng = np.random.default_rng(seed)
    f = random_piecewise(rng)
    if rng.random() < 0.5:
        stratum = NullStratum.from_points(rng.uniform(-1, 1, (3, f.d)))
    else:
        stratum = f.strata[0].guards[0]
    g = modify_on_null(f, stratum, rng.uniform(-5, 5, f.l))
    probes = np.vstack([rng.uniform(-1, 1, (10, f.d)), surface_point(f, rng)])
    for x in probes:
        assert as_set(essential_values(g, x)) == as_set(essential_values(f, x))


@given(st.integers(0, 2 ** 32 - 1))
def test_eval_is_bitwise_deterministic(seed):
    rng = np.random.default_rng(seed)
    f = random_piecewise(rng)
    x = rng.uniform(-1, 1, f.d)
    assert eval_field(f, x).tobytes() == eval_field(f, x.copy()).tobytes()


def test_validate_field():
    rep = validate_field(two_half_planes(), ([-1, -1], [1, 1]), n=20_000)
    assert rep["ok"] and rep["disjoint"] and rep["coverage"] == 1.0
    overlap = PiecewiseField(1, 1, (Stratum((), const(1, 0.0)), Stratum((P.coordinate(1, 0),), const(1, 1.0))),
                             (), 1.0)
    assert not validate_field(overlap, ([-1], [1]), n=1000)["disjoint"]
    too_big = PiecewiseField(1, 1, (Stratum((), const(1, 5.0)),), (), 1.0)
    assert not validate_field(too_big, ([-1], [1]), n=1000)["ok"]


def test_dyadic_sequence_prefix():
    seq = dyadic_sequence(5, 1, 1.0)
    assert seq[:, 0].tolist() == [-1.0, 1.0, 0.0, -0.5, 0.5]
    assert len(np.unique(dyadic_sequence(200, 2, 3.0), axis=0)) == 200


def test_selections_examples():
    zero = selections_from_oracle(constant_oracle(ConvexBody.point([0.0])), 16)
    assert np.all(zero.values_at([0.3]) == 0.0)
    seg = selections_from_oracle(constant_oracle(ConvexBody.segment(-1, 1)), 64)
    assert hausdorff(hull(seg.values_at([0.0])), ConvexBody.segment(-1, 1)) <= 0.05
    with pytest.raises(ValueError):
        selections_from_oracle(constant_oracle(ConvexBody.point([0.0])), 0)


def test_selection_property_for_moving_segment(rng):
    phi = CuscoOracle(1, 1, lambda x: ConvexBody.segment(0.0, abs(x[0])), 3.0, name="abs-segment")
    fam = selections_from_oracle(phi, 32)
    assert 0.0 <= fam.select(1, [[1.0]])[0, 0] <= 1.0
    for x in rng.uniform(-3, 3, 20):
        vals = fam.values_at([x])
        assert np.max(phi([x]).dist_many(vals)) <= 1e-9
        # density at the configured size
        assert hausdorff(hull(vals), phi([x])) <= 2 * 3.0 / 16


def test_check_usc_and_enlarge():
    phi = enlarge(constant_oracle(ConvexBody.point([0.0])), [0.0], ConvexBody.segment(0, 1))
    assert phi([0.0]) == ConvexBody.segment(0, 1)
    assert phi([0.1]) == ConvexBody.point([0.0])
    assert phi.is_exceptional([[0.0], [0.5]]).tolist() == [True, False]
    assert check_usc(phi, [0.0], 0.01) == 0.1
    assert check_usc(gallery.phi1(), [0.5], 0.01) is not None


def test_field_spec_roundtrip_and_offsets():
    f = two_half_planes()
    text = dumps(f.to_json())
    g = field_from_text(text)
    assert dumps(g.to_json()) == text
    bad = '{"d": 1, "l": 1, "strata": [{"guards": [], "value": [[{"exponents": [0, 1], "coef": 1}]]}]}'
    with pytest.raises(FieldSpecError) as info:
        field_from_text(bad)
    assert info.value.offset == len(bad[:bad.index("[0, 1]")].encode())
    assert "byte offset" in str(info.value)
    with pytest.raises(FieldSpecError) as info:
        field_from_text('{"d": 1,')
    assert info.value.offset == 8
    with pytest.raises(FieldSpecError, match="not a null set"):
        field_from_text(json.dumps({"d": 1, "l": 1, "strata": [{"guards": [], "value": [[]]}],
                                    "null_overrides": [{"zero_of": [], "value": [[]]}]}))
