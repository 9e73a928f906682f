from __future__ import annotations

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from busevac.equity import (ZoneDemandSnapshot, community_zones, inequity_penalty, point_biserial,
                            zone_snapshot)
from busevac.errors import ContractViolation

from oracles import pearson


@pytest.mark.parametrize("demands, flags, expected", [
    ([10, 30], [1, 0], -1.0),
    ([5, 5], [1, 0], 0.0),
    ([4, 8, 6, 2], [1, 1, 0, 0], 1 / np.sqrt(5)),
])
def test_examples(demands, flags, expected):
    assert point_biserial(ZoneDemandSnapshot.of(demands, flags)) == pytest.approx(expected, abs=1e-12)


def test_penalty_examples():
    snap = ZoneDemandSnapshot.of([10, 30], [1, 0])
    assert inequity_penalty(snap, 40) == pytest.approx(40)
    assert inequity_penalty(snap, 0) == 0
    assert inequity_penalty(ZoneDemandSnapshot.of([3, 9, 1], [0, 0, 0]), 100) == 0
    with pytest.raises(ContractViolation):
        inequity_penalty(snap, -1)


def test_empty_snapshot_rejected():
    with pytest.raises(ContractViolation):
        point_biserial(ZoneDemandSnapshot.of([], []))


def test_six_node_snapshot(net):
    assert community_zones(net) == ["z1", "z2"]
    snap = zone_snapshot(net, {"o1": 10, "o2": 30})
    assert point_biserial(snap) == pytest.approx(-1.0)


snapshots = st.integers(2, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 500), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=300)
@given(snapshots)
def test_matches_pearson_and_is_bounded(data):
    demands, flags = data
    r = point_biserial(ZoneDemandSnapshot.of(demands, flags))
    assert abs(r) <= 1
    assert r == pytest.approx(pearson(demands, flags), abs=1e-9)


@settings(max_examples=200)
@given(snapshots)
def test_flipping_flags_negates(data):
    demands, flags = data
    a = point_biserial(ZoneDemandSnapshot.of(demands, flags))
    b = point_biserial(ZoneDemandSnapshot.of(demands, [1 - f for f in flags]))
    assert a == pytest.approx(-b, abs=1e-12)


@settings(max_examples=200)
@given(snapshots, st.floats(0.1, 50), st.floats(0, 100))
def test_affine_invariance(data, a, b):
    demands, flags = data
    r1 = point_biserial(ZoneDemandSnapshot.of(demands, flags))
    r2 = point_biserial(ZoneDemandSnapshot.of([a * x + b for x in demands], flags))
    if np.std(demands) > 0:
        assert abs(r1) == pytest.approx(abs(r2), abs=1e-9)
