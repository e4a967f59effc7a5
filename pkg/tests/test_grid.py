"""Grid geometry: coordinates, merge maps, batches, scatter identities."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridcoreset.grid import (
    MAX_AXIS_EXPONENT,
    MAX_TOTAL_EXPONENT,
    Resolution,
    as_resolution,
    batch_centroid,
    batch_error,
    batch_error_exact,
    batch_of,
    coords_array,
    flatten_index,
    huygens_cost,
    merge_index,
    merge_map,
    point_coords,
    scatter,
    unflatten_index,
    voxel_volume,
)

from exact_refs import (
    batch_members,
    exact_delta,
    exact_point,
    exact_points,
    exact_scatter,
    exact_volume,
)

# Small random resolutions keep brute-force references fast.
small_rho = st.lists(st.integers(0, 4), min_size=1, max_size=3).map(tuple)
coarser = st.tuples(small_rho, st.data())


def sub_resolution(draw, rho):
    return tuple(draw(st.integers(0, rt)) for rt in rho)


def test_voxel_volume_frozen():
    assert voxel_volume((1,)) == Fraction(1, 2)
    assert float(voxel_volume((3, 3))) == 0.015625
    assert float(voxel_volume((2, 3, 4))) == 0.001953125


def test_point_coords_frozen():
    assert point_coords((0,), (1,)) == (0.5,)
    assert point_coords((2,), (1,)) == (0.125,)
    assert point_coords((2,), (4,)) == (0.875,)


def test_merge_index_frozen():
    assert merge_index((3,), (1,), (5,)) == (2,)
    assert merge_index((3, 2), (1, 2), (4, 3)) == (1, 3)


def test_batch_of_frozen():
    assert set(batch_of((3,), (1,), (1,)).members) == {(1,), (2,), (3,), (4,)}
    assert set(batch_of((2, 2), (1, 1), (2, 2)).members) == {
        (3, 3), (3, 4), (4, 3), (4, 4)}


def test_batch_centroid_frozen():
    assert batch_centroid((3,), (1,), (1,)) == (0.25,)
    assert batch_centroid((2, 2), (1, 1), (2, 2)) == (0.75, 0.75)


def test_batch_error_frozen():
    assert batch_error((3,), (1,)) == 0.009765625
    assert batch_error((3, 3), (1, 1)) == 0.009765625
    assert batch_error((3,), (3,)) == 0.0


def test_scatter_frozen():
    pts = coords_array((1,))
    centroid, value = scatter(pts, [0.5, 0.5])
    assert centroid[0] == 0.5
    assert value == 0.0625


def test_huygens_frozen():
    pts = coords_array((1,))
    dec = huygens_cost(pts, [0.5, 0.5], [0.0])
    assert dec.cost == 0.3125
    assert dec.scatter == 0.0625
    assert dec.shift_term == 0.25

    batch = batch_of((3,), (1,), (1,))
    pts = np.array([point_coords((3,), j) for j in batch.members])
    w = [float(voxel_volume((3,)))] * 4
    dec = huygens_cost(pts, w, [0.5])
    assert dec.cost == 0.041015625
    assert dec.total_weight == 0.5


def test_resolution_validation():
    with pytest.raises(ValueError):
        as_resolution((-1,))
    with pytest.raises(ValueError):
        as_resolution((MAX_AXIS_EXPONENT + 1,))
    with pytest.raises(ValueError):
        as_resolution((MAX_AXIS_EXPONENT,) * 3)  # total exponent over cap
    with pytest.raises(ValueError):
        as_resolution(())
    assert sum(as_resolution((16, 16, 16)).exponents) <= MAX_TOTAL_EXPONENT


def test_index_validation():
    with pytest.raises(ValueError):
        point_coords((2,), (0,))
    with pytest.raises(ValueError):
        point_coords((2,), (5,))
    with pytest.raises(ValueError):
        merge_index((2,), (3,), (1,))  # tau exceeds rho
    with pytest.raises(ValueError):
        merge_index((2, 2), (1,), (1, 1))  # dimension mismatch


def test_resolution_ordering_and_str():
    assert as_resolution((1, 2)) <= as_resolution((2, 2))
    assert not (as_resolution((1, 3)) <= as_resolution((2, 2)))
    assert str(as_resolution((6, 6))) == "6x6"
    assert as_resolution((3,)).n == 8
    assert as_resolution((2, 3)).axis_points == (4, 8)


@given(small_rho)
@settings(max_examples=50, deadline=None)
def test_coords_match_exact_reference(rho):
    pts = coords_array(rho)
    ref = exact_points(rho)
    assert pts.shape == (as_resolution(rho).n, len(rho))
    for flat, exact in enumerate(ref):
        assert tuple(pts[flat]) == tuple(float(x) for x in exact)
        j = unflatten_index(rho, flat)
        assert point_coords(rho, j) == tuple(float(x) for x in exact)
        assert flatten_index(rho, j) == flat


@given(small_rho, st.data())
@settings(max_examples=50, deadline=None)
def test_merge_map_matches_interval_containment(rho, data):
    tau = tuple(data.draw(st.integers(0, rt), label="tau") for rt in rho)
    mm = merge_map(rho, tau)
    n_coarse = as_resolution(tau).n
    seen = np.zeros(as_resolution(rho).n, dtype=bool)
    for q_flat in range(n_coarse):
        q = unflatten_index(tau, q_flat)
        members = batch_members(rho, tau, q)
        assert members, "every coarse voxel contains fine points"
        for flat in members:
            assert mm[flat] == q_flat
            assert merge_index(rho, tau, unflatten_index(rho, flat)) == q
            seen[flat] = True
        batch = batch_of(rho, tau, q)
        assert sorted(flatten_index(rho, j) for j in batch.members) == members
    assert seen.all()


@given(st.lists(st.integers(0, 4), min_size=1, max_size=2).map(tuple), st.data())
@settings(max_examples=40, deadline=None)
def test_merge_composition(rho, data):
    tau = tuple(data.draw(st.integers(0, rt), label="tau") for rt in rho)
    gamma = tuple(data.draw(st.integers(0, tt), label="gamma") for tt in tau)
    for flat in range(as_resolution(rho).n):
        j = unflatten_index(rho, flat)
        via_tau = merge_index(tau, gamma, merge_index(rho, tau, j))
        assert via_tau == merge_index(rho, gamma, j)


@given(small_rho, st.data())
@settings(max_examples=30, deadline=None)
def test_batch_scatter_is_batch_error(rho, data):
    tau = tuple(data.draw(st.integers(0, rt), label="tau") for rt in rho)
    q = tuple(data.draw(st.integers(1, 2**tt), label="q") for tt in tau)
    batch = batch_of(rho, tau, q)
    pts = [exact_point(rho, j) for j in batch.members]
    wts = [exact_volume(rho)] * len(pts)
    centroid, value = exact_scatter(pts, wts)
    assert centroid == exact_point(tau, q)
    assert value == batch_error_exact(rho, tau)
    # The float form is exact: the denominator is a power of two.
    assert float(batch_error_exact(rho, tau)) == batch_error(rho, tau)


@given(small_rho, st.data())
@settings(max_examples=30, deadline=None)
def test_batch_errors_sum_to_delta(rho, data):
    tau = tuple(data.draw(st.integers(0, rt), label="tau") for rt in rho)
    n_coarse = as_resolution(tau).n
    assert n_coarse * batch_error_exact(rho, tau) == exact_delta(rho, tau)


dyadic_weight = st.integers(1, 64).map(lambda u: u / 64)


@given(
    st.integers(1, 2),
    st.data(),
)
@settings(max_examples=40, deadline=None)
def test_scatter_matches_exact_reference(d, data):
    m = data.draw(st.integers(1, 6), label="m")
    pts = [
        tuple(
            data.draw(st.integers(0, 256), label="coord") / 256 for _ in range(d)
        )
        for _ in range(m)
    ]
    wts = [data.draw(dyadic_weight, label="w") for _ in range(m)]
    centroid, value = scatter(np.array(pts), wts)
    exact_c, exact_v = exact_scatter(
        [tuple(Fraction(x) for x in p) for p in pts],
        [Fraction(w) for w in wts],
    )
    assert np.allclose(centroid, [float(c) for c in exact_c], atol=1e-12)
    assert abs(value - float(exact_v)) <= 1e-12 * (1 + abs(value))


@given(st.integers(1, 2), st.data())
@settings(max_examples=40, deadline=None)
def test_huygens_matches_direct_sum(d, data):
    m = data.draw(st.integers(1, 6), label="m")
    pts = np.array(
        [[data.draw(st.integers(0, 256)) / 256 for _ in range(d)] for _ in range(m)]
    )
    wts = [data.draw(dyadic_weight, label="w") for _ in range(m)]
    s = [data.draw(st.integers(-256, 512)) / 256 for _ in range(d)]
    dec = huygens_cost(pts, wts, s)
    direct = sum(w * float(np.sum((p - np.asarray(s)) ** 2)) for w, p in zip(wts, pts))
    assert abs(dec.cost - direct) <= 1e-12 * (1 + abs(direct))
    assert abs(dec.cost - (dec.scatter + dec.shift_term)) <= dec.residual + 1e-15
    assert dec.scatter >= 0 and dec.shift_term >= 0


def test_scatter_rejects_bad_input():
    with pytest.raises(ValueError):
        scatter(np.empty((0, 1)), [])
    with pytest.raises(ValueError):
        scatter(np.zeros((2, 1)), [1.0])
    with pytest.raises(ValueError):
        scatter(np.zeros((2, 1)), [0.0, 0.0])
