import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomed import SpaceSpec, as_point, combine, inner, norm


def test_inner_orthogonal_unit_weights():
    sp = SpaceSpec(2)
    assert inner([1.0, 0.0], [0.0, 1.0], sp) == 0.0


def test_inner_weighted_direct_arithmetic():
    sp = SpaceSpec(2, (2.0, 1.0))
    assert inner([1.0, 2.0], [1.0, 2.0], sp) == pytest.approx(6.0, rel=1e-15)


def test_inner_three_four_five():
    sp = SpaceSpec(2)
    assert inner([3.0, 4.0], [3.0, 4.0], sp) == pytest.approx(25.0, rel=1e-15)


def test_norm_examples():
    assert norm([3.0, 4.0], SpaceSpec(2)) == pytest.approx(5.0, rel=1e-15)
    assert norm([0.0, 0.0, 0.0], SpaceSpec(3)) == 0.0
    sp = SpaceSpec(4, (0.25, 0.25, 0.25, 0.25))
    assert norm([1.0, 1.0, 1.0, 1.0], sp) == pytest.approx(1.0, rel=1e-15)


def test_combine_examples():
    np.testing.assert_allclose(combine([0.0, 0.0], 0.5, [2.0, 4.0]), [1.0, 2.0])
    a = np.array([1.5, -2.5])
    np.testing.assert_array_equal(combine(a, 0.0, [9.0, 9.0]), a)
    np.testing.assert_array_equal(combine([1.0, 1.0], -1.0, [1.0, 1.0]), [0.0, 0.0])


def test_dimension_mismatch_rejected():
    sp = SpaceSpec(2)
    with pytest.raises(ValueError):
        inner([1.0], [1.0, 2.0], sp)
    with pytest.raises(ValueError):
        norm([1.0, 2.0, 3.0], sp)
    with pytest.raises(ValueError):
        combine([1.0], 1.0, [1.0, 2.0])


def test_nonfinite_rejected():
    sp = SpaceSpec(2)
    with pytest.raises(ValueError):
        as_point([np.nan, 0.0], sp)
    with pytest.raises(ValueError):
        combine([1.0, 2.0], np.inf, [1.0, 2.0])


def test_space_spec_validation():
    with pytest.raises(ValueError):
        SpaceSpec(0)
    with pytest.raises(ValueError):
        SpaceSpec(2, (1.0, 0.0))
    with pytest.raises(ValueError):
        SpaceSpec(2, (1.0,))


_vectors = st.integers(min_value=1, max_value=6).flatmap(
    lambda d: st.tuples(
        st.lists(st.floats(-1e6, 1e6), min_size=d, max_size=d),
        st.lists(st.floats(-1e6, 1e6), min_size=d, max_size=d),
        st.lists(st.floats(0.01, 100.0), min_size=d, max_size=d),
    )
)


@given(_vectors)
@settings(max_examples=200)
def test_cauchy_schwarz(data):
    a, b, w = data
    sp = SpaceSpec(len(a), tuple(w))
    lhs = abs(inner(a, b, sp))
    rhs = norm(a, sp) * norm(b, sp)
    assert lhs <= rhs * (1 + 1e-10) + 1e-12


@given(_vectors, st.floats(-100.0, 100.0))
@settings(max_examples=200)
def test_triangle_inequality(data, s):
    a, b, w = data
    sp = SpaceSpec(len(a), tuple(w))
    lhs = norm(combine(a, s, b), sp)
    rhs = norm(a, sp) + abs(s) * norm(b, sp)
    assert lhs <= rhs * (1 + 1e-10) + 1e-12


@given(_vectors)
@settings(max_examples=200)
def test_unit_weights_match_euclidean(data):
    a, b, _ = data
    sp = SpaceSpec(len(a))
    av, bv = np.asarray(a), np.asarray(b)
    expected = float(np.dot(av, bv))
    got = inner(a, b, sp)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)
    assert norm(a, sp) == pytest.approx(float(np.linalg.norm(av)), rel=1e-12, abs=0.0)
