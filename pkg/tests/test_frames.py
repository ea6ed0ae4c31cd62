import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from weakgrid.frames import DqVector, active_power, rotate

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
angles = st.floats(min_value=-4 * math.pi, max_value=4 * math.pi,
                   allow_nan=False)


def test_identity_rotation():
    assert rotate(DqVector(1.0, 0.0), 0.0) == DqVector(1.0, 0.0)


def test_quarter_turn():
    v = rotate(DqVector(1.0, 0.0), math.pi / 2)
    assert v.d == pytest.approx(0.0, abs=1e-15)
    assert v.q == pytest.approx(-1.0)


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        rotate(DqVector(math.nan, 0.0), 0.1)
    with pytest.raises(ValueError):
        rotate(DqVector(1.0, 0.0), math.inf)


@given(finite, finite, angles)
def test_rotation_is_isometry(d, q, theta):
    v = DqVector(d, q)
    w = rotate(v, theta)
    assert math.hypot(*w) == pytest.approx(math.hypot(*v), abs=1e-12)


@given(finite, finite, angles)
def test_rotation_inverse(d, q, theta):
    v = DqVector(d, q)
    w = rotate(rotate(v, theta), -theta)
    assert w.d == pytest.approx(d, abs=1e-12)
    assert w.q == pytest.approx(q, abs=1e-12)


@given(finite, finite, angles, angles)
def test_rotation_group_property(d, q, a, b):
    v = DqVector(d, q)
    lhs = rotate(rotate(v, b), a)
    rhs = rotate(v, a + b)
    assert lhs.d == pytest.approx(rhs.d, abs=1e-12)
    assert lhs.q == pytest.approx(rhs.q, abs=1e-12)


def test_power_aligned():
    assert active_power(DqVector(1, 0), DqVector(0.9, 0)) == pytest.approx(0.9)


def test_power_orthogonal():
    assert active_power(DqVector(1, 0), DqVector(0, 0.5)) == 0.0


def test_power_dot_product():
    assert active_power(DqVector(0.8, 0.6), DqVector(0.5, -0.2)) == pytest.approx(0.28)


@given(finite, finite, finite, finite, angles)
def test_power_frame_invariant(vd, vq, id_, iq, theta):
    v, i = DqVector(vd, vq), DqVector(id_, iq)
    p0 = active_power(v, i)
    p1 = active_power(rotate(v, theta), rotate(i, theta))
    assert p1 == pytest.approx(p0, abs=1e-12)
