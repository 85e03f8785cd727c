import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionsynth import quat
from util import euler_matrix


def test_mul_identity():
    rng = np.random.default_rng(0)
    q = quat.normalize(rng.normal(size=(10, 4)))
    assert np.allclose(quat.mul(q, quat.IDENTITY), q)
    assert np.allclose(quat.mul(quat.IDENTITY, q), q)


def test_rotate_matches_matrix():
    rng = np.random.default_rng(1)
    q = quat.normalize(rng.normal(size=(50, 4)))
    v = rng.normal(size=(50, 3))
    direct = quat.rotate(q, v)
    via_matrix = np.einsum("nij,nj->ni", quat.to_matrix(q), v)
    assert np.allclose(direct, via_matrix, atol=1e-12)


def test_expmap_round_trip():
    rng = np.random.default_rng(2)
    e = rng.normal(0, 0.8, size=(200, 3))
    back = quat.to_expmap(quat.from_expmap(e))
    assert np.allclose(back, e, atol=1e-10)


def test_expmap_small_angles():
    e = np.array([[0.0, 0.0, 0.0], [1e-9, 0.0, 0.0]])
    q = quat.from_expmap(e)
    assert np.allclose(q[0], quat.IDENTITY)
    assert np.allclose(quat.to_expmap(q), e, atol=1e-12)


def test_yaw_of_pure_yaw():
    angles = np.linspace(-3.0, 3.0, 13)
    assert np.allclose(quat.yaw_of(quat.yaw_quat(angles)), angles, atol=1e-12)


@pytest.mark.parametrize("order", ["ZYX", "ZXY"])
def test_euler_matches_axis_composition_oracle(order):
    rng = np.random.default_rng(3)
    for _ in range(50):
        angles = rng.uniform(-80, 80, size=3)
        q = quat.euler_deg_to_quat(angles, order)
        assert np.allclose(quat.to_matrix(q), euler_matrix(angles, order), atol=1e-9)


@pytest.mark.parametrize("order", ["ZYX", "ZXY"])
def test_euler_round_trip(order):
    rng = np.random.default_rng(4)
    angles = rng.uniform(-75, 75, size=(100, 3))
    q = quat.euler_deg_to_quat(angles, order)
    back = quat.quat_to_euler_deg(q, order)
    assert np.allclose(back, angles, atol=1e-9)


def test_euler_matches_scipy():
    scipy = pytest.importorskip("scipy.spatial.transform")
    rng = np.random.default_rng(5)
    for order in ("ZYX", "ZXY"):
        angles = rng.uniform(-80, 80, size=(20, 3))
        ours = quat.to_matrix(quat.euler_deg_to_quat(angles, order))
        theirs = scipy.Rotation.from_euler(order, angles, degrees=True).as_matrix()
        assert np.allclose(ours, theirs, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_align_hemisphere_preserves_rotation(seed):
    rng = np.random.default_rng(seed)
    track = quat.normalize(rng.normal(size=(12, 4)))
    aligned = quat.align_hemisphere(track)
    assert np.allclose(np.abs(np.sum(aligned * track, axis=-1)), 1.0, atol=1e-9)
    dots = np.sum(aligned[:-1] * aligned[1:], axis=-1)
    assert np.all(dots >= -1e-9)


def test_wrap_angle():
    assert quat.wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
    assert quat.wrap_angle(-np.pi - 0.1) == pytest.approx(np.pi - 0.1)
    assert quat.wrap_angle(0.3) == pytest.approx(0.3)
