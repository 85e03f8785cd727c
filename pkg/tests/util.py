"""Shared test helpers: finite-difference gradient checks, independent
rotation oracles, and random clip builders."""

import numpy as np

from motionsynth import quat
from motionsynth import tensor as tz
from motionsynth.bvh import RawClip
from motionsynth.skeleton import canonical_skeleton


def fd_gradients(value_fn, arrays, eps=1e-5):
    """Central finite differences of a scalar function w.r.t. in-place
    perturbed numpy arrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = a[idx]
            a[idx] = saved + eps
            fp = value_fn()
            a[idx] = saved - eps
            fm = value_fn()
            a[idx] = saved
            g[idx] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    for a, n in zip(analytic, numeric):
        assert a is not None, "missing analytic gradient"
        err = np.abs(a - n)
        bound = atol + rtol * np.abs(n)
        worst = (err - bound).max()
        assert np.all(err <= bound), f"gradient mismatch, worst excess {worst:.3e}"


def check_gradients(build_loss, params, eps=1e-5, rtol=1e-4, atol=1e-6):
    """build_loss() must rebuild the graph from `params` deterministically."""
    for p in params:
        p.grad = None
    loss = build_loss()
    tz.backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = fd_gradients(lambda: build_loss().item(), [p.data for p in params], eps)
    assert_grads_close(analytic, numeric, rtol, atol)


# -- independent rotation oracles -------------------------------------------

def axis_matrix(axis, deg):
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    if axis == "X":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "Y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def euler_matrix(angles_deg, order):
    m = np.eye(3)
    for axis, ang in zip(order, angles_deg):
        m = m @ axis_matrix(axis, ang)
    return m


def fk_matrix_oracle(skel, rotations, root_position):
    """Homogeneous 4x4 matrix-chain forward kinematics."""
    J = skel.num_joints
    out = np.zeros((J, 3))
    mats = [None] * J
    for j in range(J):
        local = np.eye(4)
        local[:3, :3] = quat.to_matrix(rotations[j])
        if j == 0:
            local[:3, 3] = root_position
            mats[j] = local
        else:
            offset = np.eye(4)
            offset[:3, 3] = skel.offsets[j]
            mats[j] = mats[skel.parent_index[j]] @ offset @ local
        out[j] = mats[j][:3, 3]
    return out


# -- clip builders -----------------------------------------------------------

def small_random_rotations(rng, shape, scale=0.3):
    e = rng.normal(0.0, scale, size=shape + (3,))
    return quat.from_expmap(e)


def random_clip(T=20, seed=0, rot_scale=0.25, speed=2.0):
    """Smooth random clip on the canonical skeleton."""
    rng = np.random.default_rng(seed)
    skel = canonical_skeleton()
    J = skel.num_joints
    base = rng.normal(0.0, rot_scale, size=(J, 3))
    drift = rng.normal(0.0, rot_scale / 8, size=(T, J, 3)).cumsum(axis=0)
    rotations = quat.from_expmap(base + drift)
    yaw = np.cumsum(rng.normal(0.0, 0.02, size=T))
    rotations[:, 0] = quat.mul(quat.yaw_quat(yaw), rotations[:, 0])
    root = np.zeros((T, 3))
    root[:, 1] = 93.0 + rng.normal(0, 0.5, size=T).cumsum() * 0.1
    steps = rng.normal(0.0, speed, size=(T, 2)).cumsum(axis=0)
    root[:, 0] = steps[:, 0]
    root[:, 2] = steps[:, 1]
    return RawClip(
        skeleton=skel,
        rotations=rotations,
        root_positions=root,
        frame_time=1.0 / 60.0,
    ).validate(tol=1e-9)


def straight_walk_clip(T=40, speed=2.0, height=93.0):
    """Identity-pose clip translating along +Z while facing +Z."""
    skel = canonical_skeleton()
    rotations = np.tile(quat.IDENTITY, (T, skel.num_joints, 1))
    root = np.zeros((T, 3))
    root[:, 1] = height
    root[:, 2] = speed * np.arange(T)
    return RawClip(skeleton=skel, rotations=rotations, root_positions=root, frame_time=1 / 60)
