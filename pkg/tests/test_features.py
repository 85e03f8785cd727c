import numpy as np
import pytest

from motionsynth import quat
from motionsynth.bvh import mirror
from motionsynth.features import (
    CONTROL_OFFSETS,
    LAYOUT,
    ControlRecord,
    NormStats,
    PartitionScheme,
    apply_frame,
    clip_features,
    control_vector,
    detect_contacts,
    extract_controls,
    frame_features,
    pose_from_clip,
    tpose_positions,
)
from motionsynth.skeleton import canonical_skeleton, forward_kinematics
from util import random_clip, straight_walk_clip


@pytest.fixture(scope="module")
def skel():
    return canonical_skeleton()


def test_stationary_tpose_root_block():
    clip = straight_walk_clip(T=6, speed=0.0)
    vec = frame_features(clip, 1)
    assert np.allclose(vec[LAYOUT.root], [0, 0, 0, 93.0, 0, 0], atol=1e-12)
    assert np.allclose(vec[LAYOUT.angular_velocities], 0.0)
    assert np.allclose(vec[LAYOUT.linear_velocities], 0.0)


def test_forward_translation_velocity():
    clip = straight_walk_clip(T=6, speed=10.0)
    vec = frame_features(clip, 2)
    root = vec[LAYOUT.root]
    assert root[1] == pytest.approx(0.0, abs=1e-12)   # X velocity
    assert root[2] == pytest.approx(10.0, abs=1e-12)  # Z velocity
    assert root[0] == pytest.approx(0.0, abs=1e-12)   # yaw velocity


def test_turning_clip_yaw_velocity_matches_finite_difference():
    T = 61
    clip = straight_walk_clip(T=T, speed=0.0)
    yaw = np.linspace(0.0, np.pi / 2, T)
    clip.rotations[:, 0] = quat.yaw_quat(yaw)
    feats = clip_features(clip)
    # independent oracle: finite difference of the facing angle
    forward = quat.rotate(clip.rotations[:, 0], np.array([0.0, 0.0, 1.0]))
    angles = np.arctan2(forward[:, 0], forward[:, 2])
    fd = np.diff(angles)
    assert np.allclose(feats[:, 0], fd, atol=1e-9)
    assert feats[5, 0] == pytest.approx((np.pi / 2) / (T - 1), rel=1e-6)


def test_apply_frame_round_trip_on_random_clip():
    clip = random_clip(T=30, seed=7)
    feats = clip_features(clip)
    pose = pose_from_clip(clip, 0)
    for n in range(1, clip.num_frames):
        pose = apply_frame(pose, feats[n - 1])
        assert np.allclose(pose.root_position[[0, 2]], clip.root_positions[n][[0, 2]], atol=1e-8)
        assert pose.root_position[1] == pytest.approx(clip.root_positions[n][1])
        # non-root joint rotations reproduced exactly (up to sign)
        dots = np.abs(np.sum(pose.rotations[1:] * clip.rotations[n, 1:], axis=-1))
        assert np.all(dots > 1.0 - 1e-8)


def test_apply_frame_zero_velocity_keeps_pose():
    clip = straight_walk_clip(T=4, speed=0.0)
    vec = frame_features(clip, 1)
    pose = pose_from_clip(clip, 0)
    nxt = apply_frame(pose, vec)
    assert np.allclose(nxt.root_position, pose.root_position)
    assert nxt.yaw == pytest.approx(pose.yaw)


def test_apply_frame_quarter_turn():
    clip = straight_walk_clip(T=4, speed=0.0)
    vec = frame_features(clip, 1).copy()
    vec[0] = np.pi / 2
    pose = apply_frame(pose_from_clip(clip, 0), vec)
    assert pose.yaw == pytest.approx(np.pi / 2)
    fwd = quat.rotate(pose.rotations[0], [0.0, 0.0, 1.0])
    assert np.allclose(fwd, [1.0, 0.0, 0.0], atol=1e-12)


def test_playback_drift_under_tenth_millimeter_per_100_frames():
    clip = random_clip(T=101, seed=11)
    feats = clip_features(clip)
    pose = pose_from_clip(clip, 0)
    for n in range(1, clip.num_frames):
        pose = apply_frame(pose, feats[n - 1])
    drift = np.linalg.norm(pose.root_position[[0, 2]] - clip.root_positions[-1][[0, 2]])
    assert drift < 0.1


def test_frame_zero_rejected():
    clip = random_clip(T=5, seed=1)
    with pytest.raises(ValueError, match="frame 0"):
        frame_features(clip, 0)


def test_contacts_low_still_foot(skel):
    clip = straight_walk_clip(T=6, speed=0.0)
    labels = detect_contacts(clip)
    assert labels.shape == (6, 4)
    assert np.all(labels == 1.0)  # feet at 7cm/0cm, not moving


def test_contacts_high_or_fast_foot(skel):
    clip = straight_walk_clip(T=6, speed=0.0)
    clip.root_positions[:, 1] += 50.0
    assert np.all(detect_contacts(clip) == 0.0)
    moving = straight_walk_clip(T=6, speed=5.0)
    assert np.all(detect_contacts(moving) == 0.0)


def test_controls_stationary():
    clip = straight_walk_clip(T=80, speed=0.0)
    rec = extract_controls(clip, np.zeros(80, dtype=int), 5, num_types=3)
    rec.validate()
    assert np.allclose(rec.future_positions, 0.0, atol=1e-9)
    assert np.allclose(rec.future_directions, [0.0, 1.0], atol=1e-9)
    assert np.allclose(rec.type_weights[:, 0], 1.0)


def test_controls_straight_line():
    clip = straight_walk_clip(T=80, speed=10.0)
    rec = extract_controls(clip, np.zeros(80, dtype=int), 4, num_types=1)
    expected = np.array([[0.0, 100.0], [0.0, 200.0], [0.0, 300.0],
                         [0.0, 400.0], [0.0, 500.0], [0.0, 600.0]])
    assert np.allclose(rec.future_positions, expected, atol=1e-9)


def test_controls_edge_padding():
    clip = straight_walk_clip(T=30, speed=10.0)
    rec = extract_controls(clip, np.zeros(30, dtype=int), 25, num_types=1)
    # every future sample clamps to the final frame
    assert np.allclose(rec.future_positions, rec.future_positions[0])


def test_controls_turning_directions_match_fk_oracle():
    T = 100
    clip = straight_walk_clip(T=T, speed=0.0)
    yaw = np.linspace(0, 1.5, T)
    clip.rotations[:, 0] = quat.yaw_quat(yaw)
    n = 10
    rec = extract_controls(clip, np.zeros(T, dtype=int), n, num_types=1)
    for row, off in zip(rec.future_directions, CONTROL_OFFSETS):
        world = quat.rotate(clip.rotations[n + off, 0], [0.0, 0.0, 1.0])
        local = quat.rotate(quat.yaw_quat(-yaw[n]), world)
        oracle = np.array([local[0], local[2]])
        oracle /= np.linalg.norm(oracle)
        assert np.allclose(row, oracle, atol=1e-3)


def _fit_stats(clip, num_types=2):
    feats = clip_features(clip)
    type_ids = np.zeros(clip.num_frames, dtype=int)
    controls = [extract_controls(clip, type_ids, n, num_types) for n in range(1, clip.num_frames)]
    return feats, controls, NormStats.fit(feats, controls, clip.skeleton.joint_names)


def test_normalize_round_trip_and_special_points():
    clip = random_clip(T=40, seed=13)
    feats, controls, stats = _fit_stats(clip)
    z = stats.normalize_features(feats)
    assert np.allclose(stats.denormalize_features(z), feats, atol=1e-6)
    assert np.allclose(stats.normalize_features(stats.feature_mean), 0.0, atol=1e-9)
    ones = stats.normalize_features(stats.feature_mean + stats.feature_std)
    assert np.allclose(ones, 1.0, atol=1e-9)


def test_normalize_passes_type_weights_through():
    clip = random_clip(T=40, seed=14)
    _, controls, stats = _fit_stats(clip, num_types=3)
    rec = controls[5]
    vec = stats.normalize_control(rec)
    k = rec.type_weights.size
    start = rec.skeleton_pose.size
    assert np.array_equal(vec[start:start + k], rec.type_weights.reshape(-1))


def test_split_part_sizes_and_root_block_equality(skel):
    scheme = PartitionScheme(skel)
    assert scheme.upper_size == 162
    assert scheme.lower_size == 118
    clip = random_clip(T=10, seed=15)
    feats = clip_features(clip)
    labels = detect_contacts(clip)[1:]
    upper, lower = scheme.split(feats, labels)
    assert upper.shape[-1] == 162 and lower.shape[-1] == 118
    assert np.array_equal(upper[..., :6], lower[..., :6])
    assert np.array_equal(upper[..., :6], feats[..., :6])
    assert np.array_equal(lower[..., -4:], labels)


def test_split_reassemble_exact(skel):
    scheme = PartitionScheme(skel)
    clip = random_clip(T=12, seed=16)
    feats = clip_features(clip)
    labels = detect_contacts(clip)[1:]
    upper, lower = scheme.split(feats, labels)
    back, back_labels = scheme.reassemble(upper, lower)
    assert np.array_equal(back, feats)
    assert np.array_equal(back_labels, labels)


def test_malformed_scheme_rejected(skel):
    with pytest.raises(ValueError, match="cover"):
        PartitionScheme(skel, upper_names=("Spine",), lower_names=("LeftUpLeg",))


def test_mirrored_features_swap_sides_and_negate_x(skel):
    clip = random_clip(T=20, seed=17)
    feats = clip_features(clip)
    mfeats = clip_features(mirror(clip))
    root, mroot = feats[:, :6], mfeats[:, :6]
    assert np.allclose(mroot[:, 0], -root[:, 0], atol=1e-8)   # yaw velocity
    assert np.allclose(mroot[:, 1], -root[:, 1], atol=1e-8)   # X velocity
    assert np.allclose(mroot[:, 2], root[:, 2], atol=1e-8)    # Z velocity
    assert np.allclose(mroot[:, 3], root[:, 3], atol=1e-8)    # height
    assert np.allclose(mroot[:, 5], -root[:, 5], atol=1e-8)   # tilt Z flips
    sign = np.array([1.0, -1.0, -1.0])
    pair = dict(skel.left_right_pairs)
    swap = {**pair, **{v: k for k, v in pair.items()}}
    for j in range(1, skel.num_joints):
        src = swap.get(j, j)
        ours = mfeats[:, LAYOUT.rotation_of(j)]
        theirs = feats[:, LAYOUT.rotation_of(src)] * sign
        assert np.allclose(ours, theirs, atol=1e-8)
    pos_sign = np.array([-1.0, 1.0, 1.0])
    for j in range(skel.num_joints):
        src = swap.get(j, j)
        ours = mfeats[:, LAYOUT.position_of(j)]
        theirs = feats[:, LAYOUT.position_of(src)] * pos_sign
        assert np.allclose(ours, theirs, atol=1e-8)
    labels = detect_contacts(clip)
    mlabels = detect_contacts(mirror(clip))
    assert np.array_equal(mlabels, labels[:, [2, 3, 0, 1]])


def test_tpose_positions_match_identity_fk(skel):
    tp = tpose_positions(skel)
    rot = np.tile(quat.IDENTITY, (skel.num_joints, 1))
    assert np.array_equal(tp, forward_kinematics(skel, rot, np.zeros(3)))
