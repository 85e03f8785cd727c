import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionsynth import quat
from motionsynth.bvh import (
    BvhSyntaxError,
    clips_equal,
    mirror,
    parse_bvh,
    resample,
    write_bvh,
)
from motionsynth.skeleton import canonical_skeleton, forward_kinematics
from util import euler_matrix, random_clip, straight_walk_clip

MINIMAL = """HIERARCHY
ROOT Hips
{
\tOFFSET 0 0 0
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
\tJOINT Chest
\t{
\t\tOFFSET 0 20 0
\t\tCHANNELS 3 Zrotation Yrotation Xrotation
\t\tEnd Site
\t\t{
\t\t\tOFFSET 0 30 0
\t\t}
\t}
}
MOTION
Frames: 1
Frame Time: 0.0083333
0 0 0 0 0 0 0 0 0
"""


def test_parse_minimal_zeros():
    clip = parse_bvh(MINIMAL)
    assert clip.skeleton.joint_names == ("Hips", "Chest")
    assert clip.num_frames == 1
    assert clip.frame_time == pytest.approx(1 / 120, rel=1e-4)
    assert np.allclose(clip.rotations, [1, 0, 0, 0])
    assert np.allclose(clip.root_positions, 0)


def _three_joint_bvh(angles, order="ZYX"):
    chans = " ".join(f"{a}rotation" for a in order)
    rows = "\n".join(
        " ".join(f"{v:.6f}" for v in np.concatenate([[0, 0, 0], frame.reshape(-1)]))
        for frame in angles
    )
    return f"""HIERARCHY
ROOT A
{{
\tOFFSET 0 0 0
\tCHANNELS 6 Xposition Yposition Zposition {chans}
\tJOINT B
\t{{
\t\tOFFSET 0 10 0
\t\tCHANNELS 3 {chans}
\t\tJOINT C
\t\t{{
\t\t\tOFFSET 0 8 0
\t\t\tCHANNELS 3 {chans}
\t\t\tEnd Site
\t\t\t{{
\t\t\t\tOFFSET 0 5 0
\t\t\t}}
\t\t}}
\t}}
}}
MOTION
Frames: {len(angles)}
Frame Time: 0.0166667
{rows}
"""


@pytest.mark.parametrize("order", ["ZYX", "ZXY"])
def test_parse_known_angles_against_axis_oracle(order):
    rng = np.random.default_rng(0)
    angles = rng.uniform(-70, 70, size=(4, 3, 3)).round(6)
    clip = parse_bvh(_three_joint_bvh(angles, order))
    assert clip.rotation_order == order
    for t in range(4):
        for j in range(3):
            got = quat.to_matrix(clip.rotations[t, j])
            want = euler_matrix(angles[t, j], order)
            assert np.abs(got - want).max() < 1e-9


def test_round_trip_write_then_parse():
    clip = random_clip(T=12, seed=3)
    back = parse_bvh(write_bvh(clip))
    assert clips_equal(clip, back, tol=1e-6)
    assert back.rotation_order == clip.rotation_order


def test_identity_clip_writes_zero_rows():
    clip = straight_walk_clip(T=3, speed=0.0)
    text = write_bvh(clip)
    motion = text.split("MOTION")[1].strip().splitlines()[2:]
    values = np.array([[float(v) for v in row.split()] for row in motion])
    assert np.allclose(values[:, 3:], 0.0, atol=1e-9)  # all rotation channels
    assert np.allclose(values[:, 1], 93.0)


def test_frame_time_field():
    clip = straight_walk_clip(T=2)
    text = write_bvh(clip)
    line = [l for l in text.splitlines() if l.startswith("Frame Time")][0]
    assert abs(float(line.split(":")[1]) - 1 / 60) < 1e-6


def test_parse_errors_carry_line_numbers():
    broken = MINIMAL.replace("CHANNELS 3 Zrotation Yrotation Xrotation",
                             "CHANNELS 3 Zrotation Yrotation Yrotation")
    with pytest.raises(BvhSyntaxError, match="line"):
        parse_bvh(broken)


def test_parse_rejects_frame_count_mismatch():
    bad = MINIMAL.replace("Frames: 1", "Frames: 2")
    with pytest.raises(BvhSyntaxError, match="frames"):
        parse_bvh(bad)


def test_parse_rejects_unsupported_order():
    bad = MINIMAL.replace("Zrotation Yrotation Xrotation", "Xrotation Yrotation Zrotation")
    with pytest.raises(BvhSyntaxError, match="order"):
        parse_bvh(bad)


def test_resample_keeps_every_kth_frame():
    clip = random_clip(T=10, seed=4)
    clip.frame_time = 1 / 120
    half = resample(clip, 60)
    assert half.num_frames == 5
    assert half.frame_time == pytest.approx(1 / 60)
    assert np.array_equal(half.rotations, clip.rotations[::2])
    assert np.array_equal(half.root_positions, clip.root_positions[::2])
    third = resample(clip, 40)
    assert np.array_equal(third.rotations, clip.rotations[::3])


def test_resample_identity_and_errors():
    clip = random_clip(T=8, seed=5)
    same = resample(clip, 60)
    assert same is clip
    with pytest.raises(ValueError, match="integer"):
        resample(clip, 45)


def test_mirror_fixed_point_on_symmetric_pose():
    clip = straight_walk_clip(T=4, speed=0.0)
    mirrored = mirror(clip)
    assert clips_equal(clip, mirrored, tol=1e-9)


def test_mirror_swaps_foot_raise():
    skel = canonical_skeleton()
    clip = straight_walk_clip(T=5, speed=0.0)
    lift = quat.from_axis_angle([1.0, 0.0, 0.0], -0.8)
    clip.rotations[:, skel.index("LeftUpLeg")] = lift
    heights = lambda c: forward_kinematics(c.skeleton, c.rotations, c.root_positions)[:, :, 1]
    h = heights(clip)
    hm = heights(mirror(clip))
    lf, lt, rf, rt = skel.foot_joint_indices
    assert np.allclose(h[:, lf], hm[:, rf], atol=1e-9)
    assert np.allclose(h[:, lt], hm[:, rt], atol=1e-9)
    assert h[0, lf] > h[0, rf] + 10  # the raise actually raised the foot


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_mirror_is_involution(seed):
    clip = random_clip(T=6, seed=seed)
    assert clips_equal(mirror(mirror(clip)), clip, tol=1e-9)
