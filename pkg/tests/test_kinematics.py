import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import NEUTRAL, ROLE_LAYOUT, lean, pose_array, rot_x, rot_y, rot_z, rotate_about
from ergoseg.errors import DegenerateFrame, DegenerateProjection, MissingJoint
from ergoseg.kinematics import (
    JointLayout,
    PostureAngles,
    body_frame,
    kinect25_layout,
    posture_angles,
    posture_sequence,
    projected_angle,
    tum33_layout,
)
from ergoseg.skeleton_io import forward_kinematics, tum_template


def angles_of(pose) -> PostureAngles:
    return posture_angles(pose_array(pose), ROLE_LAYOUT)


# --- projected_angle ---------------------------------------------------------

def test_projected_angle_examples():
    assert projected_angle((1, 0, 0), (0, 1, 0), (0, 0, 1)) == pytest.approx(90)
    assert projected_angle((1, 2, 3), (1, 2, 3), (0, 0, 1)) == pytest.approx(0, abs=1e-6)
    assert projected_angle((1, 0, 1), (0, 1, 1), (0, 0, 1)) == pytest.approx(90)


def test_projected_angle_degenerate():
    with pytest.raises(DegenerateProjection):
        projected_angle((0, 0, 2), (1, 0, 0), (0, 0, 1))


vec = st.tuples(*[st.floats(-10, 10)] * 3).map(np.array)


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec, st.floats(0.1, 10), st.floats(0.1, 10))
def test_projected_angle_properties(u, v, n, a, b):
    if np.linalg.norm(n) < 1e-3:
        return
    n = n / np.linalg.norm(n)
    try:
        ang = projected_angle(u, v, n)
    except DegenerateProjection:
        return
    assert 0.0 <= ang <= 180.0
    assert projected_angle(v, u, n) == pytest.approx(ang, abs=1e-6)
    assert projected_angle(a * u, b * v, n) == pytest.approx(ang, abs=1e-6)


# --- body frame ----------------------------------------------------------------

def test_axis_aligned_body_frame():
    bf = body_frame(pose_array(NEUTRAL), ROLE_LAYOUT)
    np.testing.assert_allclose(bf.sagittal_normal, [1, 0, 0])
    np.testing.assert_allclose(bf.transverse_normal, [0, 1, 0])
    np.testing.assert_allclose(np.abs(bf.coronal_normal), [0, 0, 1])


def test_body_frame_orthonormal_and_rotation_equivariant():
    R = rot_y(90)
    pose = rotate_about(NEUTRAL, NEUTRAL.keys(), (0, 0, 0), R)
    bf0 = body_frame(pose_array(NEUTRAL), ROLE_LAYOUT)
    bf = body_frame(pose_array(pose), ROLE_LAYOUT)
    for a, b in [(bf0.sagittal_normal, bf.sagittal_normal), (bf0.coronal_normal, bf.coronal_normal),
                 (bf0.transverse_normal, bf.transverse_normal)]:
        np.testing.assert_allclose(R @ a, b, atol=1e-12)
    axes = np.stack([bf.sagittal_normal, bf.coronal_normal, bf.transverse_normal])
    np.testing.assert_allclose(axes @ axes.T, np.eye(3), atol=1e-9)


def test_coincident_hips():
    pose = dict(NEUTRAL, left_hip=NEUTRAL["right_hip"])
    with pytest.raises(DegenerateFrame):
        body_frame(pose_array(pose), ROLE_LAYOUT)


# --- posture angles ------------------------------------------------------------

def test_neutral_pose_is_all_zero():
    a = angles_of(NEUTRAL)
    for name in PostureAngles.field_names():
        assert getattr(a, name) == pytest.approx(0.0, abs=1e-6), name


def test_forward_lean_30():
    a = angles_of(lean(NEUTRAL, 30))
    assert a.trunk_flexion == pytest.approx(30, abs=0.5)
    # the rest of the upper body moved rigidly with the trunk
    assert a.neck_flexion == pytest.approx(0, abs=1e-6)
    assert a.upper_arm_flexion_left == pytest.approx(0, abs=1e-6)


def test_backward_lean_is_extension():
    assert angles_of(lean(NEUTRAL, -15)).trunk_flexion == pytest.approx(-15, abs=1e-6)


def test_trunk_twist_20():
    top = NEUTRAL["spine_top"]
    pose = rotate_about(NEUTRAL, ["left_shoulder", "right_shoulder"], top, rot_y(20))
    assert angles_of(pose).trunk_twist == pytest.approx(20, abs=0.5)


def test_side_flexion():
    pose = rotate_about(NEUTRAL, ["spine_mid", "spine_top", "head"], NEUTRAL["pelvis"], rot_z(25))
    a = angles_of(pose)
    assert a.trunk_side_flexion == pytest.approx(25, abs=1e-6)
    assert a.trunk_flexion == pytest.approx(0, abs=1e-6)


def test_neck_flexion_sign():
    top = NEUTRAL["spine_top"]
    assert angles_of(rotate_about(NEUTRAL, ["head"], top, rot_x(25))).neck_flexion == pytest.approx(25)
    assert angles_of(rotate_about(NEUTRAL, ["head"], top, rot_x(-25))).neck_flexion == pytest.approx(-25)


def test_arm_angles():
    arm = ["left_elbow", "left_wrist", "left_hand"]
    sh = NEUTRAL["left_shoulder"]
    # arm hangs down; rotating by -45 about +X swings it forward (+Z)
    fwd = angles_of(rotate_about(NEUTRAL, arm, sh, rot_x(-45)))
    assert fwd.upper_arm_flexion_left == pytest.approx(45)
    back = angles_of(rotate_about(NEUTRAL, arm, sh, rot_x(30)))
    assert back.upper_arm_flexion_left == pytest.approx(-30)
    side = angles_of(rotate_about(NEUTRAL, arm, sh, rot_z(40)))
    assert side.shoulder_abduction_left == pytest.approx(40)
    elbow = angles_of(rotate_about(NEUTRAL, ["left_wrist", "left_hand"], NEUTRAL["left_elbow"], rot_x(-90)))
    assert elbow.lower_arm_flexion_left == pytest.approx(90)
    assert elbow.wrist_flexion_left == pytest.approx(0, abs=1e-6)


def test_knee_flexion():
    pose = rotate_about(NEUTRAL, ["right_ankle"], NEUTRAL["right_knee"], rot_x(70))
    assert angles_of(pose).knee_flexion_right == pytest.approx(70)


def test_degenerate_part_is_named():
    # upper arm pointing straight sideways has no extent in the sagittal plane
    pose = dict(NEUTRAL, left_elbow=(50, 150, 0))
    with pytest.raises(DegenerateProjection, match="left upper arm"):
        angles_of(pose)


def test_lean_sweep_is_monotone():
    values = [angles_of(lean(NEUTRAL, t)).trunk_flexion for t in np.linspace(0, 85, 35)]
    assert np.all(np.diff(values) > 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-180, 180), st.tuples(*[st.floats(-1000, 1000)] * 3), st.floats(-40, 80))
def test_rigid_motion_invariance(yaw, shift, bend):
    pose = lean(NEUTRAL, bend)
    moved = rotate_about(pose, pose.keys(), (0, 0, 0), rot_y(yaw))
    moved = {k: tuple(np.asarray(v) + shift) for k, v in moved.items()}
    a, b = angles_of(pose), angles_of(moved)
    for name in PostureAngles.field_names():
        assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-6), name


def test_sequence_matches_per_frame():
    frames = np.stack([pose_array(lean(NEUTRAL, t)) for t in (0, 10, 20)])
    seq = posture_sequence(frames, ROLE_LAYOUT)
    assert [round(a.trunk_flexion, 6) for a in seq] == [0, 10, 20]


# --- layouts -------------------------------------------------------------------

def test_missing_role():
    layout = JointLayout("x", ("a",), {"pelvis": "a"})
    with pytest.raises(MissingJoint):
        layout.index("head")


def test_default_layouts_resolve_every_role():
    for layout in (kinect25_layout(), tum33_layout()):
        for role in ROLE_LAYOUT.roles:
            layout.index(role)


def test_tum_template_is_neutral():
    seq = forward_kinematics(tum_template())
    a = posture_angles(seq.positions[0], tum33_layout(seq.joint_names))
    assert a.trunk_flexion == pytest.approx(0, abs=1e-9)
    assert a.shoulder_abduction_left == pytest.approx(0, abs=1e-9)
