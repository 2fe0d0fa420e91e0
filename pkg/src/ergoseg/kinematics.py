"""Body-segment angles from world joint positions.

Every angle here is in degrees. The vertical axis comes from the world
("up", +Y by default, which holds for both BVH and Kinect camera space);
the left-right axis comes from the hip line, and forward is left x up.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateFrame, DegenerateProjection, MissingJoint

EPS_NORM = 1e-9

REQUIRED_ROLES = (
    "pelvis", "spine_mid", "spine_top", "head",
    "left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hand", "right_hand",
)

KINECT25_JOINTS = (
    "SpineBase", "SpineMid", "Neck", "Head",
    "ShoulderLeft", "ElbowLeft", "WristLeft", "HandLeft",
    "ShoulderRight", "ElbowRight", "WristRight", "HandRight",
    "HipLeft", "KneeLeft", "AnkleLeft", "FootLeft",
    "HipRight", "KneeRight", "AnkleRight", "FootRight",
    "SpineShoulder", "HandTipLeft", "ThumbLeft", "HandTipRight", "ThumbRight",
)


@dataclass(frozen=True)
class JointLayout:
    name: str
    joint_names: tuple[str, ...]
    roles: Mapping[str, str]

    def index(self, role: str) -> int:
        try:
            return self.joint_names.index(self.roles[role])
        except KeyError:
            raise MissingJoint(f"layout {self.name!r} has no joint for role {role!r}") from None
        except ValueError:
            raise MissingJoint(
                f"layout {self.name!r}: role {role!r} maps to unknown joint {self.roles[role]!r}"
            ) from None


def parse_roles(text: str) -> dict[str, str]:
    """Parse "<role> = <joint_name>" lines; '#' starts a comment."""
    roles = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MissingJoint(f"role map line {line_no}: expected '<role> = <joint>'")
        role, joint = (part.strip() for part in line.split("=", 1))
        roles[role] = joint
    return roles


def _default_roles(filename: str) -> dict[str, str]:
    return parse_roles(resources.files("ergoseg.data").joinpath(filename).read_text())


def kinect25_layout(role_file: str | Path | None = None) -> JointLayout:
    roles = parse_roles(Path(role_file).read_text()) if role_file else _default_roles("kinect25.roles")
    return JointLayout("kinect25", KINECT25_JOINTS, roles)


def tum33_layout(joint_names: Sequence[str] | None = None, role_file: str | Path | None = None) -> JointLayout:
    """Layout for 33-node TUM-style BVH skeletons.

    ``joint_names`` defaults to the order produced by forward kinematics on
    :func:`ergoseg.skeleton_io.tum_template`.
    """
    if joint_names is None:
        from .skeleton_io import tum_template

        joint_names = [node.name for node in tum_template().root.walk()]
    roles = parse_roles(Path(role_file).read_text()) if role_file else _default_roles("tum33.roles")
    return JointLayout("tum33", tuple(joint_names), roles)


@dataclass(frozen=True)
class BodyFrame:
    sagittal_normal: np.ndarray  # left
    coronal_normal: np.ndarray  # forward
    transverse_normal: np.ndarray  # up


@dataclass(frozen=True)
class PostureAngles:
    trunk_flexion: float = 0.0
    trunk_side_flexion: float = 0.0
    trunk_twist: float = 0.0
    neck_flexion: float = 0.0
    knee_flexion_left: float = 0.0
    knee_flexion_right: float = 0.0
    upper_arm_flexion_left: float = 0.0
    upper_arm_flexion_right: float = 0.0
    shoulder_abduction_left: float = 0.0
    shoulder_abduction_right: float = 0.0
    lower_arm_flexion_left: float = 0.0
    lower_arm_flexion_right: float = 0.0
    wrist_flexion_left: float = 0.0
    wrist_flexion_right: float = 0.0

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


SIGNED_ANGLES = ("trunk_flexion", "neck_flexion", "upper_arm_flexion_left", "upper_arm_flexion_right")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def body_frame(frame: np.ndarray, layout: JointLayout, up=(0.0, 1.0, 0.0)) -> BodyFrame:
    """Anatomical axes of one frame of joint positions, shape (joints, 3)."""
    frame = np.asarray(frame, dtype=np.float64)
    up = _unit(np.asarray(up, dtype=np.float64))
    hips = frame[layout.index("left_hip")] - frame[layout.index("right_hip")]
    left = hips - _dot(hips, up) * up
    if np.linalg.norm(left) < EPS_NORM:
        raise DegenerateFrame("hip joints coincide in the horizontal plane")
    left = _unit(left)
    return BodyFrame(left, np.cross(left, up), up)


def projected_angle(u, v, plane_normal) -> np.ndarray | float:
    """Angle between u and v after projecting both onto the plane with this unit normal.

    Broadcasts over leading axes. Raises DegenerateProjection if a projection
    is shorter than 1e-9.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = np.asarray(plane_normal, dtype=np.float64)
    up_ = u - _dot(u, n)[..., None] * n
    vp_ = v - _dot(v, n)[..., None] * n
    nu = np.linalg.norm(up_, axis=-1)
    nv = np.linalg.norm(vp_, axis=-1)
    if np.any(nu < EPS_NORM) or np.any(nv < EPS_NORM):
        raise DegenerateProjection("segment vector vanishes after projection onto the plane")
    out = _angle(up_, vp_)
    return float(out) if out.ndim == 0 else out


def _angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # atan2 of |u x v| and u.v stays accurate near 0 and 180 degrees, where arccos does not
    return np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), _dot(u, v)))


def _segment_angle(u: np.ndarray, v: np.ndarray, part: str) -> np.ndarray:
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    if np.any(nu < EPS_NORM) or np.any(nv < EPS_NORM):
        raise DegenerateProjection(f"{part}: zero-length body segment")
    return _angle(u, v)


def _projected(u, v, n, part: str) -> np.ndarray:
    try:
        return np.asarray(projected_angle(u, v, n))
    except DegenerateProjection as exc:
        raise DegenerateProjection(f"{part}: {exc}") from None


def _flexion_sign(u: np.ndarray, v: np.ndarray, left: np.ndarray) -> np.ndarray:
    # rotating from u toward forward is a positive turn about the left axis
    return np.where(_dot(np.cross(u, v), left) < 0, -1.0, 1.0)


def posture_angle_arrays(positions: np.ndarray, layout: JointLayout, up=(0.0, 1.0, 0.0)) -> dict[str, np.ndarray]:
    """Vectorised angles for (frames, joints, 3) positions; one array per PostureAngles field."""
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    up = _unit(np.asarray(up, dtype=np.float64))

    def at(role):
        return p[:, layout.index(role), :]

    hip_line = at("left_hip") - at("right_hip")
    left = hip_line - _dot(hip_line, up)[:, None] * up
    if np.any(np.linalg.norm(left, axis=-1) < EPS_NORM):
        raise DegenerateFrame("hip joints coincide in the horizontal plane")
    left = _unit(left)
    forward = np.cross(left, up)
    up_b = np.broadcast_to(up, left.shape)

    lower_spine = at("spine_mid") - at("pelvis")
    upper_spine = at("spine_top") - at("spine_mid")
    neck = at("head") - at("spine_top")
    shoulder_line = at("left_shoulder") - at("right_shoulder")

    out: dict[str, np.ndarray] = {}
    flex = _projected(up_b, lower_spine, left, "trunk flexion")
    out["trunk_flexion"] = flex * _flexion_sign(up_b, lower_spine, left)
    out["trunk_side_flexion"] = _projected(up_b, lower_spine, forward, "trunk side flexion")
    out["trunk_twist"] = _projected(shoulder_line, hip_line, up_b, "trunk twist")
    flex = _projected(upper_spine, neck, left, "neck flexion")
    out["neck_flexion"] = flex * _flexion_sign(upper_spine, neck, left)

    trunk_down = -(at("spine_top") - at("pelvis"))
    for side in ("left", "right"):
        hip, knee, ankle = at(f"{side}_hip"), at(f"{side}_knee"), at(f"{side}_ankle")
        shoulder, elbow = at(f"{side}_shoulder"), at(f"{side}_elbow")
        wrist, hand = at(f"{side}_wrist"), at(f"{side}_hand")
        upper_arm = elbow - shoulder
        forearm = wrist - elbow
        out[f"knee_flexion_{side}"] = _segment_angle(knee - hip, ankle - knee, f"{side} knee")
        flex = _projected(trunk_down, upper_arm, left, f"{side} upper arm flexion")
        # trunk_down points down, so forward arm motion turns negatively about left
        out[f"upper_arm_flexion_{side}"] = -flex * _flexion_sign(trunk_down, upper_arm, left)
        out[f"shoulder_abduction_{side}"] = _projected(
            trunk_down, upper_arm, forward, f"{side} shoulder abduction"
        )
        out[f"lower_arm_flexion_{side}"] = _segment_angle(upper_arm, forearm, f"{side} elbow")
        out[f"wrist_flexion_{side}"] = _segment_angle(forearm, hand - wrist, f"{side} wrist")
    # a zero magnitude keeps a +0.0 sign whatever the cross product said
    for name in SIGNED_ANGLES:
        out[name] = np.where(out[name] == 0.0, 0.0, out[name])
    return {name: out[name] for name in PostureAngles.field_names()}


def posture_angles(frame: np.ndarray, layout: JointLayout, up=(0.0, 1.0, 0.0)) -> PostureAngles:
    arrays = posture_angle_arrays(np.asarray(frame)[None], layout, up)
    return PostureAngles(**{k: float(v[0]) for k, v in arrays.items()})


def posture_sequence(positions: np.ndarray, layout: JointLayout, up=(0.0, 1.0, 0.0)) -> list[PostureAngles]:
    arrays = posture_angle_arrays(positions, layout, up)
    n = len(next(iter(arrays.values())))
    return [PostureAngles(**{k: float(v[i]) for k, v in arrays.items()}) for i in range(n)]
