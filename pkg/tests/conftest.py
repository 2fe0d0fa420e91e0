import numpy as np
import pytest

from ergoseg.kinematics import REQUIRED_ROLES, JointLayout

# Neutral standing pose: Y up, facing +Z, subject's left on +X.
NEUTRAL = {
    "pelvis": (0, 100, 0), "spine_mid": (0, 120, 0), "spine_top": (0, 150, 0), "head": (0, 170, 0),
    "left_hip": (10, 100, 0), "right_hip": (-10, 100, 0),
    "left_knee": (10, 55, 0), "right_knee": (-10, 55, 0),
    "left_ankle": (10, 10, 0), "right_ankle": (-10, 10, 0),
    "left_shoulder": (20, 150, 0), "right_shoulder": (-20, 150, 0),
    "left_elbow": (20, 120, 0), "right_elbow": (-20, 120, 0),
    "left_wrist": (20, 95, 0), "right_wrist": (-20, 95, 0),
    "left_hand": (20, 85, 0), "right_hand": (-20, 85, 0),
}
UPPER_BODY = ("spine_mid", "spine_top", "head", "left_shoulder", "right_shoulder", "left_elbow",
              "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand")

ROLE_LAYOUT = JointLayout("roles", REQUIRED_ROLES, {r: r for r in REQUIRED_ROLES})


def rot_x(deg):
    a = np.radians(deg)
    return np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])


def rot_y(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])


def rot_z(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])


def pose_array(pose: dict) -> np.ndarray:
    return np.array([pose[r] for r in REQUIRED_ROLES], dtype=np.float64)


def rotate_about(pose: dict, roles, pivot, R) -> dict:
    out = dict(pose)
    pivot = np.asarray(pivot, dtype=np.float64)
    for r in roles:
        out[r] = tuple(pivot + R @ (np.asarray(pose[r], dtype=np.float64) - pivot))
    return out


def lean(pose: dict, degrees: float) -> dict:
    """Tip the whole upper body forward (+) about the pelvis."""
    return rotate_about(pose, UPPER_BODY, pose["pelvis"], rot_x(degrees))


@pytest.fixture
def neutral():
    return dict(NEUTRAL)


# Lines recorded by the acceptance suite, echoed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
