"""BVH and joint-table ingestion into world-coordinate skeleton sequences."""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass, field
from typing import IO, Iterator, Sequence

import numpy as np

from .errors import (
    EmptySequence,
    FrameCountMismatch,
    MalformedHierarchy,
    MotionWidthMismatch,
    NonMonotoneFrameIndex,
    RowWidthMismatch,
    TooManyInvalidRows,
)

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
VALID_CHANNELS = frozenset(POSITION_CHANNELS + ROTATION_CHANNELS)

# rows with an unparseable coordinate above this fraction reject the table
MAX_INVALID_ROW_FRACTION = 0.2


class SkeletonSource(str, enum.Enum):
    BVH_TUM33 = "BVH_TUM33"
    TABLE_KINECT25 = "TABLE_KINECT25"


@dataclass(frozen=True)
class JointNode:
    name: str
    offset: tuple[float, float, float]
    channels: tuple[str, ...] = ()
    children: tuple["JointNode", ...] = ()
    is_end_site: bool = False

    def walk(self) -> Iterator["JointNode"]:
        """Pre-order traversal, the order BVH motion columns follow."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class BvhDocument:
    root: JointNode
    frame_count: int
    frame_time: float
    motion: np.ndarray  # (frame_count, n_channels), rotations in degrees

    @property
    def n_channels(self) -> int:
        return sum(len(node.channels) for node in self.root.walk())

    @property
    def fps(self) -> float:
        return 1.0 / self.frame_time

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BvhDocument):
            return NotImplemented
        return (
            self.root == other.root
            and self.frame_count == other.frame_count
            and self.frame_time == other.frame_time
            and self.motion.shape == other.motion.shape
            and np.array_equal(self.motion, other.motion)
        )


@dataclass
class SkeletonSequence:
    joint_names: tuple[str, ...]
    fps: float
    positions: np.ndarray  # (frames, joints, 3)
    source: SkeletonSource
    # frame indices as recorded (tables) or 0..n-1 (BVH); lag is not corrected
    frame_index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.frame_index is None:
            self.frame_index = np.arange(self.positions.shape[0])

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def joint(self, name: str) -> np.ndarray:
        return self.positions[:, self.joint_names.index(name), :]


# ---------------------------------------------------------------------------
# BVH parsing

_TOKEN = re.compile(r"[{}]|[^\s{}]+")


def _tokenize(lines: Sequence[str], first_line: int) -> list[tuple[str, int]]:
    tokens = []
    for i, line in enumerate(lines):
        for tok in _TOKEN.findall(line):
            tokens.append((tok, first_line + i))
    return tokens


class _HierarchyParser:
    def __init__(self, tokens: list[tuple[str, int]]):
        self.tokens = tokens
        self.pos = 0
        self.names: set[str] = set()

    def _next(self) -> tuple[str, int]:
        if self.pos >= len(self.tokens):
            line = self.tokens[-1][1] if self.tokens else 1
            raise MalformedHierarchy(f"line {line}: unexpected end of hierarchy")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _expect(self, word: str) -> int:
        tok, line = self._next()
        if tok != word:
            raise MalformedHierarchy(f"line {line}: expected {word!r}, found {tok!r}")
        return line

    def _float(self) -> float:
        tok, line = self._next()
        try:
            return float(tok)
        except ValueError:
            raise MalformedHierarchy(f"line {line}: bad number {tok!r}") from None

    def _offset(self) -> tuple[float, float, float]:
        self._expect("OFFSET")
        return (self._float(), self._float(), self._float())

    def _register(self, name: str, line: int) -> None:
        if name in self.names:
            raise MalformedHierarchy(f"line {line}: duplicate joint name {name!r}")
        self.names.add(name)

    def parse_root(self) -> JointNode:
        self._expect("ROOT")
        name, line = self._next()
        node = self._joint_body(name, line)
        if self.pos != len(self.tokens):
            tok, line = self.tokens[self.pos]
            raise MalformedHierarchy(f"line {line}: unexpected token {tok!r} after ROOT block")
        return node

    def _joint_body(self, name: str, line: int) -> JointNode:
        self._register(name, line)
        self._expect("{")
        offset = self._offset()
        tok, line = self._next()
        if tok != "CHANNELS":
            raise MalformedHierarchy(f"line {line}: expected 'CHANNELS', found {tok!r}")
        count_tok, line = self._next()
        try:
            count = int(count_tok)
        except ValueError:
            raise MalformedHierarchy(f"line {line}: bad channel count {count_tok!r}") from None
        if count not in (0, 3, 6):
            raise MalformedHierarchy(f"line {line}: channel count {count} not in (0, 3, 6)")
        channels = []
        for _ in range(count):
            ch, line = self._next()
            if ch not in VALID_CHANNELS:
                raise MalformedHierarchy(f"line {line}: unknown channel {ch!r}")
            channels.append(ch)
        children = []
        while True:
            tok, line = self._next()
            if tok == "}":
                break
            if tok == "JOINT":
                child_name, child_line = self._next()
                children.append(self._joint_body(child_name, child_line))
            elif tok == "End":
                self._expect("Site")
                end_name = f"{name}_end"
                self._register(end_name, line)
                self._expect("{")
                end_offset = self._offset()
                self._expect("}")
                children.append(JointNode(end_name, end_offset, is_end_site=True))
            else:
                raise MalformedHierarchy(f"line {line}: unexpected token {tok!r} in joint {name!r}")
        return JointNode(name, offset, tuple(channels), tuple(children))


def parse_bvh(text: str) -> BvhDocument:
    """Parse BVH text into a document; rotation channels stay in degrees."""
    lines = text.splitlines()
    hier_at = motion_at = None
    for i, line in enumerate(lines):
        word = line.strip()
        if hier_at is None and word == "HIERARCHY":
            hier_at = i
        elif hier_at is not None and word == "MOTION":
            motion_at = i
            break
    if hier_at is None:
        raise MalformedHierarchy("missing HIERARCHY section")
    if motion_at is None:
        raise MalformedHierarchy("missing MOTION section")

    tokens = _tokenize(lines[hier_at + 1 : motion_at], hier_at + 2)
    braces = sum(1 if t == "{" else -1 if t == "}" else 0 for t, _ in tokens)
    if braces != 0:
        raise MalformedHierarchy(f"unbalanced braces in hierarchy ({braces:+d})")
    root = _HierarchyParser(tokens).parse_root()
    n_channels = sum(len(node.channels) for node in root.walk())

    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines[motion_at + 1 :], start=motion_at + 1)]
    body = [(n, ln) for n, ln in body if ln]
    if len(body) < 2:
        raise FrameCountMismatch("MOTION section lacks 'Frames:' and 'Frame Time:' lines")
    (n_frames_line, frames_text), (n_time_line, time_text) = body[0], body[1]
    m = re.fullmatch(r"Frames:\s*(\S+)", frames_text)
    try:
        frame_count = int(m.group(1)) if m else -1
    except ValueError:
        frame_count = -1
    if frame_count < 1:
        raise FrameCountMismatch(f"line {n_frames_line}: bad frame count line {frames_text!r}")
    m = re.fullmatch(r"Frame Time:\s*(\S+)", time_text)
    try:
        frame_time = float(m.group(1)) if m else -1.0
    except ValueError:
        frame_time = -1.0
    if not (frame_time > 0 and math.isfinite(frame_time)):
        raise MalformedHierarchy(f"line {n_time_line}: bad frame time line {time_text!r}")

    rows = body[2:]
    if len(rows) != frame_count:
        raise FrameCountMismatch(f"header declares {frame_count} frames, found {len(rows)} motion rows")
    motion = np.empty((frame_count, n_channels), dtype=np.float64)
    for r, (line_no, row_text) in enumerate(rows):
        values = row_text.split()
        if len(values) != n_channels:
            raise MotionWidthMismatch(
                f"line {line_no}: motion row has {len(values)} values, hierarchy has {n_channels} channels"
            )
        try:
            motion[r] = [float(v) for v in values]
        except ValueError:
            raise MotionWidthMismatch(f"line {line_no}: non-numeric motion value") from None
    return BvhDocument(root, frame_count, frame_time, motion)


def serialize_bvh(doc: BvhDocument) -> str:
    out = ["HIERARCHY"]

    def emit(node: JointNode, depth: int, is_root: bool) -> None:
        pad = "\t" * depth
        offset = " ".join(repr(float(v)) for v in node.offset)
        if node.is_end_site:
            out.extend([f"{pad}End Site", f"{pad}{{", f"{pad}\tOFFSET {offset}", f"{pad}}}"])
            return
        out.append(f"{pad}{'ROOT' if is_root else 'JOINT'} {node.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {offset}")
        out.append(f"{pad}\tCHANNELS {len(node.channels)}" + "".join(f" {c}" for c in node.channels))
        for child in node.children:
            emit(child, depth + 1, False)
        out.append(f"{pad}}}")

    emit(doc.root, 0, True)
    out.append("MOTION")
    out.append(f"Frames: {doc.frame_count}")
    out.append(f"Frame Time: {doc.frame_time!r}")
    for row in doc.motion:
        out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# forward kinematics


def _axis_rotation(axis: str, degrees: np.ndarray) -> np.ndarray:
    theta = np.radians(degrees)
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(theta), np.zeros_like(theta)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def forward_kinematics(doc: BvhDocument) -> SkeletonSequence:
    """World positions of every joint and end site, composing transforms root to leaf.

    Rotations are intrinsic, applied in the order the channels are written.
    """
    n = doc.frame_count
    names: list[str] = []
    positions: list[np.ndarray] = []
    column = 0

    def visit(node: JointNode, parent_rot: np.ndarray | None, parent_pos: np.ndarray | None) -> None:
        nonlocal column
        local_t = np.tile(np.asarray(node.offset, dtype=np.float64), (n, 1))
        local_r = np.tile(np.eye(3), (n, 1, 1))
        for ch in node.channels:
            values = doc.motion[:, column]
            column += 1
            if ch in POSITION_CHANNELS:
                local_t[:, POSITION_CHANNELS.index(ch)] += values
            else:
                local_r = local_r @ _axis_rotation(ch[0], values)
        if parent_rot is None:
            world_pos, world_rot = local_t, local_r
        else:
            world_pos = parent_pos + np.einsum("fij,fj->fi", parent_rot, local_t)
            world_rot = parent_rot @ local_r
        names.append(node.name)
        positions.append(world_pos)
        for child in node.children:
            visit(child, world_rot, world_pos)

    visit(doc.root, None, None)
    return SkeletonSequence(
        joint_names=tuple(names),
        fps=doc.fps,
        positions=np.stack(positions, axis=1),
        source=SkeletonSource.BVH_TUM33,
    )


def tum_template(frame_count: int = 1, frame_time: float = 0.04) -> BvhDocument:
    """A 33-node TUM-style hierarchy (joints plus end sites) in a neutral standing pose.

    Y is up, the subject faces +Z, and its left side is +X. Root height is
    carried by the root Yposition channel (95 units).
    """

    def j(name, offset, *children):
        return JointNode(name, offset, ("Zrotation", "Xrotation", "Yrotation"), tuple(children))

    def end(parent, offset):
        return JointNode(f"{parent}_end", offset, is_end_site=True)

    def arm(side: str, sx: float) -> JointNode:
        return j(
            f"{side}Shoulder", (8.0 * sx, 5.0, 0.0),
            j(f"{side}Arm", (10.0 * sx, 0.0, 0.0),
              j(f"{side}ForeArm", (0.0, -28.0, 0.0),
                j(f"{side}Hand", (0.0, -25.0, 0.0),
                  j(f"{side}Fingers", (0.0, -8.0, 0.0), end(f"{side}Fingers", (0.0, -4.0, 0.0))),
                  j(f"{side}Thumb", (2.0 * sx, -3.0, 2.0), end(f"{side}Thumb", (0.0, -3.0, 1.0)))))),
        )

    def leg(side: str, sx: float) -> JointNode:
        return j(
            f"{side}UpLeg", (9.0 * sx, -5.0, 0.0),
            j(f"{side}Leg", (0.0, -42.0, 0.0),
              j(f"{side}Foot", (0.0, -42.0, 0.0),
                j(f"{side}ToeBase", (0.0, -5.0, 12.0), end(f"{side}ToeBase", (0.0, 0.0, 5.0))))),
        )

    spine = j("Spine", (0.0, 10.0, 0.0),
              j("Spine1", (0.0, 15.0, 0.0),
                j("Chest", (0.0, 15.0, 0.0),
                  j("Neck", (0.0, 10.0, 0.0), j("Head", (0.0, 10.0, 0.0), end("Head", (0.0, 15.0, 0.0)))),
                  arm("Left", 1.0), arm("Right", -1.0))))
    root = JointNode(
        "Hips", (0.0, 0.0, 0.0),
        ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation"),
        (spine, leg("Left", 1.0), leg("Right", -1.0)),
    )
    n_channels = sum(len(node.channels) for node in root.walk())
    motion = np.zeros((frame_count, n_channels))
    motion[:, 1] = 95.0
    return BvhDocument(root, frame_count, frame_time, motion)


def channel_columns(root: JointNode) -> dict[tuple[str, str], int]:
    """Map (joint name, channel name) to its motion column."""
    cols = {}
    for node in root.walk():
        for ch in node.channels:
            cols[(node.name, ch)] = len(cols)
    return cols


# ---------------------------------------------------------------------------
# joint tables


def _parse_coordinate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def read_joint_table(
    stream: IO[bytes] | IO[str] | bytes | str,
    joint_names: Sequence[str],
    fps: float = 30.0,
    has_header: bool = False,
    source: SkeletonSource = SkeletonSource.TABLE_KINECT25,
) -> SkeletonSequence:
    """Read "frame_index, x, y, z, ..." rows (comma or tab separated).

    Coordinates that do not parse (or are nan/inf) are repaired by linear
    interpolation over the frame index; leading and trailing gaps copy the
    nearest valid frame. More than 20% damaged rows is an error.
    """
    if isinstance(stream, (bytes, str)):
        raw = stream
    else:
        raw = stream.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if has_header and lines:
        lines = lines[1:]
    if not lines:
        raise EmptySequence("joint table has no data rows")
    delimiter = "\t" if "\t" in lines[0][1] else ","

    n_joints = len(joint_names)
    width = 1 + 3 * n_joints
    index = np.empty(len(lines), dtype=np.int64)
    coords = np.empty((len(lines), width - 1), dtype=np.float64)
    for r, (line_no, fields) in enumerate(
        (n, next(csv.reader(io.StringIO(ln), delimiter=delimiter))) for n, ln in lines
    ):
        fields = [f.strip() for f in fields]
        if len(fields) != width:
            raise RowWidthMismatch(f"line {line_no}: {len(fields)} columns, expected {width}")
        try:
            index[r] = int(float(fields[0]))
        except ValueError:
            raise RowWidthMismatch(f"line {line_no}: bad frame index {fields[0]!r}") from None
        if r > 0 and index[r] <= index[r - 1]:
            raise NonMonotoneFrameIndex(
                f"line {line_no}: frame index {index[r]} does not follow {index[r - 1]}"
            )
        coords[r] = [_parse_coordinate(f) for f in fields[1:]]

    positions = coords.reshape(len(lines), n_joints, 3)
    bad = np.isnan(positions).any(axis=2)  # (frames, joints)
    bad_rows = bad.any(axis=1)
    if bad_rows.mean() > MAX_INVALID_ROW_FRACTION:
        raise TooManyInvalidRows(
            f"{int(bad_rows.sum())} of {len(lines)} rows have invalid coordinates"
        )
    for j in np.flatnonzero(bad.any(axis=0)):
        good = ~bad[:, j]
        for axis in range(3):
            positions[~good, j, axis] = np.interp(
                index[~good], index[good], positions[good, j, axis]
            )
    return SkeletonSequence(tuple(joint_names), float(fps), positions, source, index)
