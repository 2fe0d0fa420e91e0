"""REBA part scores, frame scores, risk categories and per-action aggregation."""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ActionMissing, TableFormatError, TooShort
from .kinematics import PostureAngles

TABLES_ENV = "ERGOSEG_TABLES"
BIN_PARTS = ("trunk", "neck", "legs", "upper_arm", "lower_arm", "wrist")
MODIFIERS = ("legs_base", "trunk_twist_or_side_flexion", "neck_twist", "shoulder_abduction")
PART_RANGES = {"trunk": 5, "neck": 3, "legs": 4, "upper_arm": 6, "lower_arm": 2, "wrist": 3}
MAX_SCORE = 15


@dataclass(frozen=True)
class Thresholds:
    zero: float = 5.0
    binary: float = 10.0
    abduction: float = 30.0

    def __post_init__(self):
        if not (self.zero > 0 and self.binary > 0 and self.abduction > 0):
            raise ValueError("thresholds must be positive")
        if self.abduction < self.binary:
            raise ValueError("abduction threshold must be >= binary threshold")


@dataclass(frozen=True)
class Adjustments:
    load_score: int = 0
    coupling_score: int = 0
    activity_score: int = 0

    def __post_init__(self):
        for name in ("load_score", "coupling_score", "activity_score"):
            if not 0 <= getattr(self, name) <= 3:
                raise ValueError(f"{name} must be within 0..3")


@dataclass(frozen=True)
class PartScores:
    trunk: int
    neck: int
    legs: int
    upper_arm: int
    lower_arm: int
    wrist: int


@dataclass(frozen=True)
class FrameScore:
    value: int
    parts: PartScores


class RiskCategory(str, enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


class ActionRisk(NamedTuple):
    score: float
    category: RiskCategory


@dataclass(frozen=True)
class Bins:
    neutral: int
    rows: tuple[tuple[float, float, int], ...]

    def lookup(self, angle: float, zero: float) -> int:
        if abs(angle) < zero:
            return self.neutral
        for lo, hi, score in self.rows:
            if lo <= angle < hi:
                return score
        raise TableFormatError(f"angle {angle} not covered by any bin")


@dataclass
class RebaTables:
    bins: dict[str, Bins]
    modifiers: dict[str, int]
    table_a: np.ndarray  # [neck-1, legs-1, trunk-1]
    table_b: np.ndarray  # [lower_arm-1, wrist-1, upper_arm-1]
    table_c: np.ndarray  # [score_a-1, score_b-1]
    source: str = field(default="<memory>")


def parse_tables(text: str, source: str = "<memory>") -> RebaTables:
    """Parse the sectioned table format (see ``data/reba_tables.txt``)."""
    section = None
    bins: dict[str, dict] = {}
    modifiers: dict[str, int] = {}
    cells: dict[str, dict[tuple[int, ...], int]] = {"table_a": {}, "table_b": {}, "table_c": {}}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{line_no}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section.startswith("bins."):
                part = section[5:]
                if part not in BIN_PARTS:
                    raise TableFormatError(f"{where}: unknown part {part!r}")
                bins.setdefault(part, {"neutral": None, "rows": []})
            elif section not in ("modifiers", *cells):
                raise TableFormatError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise TableFormatError(f"{where}: entry outside any section")
        if "=" not in line:
            raise TableFormatError(f"{where}: expected '<key> = <value>'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            score = int(value)
        except ValueError:
            raise TableFormatError(f"{where}: score {value!r} is not an integer") from None
        if section == "modifiers":
            modifiers[key] = score
        elif section.startswith("bins."):
            entry = bins[section[5:]]
            if key == "neutral":
                entry["neutral"] = score
            else:
                try:
                    lo, hi = (float(x) for x in key.split())
                except ValueError:
                    raise TableFormatError(f"{where}: bin row needs 'lo hi = score'") from None
                if not lo < hi:
                    raise TableFormatError(f"{where}: empty bin [{lo}, {hi})")
                entry["rows"].append((lo, hi, score))
        else:
            try:
                index = tuple(int(x) for x in key.split())
            except ValueError:
                raise TableFormatError(f"{where}: bad table index {key!r}") from None
            cells[section][index] = score

    missing = [p for p in BIN_PARTS if p not in bins or bins[p]["neutral"] is None]
    if missing:
        raise TableFormatError(f"{source}: missing bins or neutral score for {missing}")
    for name in MODIFIERS:
        if name not in modifiers:
            raise TableFormatError(f"{source}: missing modifier {name!r}")

    def dense(name: str, shape: tuple[int, ...], top: int) -> np.ndarray:
        table = np.zeros(shape, dtype=np.int64)
        for idx in np.ndindex(*shape):
            key = tuple(i + 1 for i in idx)
            if key not in cells[name]:
                raise TableFormatError(f"{source}: [{name}] lacks entry {key}")
            table[idx] = cells[name][key]
        if len(cells[name]) != table.size:
            raise TableFormatError(f"{source}: [{name}] has out-of-range indices")
        if table.min() < 1 or table.max() > top:
            raise TableFormatError(f"{source}: [{name}] values outside 1..{top}")
        return table

    tables = RebaTables(
        bins={p: Bins(bins[p]["neutral"], tuple(sorted(bins[p]["rows"]))) for p in BIN_PARTS},
        modifiers=modifiers,
        table_a=dense("table_a", (3, 4, 5), 9),
        table_b=dense("table_b", (2, 3, 6), 9),
        table_c=dense("table_c", (12, 12), 12),
        source=source,
    )
    c = tables.table_c
    if np.any(np.diff(c, axis=0) < 0) or np.any(np.diff(c, axis=1) < 0):
        raise TableFormatError(f"{source}: [table_c] is not monotone non-decreasing")
    return tables


def load_tables(path: str | os.PathLike | None = None) -> RebaTables:
    """Load tables from ``path``, else from $ERGOSEG_TABLES, else the packaged defaults."""
    if path is None:
        path = os.environ.get(TABLES_ENV) or None
    if path is None:
        return default_tables()
    return parse_tables(Path(path).read_text(), str(path))


_DEFAULT_TABLES: RebaTables | None = None


def default_tables() -> RebaTables:
    """The packaged worksheet transcription (ignores $ERGOSEG_TABLES)."""
    global _DEFAULT_TABLES
    if _DEFAULT_TABLES is None:
        text = resources.files("ergoseg.data").joinpath("reba_tables.txt").read_text()
        _DEFAULT_TABLES = parse_tables(text, "reba_tables.txt")
    return _DEFAULT_TABLES


def _clamp(value: int, top: int) -> int:
    return max(1, min(top, value))


def score_parts(angles: PostureAngles, t: Thresholds | None = None, tables: RebaTables | None = None) -> PartScores:
    t = t or Thresholds()
    tables = tables or default_tables()
    b, mod = tables.bins, tables.modifiers

    twisted = angles.trunk_twist >= t.binary
    side_flexed = angles.trunk_side_flexion >= t.binary
    trunk = b["trunk"].lookup(angles.trunk_flexion, t.zero)
    if twisted or side_flexed:
        trunk += mod["trunk_twist_or_side_flexion"]
    # no neck rotation data: the neck counts as twisted whenever the trunk is
    neck = b["neck"].lookup(angles.neck_flexion, t.zero)
    if twisted:
        neck += mod["neck_twist"]
    legs = mod["legs_base"] + max(
        b["legs"].lookup(angles.knee_flexion_left, t.zero),
        b["legs"].lookup(angles.knee_flexion_right, t.zero),
    )

    def arm(side: str) -> tuple[int, int, int]:
        upper = b["upper_arm"].lookup(getattr(angles, f"upper_arm_flexion_{side}"), t.zero)
        if getattr(angles, f"shoulder_abduction_{side}") >= t.abduction:
            upper += mod["shoulder_abduction"]
        lower = b["lower_arm"].lookup(getattr(angles, f"lower_arm_flexion_{side}"), t.zero)
        wrist = b["wrist"].lookup(getattr(angles, f"wrist_flexion_{side}"), t.zero)
        return upper, lower, wrist

    left, right = arm("left"), arm("right")
    return PartScores(
        trunk=_clamp(trunk, PART_RANGES["trunk"]),
        neck=_clamp(neck, PART_RANGES["neck"]),
        legs=_clamp(legs, PART_RANGES["legs"]),
        upper_arm=_clamp(max(left[0], right[0]), PART_RANGES["upper_arm"]),
        lower_arm=_clamp(max(left[1], right[1]), PART_RANGES["lower_arm"]),
        wrist=_clamp(max(left[2], right[2]), PART_RANGES["wrist"]),
    )


def frame_reba(parts: PartScores, adj: Adjustments | None = None, tables: RebaTables | None = None) -> FrameScore:
    adj = adj or Adjustments()
    tables = tables or default_tables()
    score_a = tables.table_a[parts.neck - 1, parts.legs - 1, parts.trunk - 1] + adj.load_score
    score_b = tables.table_b[parts.lower_arm - 1, parts.wrist - 1, parts.upper_arm - 1] + adj.coupling_score
    value = tables.table_c[min(score_a, 12) - 1, min(score_b, 12) - 1] + adj.activity_score
    return FrameScore(int(min(value, MAX_SCORE)), parts)


def score_frames(
    angles: Iterable[PostureAngles],
    t: Thresholds | None = None,
    tables: RebaTables | None = None,
    adjustments: Adjustments | Sequence[Adjustments] | None = None,
) -> list[FrameScore]:
    """Score a sequence of frames; ``adjustments`` may be one value or one per frame."""
    tables = tables or default_tables()
    angles = list(angles)
    if adjustments is None or isinstance(adjustments, Adjustments):
        adjustments = [adjustments or Adjustments()] * len(angles)
    return [frame_reba(score_parts(a, t, tables), adj, tables) for a, adj in zip(angles, adjustments)]


def risk_category(score: float) -> RiskCategory:
    if score < 3:
        return RiskCategory.LOW
    if score <= 7:
        return RiskCategory.MEDIUM
    return RiskCategory.HIGH


def _values(scores) -> np.ndarray:
    return np.asarray([s.value if isinstance(s, FrameScore) else s for s in scores], dtype=np.float64)


def _frame_ids(labels) -> np.ndarray:
    if hasattr(labels, "to_frame_labels"):
        labels = labels.to_frame_labels()
    return np.asarray(labels, dtype=np.int64)


def _check_pair(scores: np.ndarray, ids: np.ndarray, video: int) -> None:
    if scores.shape != ids.shape:
        raise ValueError(f"video {video}: {len(scores)} frame scores but {len(ids)} frame labels")


def aggregate_median(videos: Sequence[tuple], expected: Iterable[int] | None = None) -> dict[int, ActionRisk]:
    """Per action: median over each video's frames, then median over videos.

    ``videos`` holds (frame scores, frame labels) pairs, one per participant;
    labels are class-id sequences or annotation tracks. Even counts take the
    mean of the two central values and the category uses the unrounded value.
    """
    per_action: dict[int, list[float]] = {}
    for v, (scores, labels) in enumerate(videos):
        scores, ids = _values(scores), _frame_ids(labels)
        _check_pair(scores, ids, v)
        for action in np.unique(ids):
            per_action.setdefault(int(action), []).append(float(np.median(scores[ids == action])))
    return _finish(per_action, expected, np.median)


def downsample_to_100(seq: Sequence) -> list:
    n = len(seq)
    if n < 100:
        raise TooShort(f"sequence of {n} frames is shorter than 100")
    step = n // 100
    return [seq[k * step] for k in range(100)]


def aggregate_resample_max(videos: Sequence[tuple], expected: Iterable[int] | None = None) -> dict[int, ActionRisk]:
    """Per video: reduce scores and labels to 100 samples and average per action; keep the max over videos."""
    per_action: dict[int, list[float]] = {}
    for v, (scores, labels) in enumerate(videos):
        scores, ids = _values(scores), _frame_ids(labels)
        _check_pair(scores, ids, v)
        scores = np.asarray(downsample_to_100(scores))
        ids = np.asarray(downsample_to_100(ids))
        for action in np.unique(ids):
            per_action.setdefault(int(action), []).append(float(scores[ids == action].mean()))
    return _finish(per_action, expected, np.max)


def _finish(per_action: Mapping[int, list[float]], expected, reduce) -> dict[int, ActionRisk]:
    if expected is not None:
        absent = sorted(set(int(e) for e in expected) - set(per_action))
        if absent:
            raise ActionMissing(f"actions {absent} appear in no video")
    out = {}
    for action in sorted(per_action):
        score = float(reduce(per_action[action]))
        if not math.isfinite(score):
            raise ValueError(f"non-finite aggregate for action {action}")
        out[action] = ActionRisk(score, risk_category(score))
    return out
