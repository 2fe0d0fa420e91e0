"""Hierarchical action labels, frame annotations and run-length segments."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AnnotationError,
    EmptyInput,
    GapError,
    MissingRisk,
    OverlapError,
    UnknownLabel,
    UnsortedError,
)

SEPARATOR = "/"


@dataclass(frozen=True)
class ActionLabel:
    tiers: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.tiers) <= 4:
            raise ValueError(f"labels have 1-4 tiers, got {len(self.tiers)}")
        if any(not t or SEPARATOR in t for t in self.tiers):
            raise ValueError(f"bad tier in {self.tiers!r}")

    @classmethod
    def parse(cls, canonical: str) -> "ActionLabel":
        return cls(tuple(t.strip() for t in canonical.strip().split(SEPARATOR)))

    @property
    def canonical(self) -> str:
        return SEPARATOR.join(self.tiers)

    def __str__(self) -> str:
        return self.canonical


class LabelSet:
    """Ordered labels; position in the list is the class id."""

    def __init__(self, labels: Iterable[ActionLabel | str]):
        self.labels = tuple(ActionLabel.parse(x) if isinstance(x, str) else x for x in labels)
        self.index = {}
        for i, label in enumerate(self.labels):
            if label.canonical in self.index:
                raise ValueError(f"duplicate label {label.canonical!r}")
            self.index[label.canonical] = i

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelSet) and self.labels == other.labels

    def id_of(self, label: ActionLabel | str) -> int:
        key = label.canonical if isinstance(label, ActionLabel) else ActionLabel.parse(label).canonical
        try:
            return self.index[key]
        except KeyError:
            raise UnknownLabel(f"label {key!r} is not in the label set") from None

    def name(self, class_id: int) -> str:
        return self.labels[class_id].canonical

    @classmethod
    def parse(cls, text: str) -> "LabelSet":
        """One canonical label per line; blank lines and '#' comments are skipped."""
        return cls(line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))

    def dumps(self) -> str:
        return "".join(f"{label.canonical}\n" for label in self.labels)


# Best-effort defaults: the literal label strings of the public datasets are
# not published, so these are assembled from their tier vocabularies.
UW_IOM_LABELS = LabelSet([
    "None/Walk/None/None",
    "None/Stand/None/None",
    "Box/Walk/Hold/None",
    "Box/Bend/Reach/Low",
    "Box/Bend/PickUp/Low",
    "Box/Bend/Place/Low",
    "Box/Stand/PickUp/Medium",
    "Box/Stand/Place/Medium",
    "Box/Stand/PickUp/High",
    "Box/Stand/Place/High",
    "Rod/Bend/Reach/Low",
    "Rod/Bend/PickUp/Low",
    "Rod/Bend/Place/Low",
    "Rod/Stand/PickUp/Medium",
    "Rod/Stand/Place/Medium",
    "Rod/Stand/PickUp/High",
    "Rod/Stand/Place/High",
])

TUM_LABELS = LabelSet([
    "Close/Cabinet", "Close/Drawer",
    "Open/Cabinet", "Open/Drawer",
    "Reach/Cabinet", "Reach/Drawer",
    "PickUp/Cabinet", "PickUp/Drawer",
    "PickUp/HoldOneHand", "PickUp/HoldBothHands",
    "Place/Cabinet", "Place/Drawer",
    "Place/HoldOneHand", "Place/HoldBothHands",
    "Stand/DoNotHold", "Stand/HoldOneHand", "Stand/HoldBothHands",
    "Twist/DoNotHold",
    "Walk/DoNotHold", "Walk/HoldOneHand", "Walk/HoldBothHands",
])


@dataclass(frozen=True)
class Span:
    start: int  # inclusive
    end: int  # inclusive
    label: ActionLabel

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class AnnotationTrack:
    spans: tuple[Span, ...]
    total_frames: int
    labels: LabelSet

    def __post_init__(self):
        validate_spans(self.spans, self.total_frames)

    def to_frame_labels(self) -> list[int]:
        out: list[int] = []
        for span in self.spans:
            out.extend([self.labels.id_of(span.label)] * span.length)
        return out

    @classmethod
    def from_frame_labels(cls, frames: Sequence[int], labels: LabelSet) -> "AnnotationTrack":
        spans, start = [], 0
        for class_id, length in run_length_encode(frames):
            spans.append(Span(start, start + length - 1, labels.labels[class_id]))
            start += length
        return cls(tuple(spans), start, labels)

    def dumps(self) -> str:
        return "".join(f"{s.start},{s.end},{s.label.canonical}\n" for s in self.spans)


def validate_spans(spans: Sequence[Span], total_frames: int) -> None:
    """Spans must be sorted, non-overlapping and tile [0, total_frames) exactly."""
    if total_frames < 1:
        raise AnnotationError("total_frames must be positive")
    if not spans:
        raise GapError(f"no spans; frames 0-{total_frames - 1} are unannotated")
    for s in spans:
        if s.start < 0 or s.end < s.start:
            raise AnnotationError(f"bad span {s.start}-{s.end}")
    for prev, cur in zip(spans, spans[1:]):
        if cur.start < prev.start:
            raise UnsortedError(f"span starting at {cur.start} follows span starting at {prev.start}")
    if spans[0].start != 0:
        raise GapError(f"frames 0-{spans[0].start - 1} are unannotated")
    for prev, cur in zip(spans, spans[1:]):
        if cur.start <= prev.end:
            raise OverlapError(f"span {cur.start}-{cur.end} overlaps span {prev.start}-{prev.end}")
        if cur.start > prev.end + 1:
            raise GapError(f"frames {prev.end + 1}-{cur.start - 1} are unannotated")
    last = spans[-1]
    if last.end > total_frames - 1:
        raise OverlapError(f"span {last.start}-{last.end} runs past frame {total_frames - 1}")
    if last.end < total_frames - 1:
        raise GapError(f"frames {last.end + 1}-{total_frames - 1} are unannotated")


def parse_annotations(
    stream: IO[bytes] | IO[str] | bytes | str,
    labels: LabelSet,
    total_frames: int | None = None,
) -> AnnotationTrack:
    """Read "start,end,label" rows (0-based, inclusive on both ends).

    ``total_frames`` defaults to one past the last span's end frame.
    """
    raw = stream if isinstance(stream, (bytes, str)) else stream.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    spans = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 3:
            raise AnnotationError(f"line {line_no}: expected 'start,end,label', got {len(row)} fields")
        if line_no == 1 and row[0].strip().lower() == "start":
            continue
        try:
            start, end = int(row[0]), int(row[1])
        except ValueError:
            raise AnnotationError(f"line {line_no}: non-integer frame bounds") from None
        try:
            label = labels.labels[labels.id_of(row[2])]
        except UnknownLabel as exc:
            raise UnknownLabel(f"line {line_no}: {exc}") from None
        spans.append(Span(start, end, label))
    if not spans:
        raise EmptyInput("annotation file has no spans")
    if total_frames is None:
        total_frames = max(s.end for s in spans) + 1
    return AnnotationTrack(tuple(spans), total_frames, labels)


def run_length_encode(frames: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal runs as (value, length) pairs; values come back as Python scalars."""
    arr = np.asarray(frames)
    if arr.size == 0:
        raise EmptyInput("cannot run-length encode an empty sequence")
    change = np.flatnonzero(arr[1:] != arr[:-1]) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [arr.size])))
    return [(arr[s].item(), int(n)) for s, n in zip(starts, lengths)]


def run_length_decode(runs: Sequence[tuple[int, int]]) -> list[int]:
    out: list[int] = []
    for class_id, length in runs:
        if length < 1:
            raise ValueError(f"run length {length} < 1")
        out.extend([class_id] * length)
    return out


def attach_risk(labels: LabelSet, risk: Mapping[str, object]) -> dict[int, object]:
    """Map each class id to the risk category of its canonical label."""
    out = {}
    for i, label in enumerate(labels):
        if label.canonical not in risk:
            raise MissingRisk(f"no risk category for label {label.canonical!r}")
        out[i] = risk[label.canonical]
    return out
