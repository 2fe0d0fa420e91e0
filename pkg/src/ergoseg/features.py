"""Per-frame feature sequences: FSEQ container, datasets, splits, synthetic data."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimsMismatch,
    InvalidFeatures,
    TooFewVideos,
    TruncatedPayload,
    VersionUnsupported,
)
from .labels import AnnotationTrack, LabelSet, parse_annotations

MAGIC = b"FSEQ"
VERSION = 1
_HEADER = struct.Struct("<IdQQ")  # version, fps, T, D
_ID_LEN = struct.Struct("<I")
MIN_SEGMENT_FRAMES = 5


@dataclass
class FeatureSequence:
    video_id: str
    fps: float
    data: np.ndarray  # (T, D) float64

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidFeatures(f"{self.video_id}: features must be a non-empty T x D matrix")
        if not np.all(np.isfinite(self.data)):
            raise InvalidFeatures(f"{self.video_id}: features contain NaN or Inf")
        if not self.fps > 0:
            raise InvalidFeatures(f"{self.video_id}: fps must be positive")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and self.fps == other.fps
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


def write_features(seq: FeatureSequence) -> bytes:
    vid = seq.video_id.encode("utf-8")
    return b"".join([
        MAGIC,
        _HEADER.pack(VERSION, seq.fps, seq.frames, seq.dims),
        seq.data.astype("<f8", copy=False).tobytes(order="C"),
        _ID_LEN.pack(len(vid)),
        vid,
    ])


def _read_exact(stream: IO[bytes], n: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise TruncatedPayload(f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def read_record(stream: IO[bytes]) -> FeatureSequence | None:
    """Read one FSEQ record from a binary stream; ``None`` at a clean end of stream."""
    magic = stream.read(4)
    if not magic:
        return None
    if len(magic) < 4:
        raise TruncatedPayload("truncated magic")
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    version, fps, t, d = _HEADER.unpack(_read_exact(stream, _HEADER.size, "header"))
    if version != VERSION:
        raise VersionUnsupported(f"FSEQ version {version} (supported: {VERSION})")
    if t * d * 8 > 1 << 40:
        raise InvalidFeatures(f"implausible payload size {t} x {d}")
    payload = _read_exact(stream, t * d * 8, "payload")
    (n,) = _ID_LEN.unpack(_read_exact(stream, _ID_LEN.size, "video id length"))
    vid = _read_exact(stream, n, "video id").decode("utf-8")
    data = np.frombuffer(payload, dtype="<f8").reshape(t, d).astype(np.float64)
    return FeatureSequence(vid, fps, data)


def iter_records(stream: IO[bytes]) -> Iterator[FeatureSequence]:
    while (rec := read_record(stream)) is not None:
        yield rec


def read_features(blob: bytes) -> FeatureSequence:
    stream = io.BytesIO(blob)
    seq = read_record(stream)
    if seq is None:
        raise TruncatedPayload("empty FSEQ payload")
    if stream.read(1):
        raise InvalidFeatures("trailing bytes after FSEQ record")
    return seq


def save_features(seq: FeatureSequence, path: str | Path) -> None:
    Path(path).write_bytes(write_features(seq))


def load_features(path: str | Path) -> FeatureSequence:
    return read_features(Path(path).read_bytes())


@dataclass
class Dataset:
    items: list[tuple[FeatureSequence, np.ndarray]]
    label_set: LabelSet

    def __post_init__(self):
        dims = {seq.dims for seq, _ in self.items}
        if len(dims) > 1:
            raise DimsMismatch(f"feature dims differ across videos: {sorted(dims)}")
        for seq, labels in self.items:
            if len(labels) != seq.frames:
                raise DimsMismatch(f"{seq.video_id}: {seq.frames} feature frames but {len(labels)} labels")
            if len(labels) and (min(labels) < 0 or max(labels) >= len(self.label_set)):
                raise DimsMismatch(f"{seq.video_id}: class id outside the label set")

    @property
    def video_ids(self) -> list[str]:
        return [seq.video_id for seq, _ in self.items]

    @property
    def dims(self) -> int:
        return self.items[0][0].dims

    def subset(self, video_ids: Sequence[str]) -> "Dataset":
        by_id = {seq.video_id: (seq, labels) for seq, labels in self.items}
        return Dataset([by_id[v] for v in video_ids], self.label_set)


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    n_splits: int
    splits: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (train ids, test ids)

    def dumps(self) -> str:
        lines = [f"# seed={self.seed} n_splits={self.n_splits}", "split,side,video_id"]
        for k, (train, test) in enumerate(self.splits):
            lines += [f"{k},train,{v}" for v in train]
            lines += [f"{k},test,{v}" for v in test]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        seed, rows = 0, {}
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("#"):
                for part in line[1:].split():
                    if part.startswith("seed="):
                        seed = int(part[5:])
                continue
            if not line or line == "split,side,video_id":
                continue
            k, side, vid = line.split(",", 2)
            if side not in ("train", "test"):
                raise ValueError(f"bad split side {side!r}")
            rows.setdefault(int(k), ([], []))[side == "test"].append(vid)
        splits = tuple((tuple(rows[k][0]), tuple(rows[k][1])) for k in sorted(rows))
        return cls(seed, len(splits), splits)


def make_splits(video_ids: Sequence[str], n_splits: int = 5, test_fraction: float = 0.25, seed: int = 0) -> SplitSpec:
    """Independent random train/test partitions of fixed sizes.

    The test size is test_fraction * n rounded half up, kept within [1, n-1].
    """
    ids = list(video_ids)
    n = len(ids)
    if n < 2:
        raise TooFewVideos(f"need at least 2 videos to split, got {n}")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n_test = min(max(int(math.floor(test_fraction * n + 0.5)), 1), n - 1)
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(n_splits):
        order = rng.permutation(n)
        test = tuple(ids[i] for i in sorted(order[:n_test]))
        train = tuple(ids[i] for i in sorted(order[n_test:]))
        splits.append((train, test))
    return SplitSpec(seed, n_splits, tuple(splits))


def _segment_lengths(rng: np.random.Generator, total: int, mean: float) -> list[int]:
    # floor + (geometric - 1) keeps the mean at ``mean`` while never going below the floor
    p = 1.0 / (mean - MIN_SEGMENT_FRAMES + 1) if mean > MIN_SEGMENT_FRAMES else 1.0
    lengths: list[int] = []
    while sum(lengths) < total:
        lengths.append(MIN_SEGMENT_FRAMES + int(rng.geometric(p)) - 1)
    excess = sum(lengths) - total
    lengths[-1] -= excess
    if lengths[-1] < MIN_SEGMENT_FRAMES and len(lengths) > 1:
        lengths[-2] += lengths.pop()
    return lengths


def synth_generate(
    n_videos: int,
    n_classes: int,
    dims: int,
    fps: float,
    mean_segment_frames: float,
    noise_sigma: float,
    seed: int,
    frames_per_video: int | None = None,
) -> Dataset:
    """Synthetic segmentation data: class prototypes plus Gaussian noise.

    Each class owns a prototype drawn once from U[-1, 1]^D. A video is a
    sequence of segments with geometric lengths (floor 5 frames) whose
    consecutive classes differ. Defaults to ten mean segments per video.
    """
    if min(n_videos, n_classes, dims) < 1 or fps <= 0 or mean_segment_frames <= 0 or noise_sigma < 0:
        raise ValueError("synthetic parameters must be positive")
    if frames_per_video is None:
        frames_per_video = int(round(10 * mean_segment_frames))
    frames_per_video = max(frames_per_video, MIN_SEGMENT_FRAMES)
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(-1.0, 1.0, size=(n_classes, dims))
    label_set = LabelSet(f"class{k:02d}" for k in range(n_classes))
    items = []
    for v in range(n_videos):
        labels = []
        prev = None
        for length in _segment_lengths(rng, frames_per_video, mean_segment_frames):
            if n_classes == 1:
                cls = 0
            else:
                choices = [c for c in range(n_classes) if c != prev]
                cls = int(choices[rng.integers(len(choices))])
            labels.extend([cls] * length)
            prev = cls
        labels = np.asarray(labels, dtype=np.int64)
        data = prototypes[labels] + noise_sigma * rng.standard_normal((len(labels), dims))
        items.append((FeatureSequence(f"synth{v:03d}", float(fps), data), labels))
    return Dataset(items, label_set)


def nearest_prototype_accuracy(dataset: Dataset) -> float:
    """Frame accuracy of classifying each frame to the nearest class mean (oracle for synthetic data)."""
    feats = np.concatenate([seq.data for seq, _ in dataset.items])
    labels = np.concatenate([lab for _, lab in dataset.items])
    classes = np.unique(labels)
    means = np.stack([feats[labels == c].mean(axis=0) for c in classes])
    dist = ((feats[:, None, :] - means[None]) ** 2).sum(axis=2)
    return float(np.mean(classes[dist.argmin(axis=1)] == labels))


# ---------------------------------------------------------------------------
# on-disk datasets


def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write <id>.fseq, <id>.csv, labels.txt and manifest.txt; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "labels.txt").write_text(dataset.label_set.dumps())
    lines = []
    for seq, labels in dataset.items:
        save_features(seq, out / f"{seq.video_id}.fseq")
        track = AnnotationTrack.from_frame_labels(labels, dataset.label_set)
        (out / f"{seq.video_id}.csv").write_text(track.dumps())
        lines.append(f"{seq.video_id}.fseq,{seq.video_id}.csv")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(path: str | Path) -> list[tuple[Path, Path]]:
    """Lines "<features_path>,<annotations_path>", relative to the manifest's directory."""
    path = Path(path)
    pairs = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise InvalidFeatures(f"{path}:{line_no}: expected '<features>,<annotations>'")
        pairs.append(tuple(path.parent / p for p in parts))
    return pairs


def load_dataset(manifest: str | Path, labels_path: str | Path | None = None) -> Dataset:
    manifest = Path(manifest)
    labels_path = Path(labels_path) if labels_path else manifest.parent / "labels.txt"
    label_set = LabelSet.parse(labels_path.read_text())
    items = []
    for feat_path, ann_path in read_manifest(manifest):
        seq = load_features(feat_path)
        track = parse_annotations(ann_path.read_bytes(), label_set, total_frames=seq.frames)
        items.append((seq, np.asarray(track.to_frame_labels(), dtype=np.int64)))
    return Dataset(items, label_set)
