"""``ergoseg`` command-line interface.

Exit status: 0 on success, 2 on input or usage errors, 3 on numeric failure
during training.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import features as F
from . import kinematics as K
from . import metrics as M
from . import reba as R
from . import skeleton_io as S
from . import timeline
from .errors import ErgosegError, LengthMismatch, NumericFailure
from .labels import LabelSet, parse_annotations
from .tcn import (
    DEFAULT_WINDOW,
    DTcnConfig,
    EdTcnConfig,
    FramewiseConfig,
    StreamingPredictor,
    load_model,
    predict,
    save_model,
    train,
)

log = logging.getLogger("ergoseg")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ErgosegError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} needs --seed (or 'seed' in the config file)")
    return int(args.seed)


def _video_id(path: Path) -> str:
    name = path.name
    for suffix in (".scores.csv", ".pred.csv", ".csv", ".fseq", ".bvh", ".txt"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _load_splits(args, dataset: F.Dataset) -> list[tuple[str, list[str], list[str]]]:
    """(directory name, train ids, test ids) per split; one "all" split when none is given."""
    if not args.splits:
        ids = dataset.video_ids
        return [("all", ids, ids)]
    spec = F.SplitSpec.parse(Path(args.splits).read_text())
    return [(f"split{k}", list(tr), list(te)) for k, (tr, te) in enumerate(spec.splits)]


def read_frame_labels(path: Path, labels: LabelSet) -> list[int]:
    """Frame class ids from a prediction CSV ("frame,class_id,label") or an annotation span file."""
    text = Path(path).read_text()
    first = text.lstrip().split("\n", 1)[0].strip().lower()
    if first.startswith("frame,"):
        out = []
        for line_no, line in enumerate(text.splitlines()[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise LengthMismatch(f"{path}:{line_no}: expected 'frame,class_id,label'")
            out.append(int(parts[1]))
        return out
    return parse_annotations(text, labels).to_frame_labels()


def _prediction_csv(ids: list[int], labels: LabelSet | None, start: int = 0, header: bool = True) -> str:
    lines = ["frame,class_id,label"] if header else []
    for i, c in enumerate(ids, start=start):
        lines.append(f"{i},{c},{labels.name(c) if labels else ''}")
    return "\n".join(lines) + "\n" if lines else ""


def _labels_for(args) -> LabelSet | None:
    if getattr(args, "labels", None):
        return LabelSet.parse(Path(args.labels).read_text())
    if getattr(args, "manifest", None):
        candidate = Path(args.manifest).parent / "labels.txt"
        if candidate.exists():
            return LabelSet.parse(candidate.read_text())
    return None


# ---------------------------------------------------------------------------
# reba


def _skeleton_positions(path: Path, args) -> tuple[np.ndarray, K.JointLayout]:
    text = path.read_text()
    if path.suffix.lower() == ".bvh":
        doc = S.parse_bvh(text)
        seq = S.forward_kinematics(doc)
        return seq.positions, K.tum33_layout(seq.joint_names, args.roles)
    layout = K.kinect25_layout(args.roles)
    seq = S.read_joint_table(text, layout.joint_names, fps=args.fps, has_header=args.header)
    return seq.positions, layout


def cmd_reba_score(args) -> int:
    tables = R.load_tables(args.tables)
    thresholds = R.Thresholds(args.zero_threshold, args.binary_threshold, args.abduction_threshold)
    adj = R.Adjustments(args.load, args.coupling, args.activity)
    if len(args.inputs) > 1 and not args.out:
        raise UsageError("several inputs need --out DIR")
    for path in map(Path, args.inputs):
        try:
            positions, layout = _skeleton_positions(path, args)
            angles = K.posture_sequence(positions, layout, up=(0.0, 1.0, 0.0))
        except ErgosegError as exc:
            raise type(exc)(f"{path}: {exc}") from None
        scores = R.score_frames(angles, thresholds, tables, adj)
        rows = ["frame,score,category"]
        rows += [f"{i},{s.value},{R.risk_category(s.value).value}" for i, s in enumerate(scores)]
        text = "\n".join(rows) + "\n"
        if len(args.inputs) > 1:
            _write(str(Path(args.out) / f"{_video_id(path)}.scores.csv"), text)
        else:
            _write(args.out, text)
    return EXIT_OK


def _read_scores(path: Path) -> list[float]:
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("frame,score"):
        raise UsageError(f"{path}: not a score file (missing 'frame,score,category' header)")
    return [float(line.split(",")[1]) for line in lines[1:] if line.strip()]


def cmd_reba_aggregate(args) -> int:
    labels = LabelSet.parse(Path(args.labels).read_text())
    scores = {_video_id(Path(p)): Path(p) for p in args.scores}
    anns = {_video_id(Path(p)): Path(p) for p in args.annotations}
    if set(scores) != set(anns):
        raise UsageError(
            f"video ids differ: scores only {sorted(set(scores) - set(anns))}, "
            f"annotations only {sorted(set(anns) - set(scores))}"
        )
    videos = []
    for vid in sorted(scores):
        s = _read_scores(scores[vid])
        track = parse_annotations(anns[vid].read_text(), labels, total_frames=len(s))
        videos.append((s, track))
    aggregate = R.aggregate_median if args.scheme == "median" else R.aggregate_resample_max
    result = aggregate(videos, expected=range(len(labels)))
    rows = ["action,score,category"]
    rows += [f"{labels.name(a)},{r.score:.2f},{r.category.value}" for a, r in result.items()]
    _write(args.out, "\n".join(rows) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# data and models


def cmd_dataset_synth(args) -> int:
    ds = F.synth_generate(
        args.videos, args.classes, args.dims, args.fps, args.mean_segment, args.sigma,
        _require_seed(args), frames_per_video=args.frames,
    )
    manifest = F.save_dataset(ds, args.out)
    print(manifest)
    return EXIT_OK


def cmd_split(args) -> int:
    ds = F.load_dataset(args.manifest, args.labels)
    spec = F.make_splits(ds.video_ids, args.n_splits, args.test_fraction, _require_seed(args))
    _write(args.out, spec.dumps())
    return EXIT_OK


def _arch_config(args):
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.arch == "ed_tcn":
        if args.filter_duration is not None:
            overrides["filter_duration_s"] = args.filter_duration
        if args.filter_mode is not None:
            overrides["filter_mode"] = args.filter_mode
        if args.filters:
            overrides["encoder_filters"] = tuple(int(f) for f in args.filters.split(","))
        return EdTcnConfig(**overrides)
    if args.arch == "d_tcn":
        if args.filters:
            overrides["filters_per_layer"] = tuple(int(f) for f in args.filters.split(","))
            overrides["layers_per_stack"] = len(overrides["filters_per_layer"])
        if args.stacks is not None:
            overrides["stacks"] = args.stacks
        return DTcnConfig(**overrides)
    return FramewiseConfig(**overrides)


def cmd_train(args) -> int:
    seed = _require_seed(args)
    ds = F.load_dataset(args.manifest, args.labels)
    config = _arch_config(args)
    out = Path(args.out)
    for name, train_ids, _ in _load_splits(args, ds):
        model, report = train(ds.subset(train_ids), config, seed)
        split_dir = out / name
        split_dir.mkdir(parents=True, exist_ok=True)
        save_model(model, split_dir / "model.tcnm")
        rows = ["epoch,loss,train_accuracy"]
        rows += [f"{e},{l!r},{a!r}" for e, (l, a) in enumerate(zip(report.losses, report.train_accuracy))]
        (split_dir / "train_log.csv").write_text("\n".join(rows) + "\n")
        log.info("%s: %d epochs, final loss %.5f", name, len(report.losses),
                 report.losses[-1] if report.losses else float("nan"))
    return EXIT_OK


def cmd_predict(args) -> int:
    labels = _labels_for(args)
    if args.model:
        if not args.features or not args.out:
            raise UsageError("--model needs --features and --out")
        model = load_model(args.model)
        for path in map(Path, args.features):
            seq = F.load_features(path)
            ids = predict(model, seq.data, window=args.window)
            _write(str(Path(args.out) / f"{seq.video_id}.pred.csv"), _prediction_csv(ids, labels))
        return EXIT_OK
    if not (args.run and args.manifest):
        raise UsageError("predict needs either --model or --run with --manifest")
    ds = F.load_dataset(args.manifest, args.labels)
    labels = labels or ds.label_set
    for name, _, test_ids in _load_splits(args, ds):
        split_dir = Path(args.run) / name
        model = load_model(split_dir / "model.tcnm")
        for seq, _ in ds.subset(test_ids).items:
            ids = predict(model, seq.data, window=args.window)
            _write(str(split_dir / "pred" / f"{seq.video_id}.pred.csv"), _prediction_csv(ids, labels))
    return EXIT_OK


def cmd_stream(args) -> int:
    """Read FSEQ records from stdin, writing "frame,class_id,label" rows as windows complete."""
    model = load_model(args.model)
    labels = _labels_for(args)
    streamer = StreamingPredictor(model, args.window)
    source = sys.stdin.buffer
    out = sys.stdout
    out.write("frame,class_id,label\n")
    emitted = 0

    def emit(ids):
        nonlocal emitted
        if ids:
            out.write(_prediction_csv(ids, labels, start=emitted, header=False))
            out.flush()
            emitted += len(ids)

    for record in F.iter_records(source):
        for row in record.data:
            emit(streamer.push(row))
    emit(streamer.finish())
    return EXIT_OK


def cmd_eval(args) -> int:
    reports = []
    if args.pred:
        labels = _labels_for(args)
        if labels is None or not args.truth:
            raise UsageError("--pred needs --truth and --labels")
        pred = read_frame_labels(Path(args.pred), labels)
        truth = read_frame_labels(Path(args.truth), labels)
        reports.append(M.evaluate(pred, truth, args.tau, name=_video_id(Path(args.pred))))
    else:
        if not (args.run and args.manifest):
            raise UsageError("eval needs either --pred/--truth or --run with --manifest")
        ds = F.load_dataset(args.manifest, args.labels)
        for name, _, test_ids in _load_splits(args, ds):
            per_video = []
            for seq, truth in ds.subset(test_ids).items:
                pred_path = Path(args.run) / name / "pred" / f"{seq.video_id}.pred.csv"
                pred = read_frame_labels(pred_path, ds.label_set)
                per_video.append(M.evaluate(pred, truth, args.tau, name=seq.video_id))
            reports.append(M.mean_report(per_video, name))
    _write(args.out, M.report_rows(reports))
    return EXIT_OK


def _read_risk_map(path: Path, labels: LabelSet) -> dict[int, str]:
    risk = {}
    for line in path.read_text().splitlines()[1:]:
        if line.strip():
            action, _, category = line.rsplit(",", 2)
            risk[action] = category
    from .labels import attach_risk

    return attach_risk(labels, risk)


def cmd_report(args) -> int:
    labels = LabelSet.parse(Path(args.labels).read_text())
    truth = read_frame_labels(Path(args.truth), labels)
    pred = read_frame_labels(Path(args.pred), labels)
    risk = _read_risk_map(Path(args.risk), labels) if args.risk else None
    _write(args.out, timeline.render_svg(truth, pred, risk))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; [common] and [<command>] sections supply defaults")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ergoseg", description="Action segmentation and REBA risk labelling.")
    sub = p.add_subparsers(dest="group", required=True)

    reba = sub.add_parser("reba", help="REBA scoring and per-action aggregation")
    rsub = reba.add_subparsers(dest="action", required=True)
    score = rsub.add_parser("score", parents=[common], help="per-frame REBA scores from skeleton files")
    score.add_argument("inputs", nargs="+", help=".bvh files or Kinect joint tables")
    score.add_argument("--out", help="output file, or directory for several inputs")
    score.add_argument("--tables", help="REBA table file (default: $ERGOSEG_TABLES or built-in)")
    score.add_argument("--roles", help="joint role map overriding the built-in one")
    score.add_argument("--fps", type=float, default=30.0, help="frame rate of joint tables")
    score.add_argument("--header", action="store_true", help="joint tables start with a header row")
    score.add_argument("--zero-threshold", type=float, default=5.0)
    score.add_argument("--binary-threshold", type=float, default=10.0)
    score.add_argument("--abduction-threshold", type=float, default=30.0)
    score.add_argument("--load", type=int, default=0)
    score.add_argument("--coupling", type=int, default=0)
    score.add_argument("--activity", type=int, default=0)
    score.set_defaults(func=cmd_reba_score, command="reba.score")

    agg = rsub.add_parser("aggregate", parents=[common], help="per-action risk from scores and annotations")
    agg.add_argument("--scores", nargs="+", required=True)
    agg.add_argument("--annotations", nargs="+", required=True)
    agg.add_argument("--labels", required=True)
    agg.add_argument("--scheme", choices=("median", "resample_max"), default="median")
    agg.add_argument("--out")
    agg.set_defaults(func=cmd_reba_aggregate, command="reba.aggregate")

    ds = sub.add_parser("dataset", help="dataset preparation")
    dsub = ds.add_subparsers(dest="action", required=True)
    synth = dsub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--videos", type=int, default=10)
    synth.add_argument("--classes", type=int, default=5)
    synth.add_argument("--dims", type=int, default=16)
    synth.add_argument("--fps", type=float, default=2.0)
    synth.add_argument("--mean-segment", type=float, default=40.0)
    synth.add_argument("--sigma", type=float, default=0.25)
    synth.add_argument("--frames", type=int, help="frames per video (default 10 mean segments)")
    synth.set_defaults(func=cmd_dataset_synth, command="dataset.synth")

    split = sub.add_parser("split", parents=[common], help="seeded train/test splits")
    split.add_argument("--manifest", required=True)
    split.add_argument("--labels")
    split.add_argument("--n-splits", type=int, default=5)
    split.add_argument("--test-fraction", type=float, default=0.25)
    split.add_argument("--out")
    split.set_defaults(func=cmd_split, command="split")

    tr = sub.add_parser("train", parents=[common], help="train one model per split")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--labels")
    tr.add_argument("--splits", help="split file; without it one model is trained on every video")
    tr.add_argument("--arch", choices=("ed_tcn", "d_tcn", "framewise"), default="ed_tcn")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--filters", help="comma-separated filter counts")
    tr.add_argument("--stacks", type=int)
    tr.add_argument("--filter-duration", type=float, help="ED-TCN filter duration in seconds")
    tr.add_argument("--filter-mode", choices=("fixed", "derived"))
    tr.add_argument("--out", required=True, help="run directory")
    tr.set_defaults(func=cmd_train, command="train")

    pr = sub.add_parser("predict", parents=[common], help="offline prediction")
    pr.add_argument("--model")
    pr.add_argument("--features", nargs="+")
    pr.add_argument("--run", help="run directory written by train")
    pr.add_argument("--manifest")
    pr.add_argument("--splits")
    pr.add_argument("--labels")
    pr.add_argument("--window", type=int, help="predict in independent windows of this many frames")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict, command="predict")

    st = sub.add_parser("stream", parents=[common], help="windowed prediction of FSEQ records on stdin")
    st.add_argument("--model", required=True)
    st.add_argument("--labels")
    st.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    st.set_defaults(func=cmd_stream, command="stream")

    ev = sub.add_parser("eval", parents=[common], help="accuracy, edit and F1 overlap")
    ev.add_argument("--pred")
    ev.add_argument("--truth")
    ev.add_argument("--run")
    ev.add_argument("--manifest")
    ev.add_argument("--splits")
    ev.add_argument("--labels")
    ev.add_argument("--tau", type=float, default=M.DEFAULT_TAU)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval, command="eval")

    rp = sub.add_parser("report", parents=[common], help="SVG timeline of truth and prediction")
    rp.add_argument("--truth", required=True)
    rp.add_argument("--pred", required=True)
    rp.add_argument("--labels", required=True)
    rp.add_argument("--risk", help="action risk file from 'reba aggregate'")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report, command="report")
    return p


def _apply_config(args, argv, parser) -> argparse.Namespace:
    """Fill options not given on the command line from the config file."""
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise UsageError(f"cannot read config file {args.config}")
    values: dict[str, str] = {}
    for section in ("common", args.command):
        if cp.has_section(section):
            values.update({k.replace("-", "_"): v for k, v in cp.items(section)})
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, raw in values.items():
        if key in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif key in ("seed", "epochs", "videos", "classes", "dims", "frames", "n_splits",
                     "window", "stacks", "load", "coupling", "activity"):
            value = int(raw)
        elif key in ("tau", "lr", "fps", "sigma", "mean_segment", "test_fraction",
                     "filter_duration", "zero_threshold", "binary_threshold", "abduction_threshold"):
            value = float(raw)
        elif key in ("inputs", "scores", "annotations", "features"):
            value = raw.split()
        else:
            value = raw
        setattr(args, key, value)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args = _apply_config(args, argv, parser)
        return args.func(args)
    except NumericFailure as exc:
        print(f"ergoseg: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ErgosegError, OSError, ValueError, KeyError, configparser.Error) as exc:
        print(f"ergoseg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
