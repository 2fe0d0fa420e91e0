"""Training loop and offline prediction."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimsMismatch, NonFiniteLoss, ShapeMismatch
from ..features import Dataset
from . import layers as L
from .models import (
    Arch,
    ModelParams,
    backward,
    check_features,
    filter_width,
    forward,
    forward_logits,
    init_model,
    pad_repeat_last,
    shortest_class_duration,
)
from .optim import make_optimizer

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    seed: int
    losses: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0


def resolve_width(config, dataset: Dataset, fps: float) -> int | None:
    if config.arch is not Arch.ED_TCN:
        return None
    if config.filter_mode == "derived":
        duration = shortest_class_duration([labels for _, labels in dataset.items], fps)
    else:
        duration = config.filter_duration_s
    return filter_width(duration, fps)


def train(
    dataset: Dataset,
    config,
    seed: int = 0,
    validation: Dataset | None = None,
    val_every: int = 1,
) -> tuple[ModelParams, TrainReport]:
    """Fit a model with one full-sequence gradient step per video per epoch.

    Video order is reshuffled each epoch from the seeded generator that also
    initialises the weights, so identical inputs give bit-identical weights.
    """
    if not dataset.items:
        raise ShapeMismatch("training needs at least one video")
    dims = dataset.dims
    if validation is not None and validation.items and validation.dims != dims:
        raise DimsMismatch(f"validation dims {validation.dims} != training dims {dims}")
    fps = dataset.items[0][0].fps
    rng = np.random.default_rng(seed)
    model = init_model(config, dims, len(dataset.label_set), fps, rng, resolve_width(config, dataset, fps))
    opt = make_optimizer(config.optimizer, model.params, config.learning_rate)
    report = TrainReport(seed=seed)
    started = time.perf_counter()
    for epoch in range(config.epochs):
        total_loss, correct, frames = 0.0, 0, 0
        for v in rng.permutation(len(dataset.items)):
            seq, labels = dataset.items[v]
            x = pad_repeat_last(seq.data, model.min_length)
            mask = np.arange(x.shape[0]) < seq.frames
            y = pad_repeat_last(np.asarray(labels)[:, None], x.shape[0])[:, 0]
            logits, cache = forward_logits(model, x)
            loss, dlogits, probs = L.softmax_cross_entropy(logits, y, mask)
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, loss)
            grads, _ = backward(model, cache, dlogits)
            opt.step(model.params, grads)
            total_loss += loss
            correct += int(np.sum(probs[: seq.frames].argmax(axis=1) == labels))
            frames += seq.frames
        report.losses.append(total_loss / len(dataset.items))
        report.train_accuracy.append(correct / frames)
        if validation is not None and validation.items and (epoch + 1) % val_every == 0:
            report.val_accuracy.append(frame_accuracy_on(model, validation))
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.debug("epoch %d loss %.5f acc %.4f", epoch, report.losses[-1], report.train_accuracy[-1])
    report.wall_seconds = time.perf_counter() - started
    return model, report


def frame_accuracy_on(model: ModelParams, dataset: Dataset) -> float:
    correct = frames = 0
    for seq, labels in dataset.items:
        correct += int(np.sum(np.asarray(predict(model, seq.data)) == labels))
        frames += seq.frames
    return correct / frames


def predict(model: ModelParams, features, window: int | None = None) -> list[int]:
    """Per-frame argmax class ids; ties go to the lowest id.

    With ``window`` the sequence is cut into consecutive chunks of that many
    frames, each padded by repeating its last frame to ``window`` frames and
    predicted on its own (the offline counterpart of streaming).
    """
    x = check_features(model, features)
    T = x.shape[0]
    if T == 0:
        return []
    if window is not None:
        out: list[int] = []
        for start in range(0, T, window):
            chunk = x[start : start + window]
            out.extend(predict(model, pad_repeat_last(chunk, window))[: chunk.shape[0]])
        return out
    probs = forward(model, pad_repeat_last(x, model.min_length))
    return [int(c) for c in probs[:T].argmax(axis=1)]
