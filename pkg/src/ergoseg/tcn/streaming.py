"""Window-by-window inference over frames that arrive one at a time."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from ..errors import DimsMismatch, WindowTooSmall
from .models import ModelParams, forward, pad_repeat_last

DEFAULT_WINDOW = 90


class StreamingPredictor:
    """Buffers incoming feature rows and predicts each full window as it completes.

    A window is padded by repeating its last frame up to ``window`` frames
    before the forward pass; only predictions for real frames are emitted.
    Call :meth:`finish` at end of stream to flush a partial window.
    """

    def __init__(self, model: ModelParams, window: int = DEFAULT_WINDOW):
        if window < max(1, model.min_length):
            raise WindowTooSmall(
                f"window {window} is shorter than the {model.min_length} frames the model needs"
            )
        self.model = model
        self.window = window
        self._buffer: list[np.ndarray] = []

    def _run(self, frames: list[np.ndarray]) -> list[int]:
        x = pad_repeat_last(np.stack(frames), self.window)
        probs = forward(self.model, x)
        return [int(c) for c in probs[: len(frames)].argmax(axis=1)]

    def push(self, frame) -> list[int]:
        row = np.asarray(frame, dtype=np.float64).reshape(-1)
        if row.shape[0] != self.model.input_dims:
            raise DimsMismatch(f"frame has {row.shape[0]} dims, model expects {self.model.input_dims}")
        self._buffer.append(row)
        if len(self._buffer) < self.window:
            return []
        frames, self._buffer = self._buffer, []
        return self._run(frames)

    def finish(self) -> list[int]:
        if not self._buffer:
            return []
        frames, self._buffer = self._buffer, []
        return self._run(frames)


def predict_streaming(model: ModelParams, frames: Iterable, window: int = DEFAULT_WINDOW) -> Iterator[list[int]]:
    """Yield a batch of class ids every time a window completes, then the trailing partial window."""
    streamer = StreamingPredictor(model, window)
    for frame in frames:
        out = streamer.push(frame)
        if out:
            yield out
    tail = streamer.finish()
    if tail:
        yield tail
