"""Temporal convolutional segmenters in plain NumPy."""

from .checkpoint import dumps_model, load_model, loads_model, save_model
from .models import (
    Arch,
    DTcnConfig,
    EdTcnConfig,
    FramewiseConfig,
    ModelParams,
    d_tcn_forward,
    ed_tcn_forward,
    filter_width,
    forward,
    init_model,
)
from .streaming import DEFAULT_WINDOW, StreamingPredictor, predict_streaming
from .train import TrainReport, predict, train

__all__ = [
    "Arch", "DTcnConfig", "EdTcnConfig", "FramewiseConfig", "ModelParams", "TrainReport",
    "DEFAULT_WINDOW", "StreamingPredictor", "d_tcn_forward", "dumps_model", "ed_tcn_forward",
    "filter_width", "forward", "init_model", "load_model", "loads_model", "predict",
    "predict_streaming", "save_model", "train",
]
