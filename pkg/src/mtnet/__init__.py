"""Memory-block attention forecasting for multivariate time series."""

from . import autograd, baselines, data, evaluation, synth, training
from .autograd import Parameter, ParamSet, Tensor, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (RawSeries, Scaler, SplitSpec, WindowSample, chronological_split,
                   fit_scaler, load_matrix, make_samples)
from .encoder import EncoderConfig, EncoderParams, encode
from .errors import (CheckpointError, ConfigError, DataError, MtnetError,
                     NumericError, ShapeError, TrainingError)
from .evaluation import EvalReport, corr, evaluate_model, export_traces, mae, rmse, rrse
from .model import MTNet, AttentionTrace, MTNetConfig, MTNetParams
from .training import AdamState, TrainConfig, adam_step, fit, grid_search, l1_loss

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AttentionTrace", "Checkpoint", "CheckpointError", "ConfigError",
    "DataError", "EncoderConfig", "EncoderParams", "EvalReport", "MTNet",
    "MTNetConfig", "MTNetParams", "MtnetError", "NumericError", "ParamSet",
    "Parameter", "RawSeries", "Scaler", "ShapeError", "SplitSpec", "Tensor",
    "TrainConfig", "TrainingError", "WindowSample", "adam_step", "autograd",
    "backward", "baselines", "chronological_split", "corr", "data", "encode",
    "evaluate_model", "evaluation", "export_traces", "fit", "fit_scaler",
    "grid_search", "l1_loss", "load_checkpoint", "load_matrix", "mae",
    "make_samples", "rmse", "rrse", "save_checkpoint", "synth", "training",
]
