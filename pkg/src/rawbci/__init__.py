"""End-to-end MLP classification of raw multichannel biosignal epochs."""

from .data import (
    EpochSet,
    LabelMap,
    Recording,
    SessionSchedule,
    extract_epochs,
    flatten_epochs,
    fuse_modalities,
    load_recording,
    split_stratified,
    write_recording,
)
from .estimator import RawMLPClassifier
from .model import MLP, ModelConfig, build_model, load_checkpoint, save_checkpoint
from .optim import Adam
from .synth import SynthConfig, generate_session, write_dataset
from .training import History, Metrics, TrainConfig, evaluate, export_history, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "EpochSet",
    "History",
    "LabelMap",
    "MLP",
    "Metrics",
    "ModelConfig",
    "RawMLPClassifier",
    "Recording",
    "SessionSchedule",
    "SynthConfig",
    "TrainConfig",
    "build_model",
    "evaluate",
    "export_history",
    "extract_epochs",
    "flatten_epochs",
    "fuse_modalities",
    "generate_session",
    "load_checkpoint",
    "load_recording",
    "save_checkpoint",
    "split_stratified",
    "train",
    "write_dataset",
    "write_recording",
]
