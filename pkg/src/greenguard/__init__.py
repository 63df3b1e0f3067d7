"""Zero-trust IoT network monitoring: protocol filter, flow features, autoencoder
zero-day detection, sensor-to-hub transport and energy accounting."""

from ._accel import BACKEND
from .autoenc import AutoencoderModel, Hyperparams, load_model, save_model, train
from .datasets import LabeledDataset, load_csv, split
from .detector import DetectorConfig, classify, evaluate
from .errors import GreenGuardError
from .schema import FEATURE_NAMES, AttackClass

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FEATURE_NAMES", "AttackClass", "AutoencoderModel", "DetectorConfig",
    "GreenGuardError", "Hyperparams", "LabeledDataset", "classify", "evaluate", "load_csv",
    "load_model", "save_model", "split", "train",
]
