from .archive import WeightArchive, load_archive, save_archive
from .layers import LstmParams, conv2d_forward, dense_forward, lstm_forward
from .models import ARCHITECTURES, ModelSpec, init_archive, run_model

__all__ = [
    "ARCHITECTURES",
    "LstmParams",
    "ModelSpec",
    "WeightArchive",
    "conv2d_forward",
    "dense_forward",
    "init_archive",
    "load_archive",
    "lstm_forward",
    "run_model",
    "save_archive",
]
