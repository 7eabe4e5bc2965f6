"""Self-supervised siamese representation learning on multivariate time
series, with a user-classification evaluation harness.

The public surface: an eager numpy autodiff engine (autodiff, optim,
gradcheck), time-series augmentations (augment), corpus and split handling
(data), model assemblies (models), training loops (training), metrics,
experiment orchestration (analysis), and a CLI (cli).
"""

from .augment import AugmentationSpec, Window, sample_positive_pair
from .autodiff import Tensor, backward, stop_gradient
from .config import RunConfig
from .data import (DatasetProfile, SessionRecording, SplitConfig, get_profile,
                   load_corpus, make_scenario, save_corpus, split_users,
                   synth_corpus, window_sessions)
from .errors import (ConfigError, DataError, NumericError, ShapeError,
                     SiamTSError)
from .metrics import PredictionSet, accuracy, collapse_stat, kappa
from .models import (FeatureExtractor, FeatureExtractorSpec, Mlp, MlpSpec,
                     build_classifier, build_mtssl, build_simsiam,
                     load_checkpoint, save_checkpoint)
from .training import (TrainConfig, TrainTrace, pretrain_mtssl, pretrain_simsiam,
                       simsiam_loss, train_augmented, train_classifier,
                       train_supervised, transfer_learn)

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec", "Window", "sample_positive_pair",
    "Tensor", "backward", "stop_gradient",
    "RunConfig",
    "DatasetProfile", "SessionRecording", "SplitConfig", "get_profile",
    "load_corpus", "make_scenario", "save_corpus", "split_users",
    "synth_corpus", "window_sessions",
    "ConfigError", "DataError", "NumericError", "ShapeError", "SiamTSError",
    "PredictionSet", "accuracy", "collapse_stat", "kappa",
    "FeatureExtractor", "FeatureExtractorSpec", "Mlp", "MlpSpec",
    "build_classifier", "build_mtssl", "build_simsiam",
    "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainTrace", "pretrain_mtssl", "pretrain_simsiam",
    "simsiam_loss", "train_augmented", "train_classifier",
    "train_supervised", "transfer_learn",
    "__version__",
]
