"""Training neural networks directly on inputs with missing values by learning
per-feature importance for the encoding-layer gradients."""

__version__ = "0.1.0"

from .datasets import (
    ConfigError,
    DataLoadError,
    Dataset,
    SequenceDataset,
    SyntheticSpec,
    load_csv,
    load_mnist_idx,
    split,
    synthetic_mnar,
    synthetic_sequences,
)
from .metrics import EvalResult, average_precision, evaluate, pearson, roc_auc
from .missingness import MaskSpec, apply_mask, missing_rate
from .rl import TrainingDiverged
from .training import (
    TrainConfig,
    TrainReport,
    predict_proba,
    train,
    train_ablation_input,
    train_baseline,
    train_gil,
    train_gil_d,
    train_gil_h,
)
