"""Indoor BLE RSSI localization robust to smartphone heterogeneity."""

from .baseline import FingerprintDb, KnnLocalizer, knn_predict, knn_predict_many
from .core import (
    Brand,
    DataHygieneError,
    IngestError,
    LabeledSample,
    Location,
    PhoneModelId,
    RssiWindow,
    Run,
    Split,
    UnlabeledSample,
    ingest_run,
    make_windows,
    restrict_dataset,
    windows_from_runs,
)
from .eval import EvalReport, absolute_error, evaluate, export_cdf
from .model import Localizer, LocNet, LossWeights, TransNet, loss_loc, loss_ps, loss_ssl, loss_ts
from .stats import StatMatrix, compute_stat_matrix, receiver_stats
from .train import (
    ScenarioConfig,
    TrainReport,
    TrainingAborted,
    train_scenario1,
    train_scenario2,
    train_scenario3,
    tune_weights,
)

__version__ = "0.1.0"

__all__ = [
    "Brand",
    "DataHygieneError",
    "EvalReport",
    "FingerprintDb",
    "IngestError",
    "KnnLocalizer",
    "LabeledSample",
    "LocNet",
    "Localizer",
    "Location",
    "LossWeights",
    "PhoneModelId",
    "RssiWindow",
    "Run",
    "ScenarioConfig",
    "Split",
    "StatMatrix",
    "TrainReport",
    "TrainingAborted",
    "TransNet",
    "UnlabeledSample",
    "absolute_error",
    "compute_stat_matrix",
    "evaluate",
    "export_cdf",
    "ingest_run",
    "knn_predict",
    "knn_predict_many",
    "loss_loc",
    "loss_ps",
    "loss_ssl",
    "loss_ts",
    "make_windows",
    "receiver_stats",
    "restrict_dataset",
    "train_scenario1",
    "train_scenario2",
    "train_scenario3",
    "tune_weights",
    "windows_from_runs",
]
