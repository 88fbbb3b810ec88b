from .data import Dataset, SplitSpec, TimeSeriesSample, induce_sparsity, load_ndjson, split, write_ndjson
from .embedding import SensorRegistry
from .errors import BataxisError
from .experiments import AblationSpec, ExperimentConfig
from .logger import RunContextAdapter, get_logger, run_context
from .model import BiAxialTransformer, ModelConfig, build_model, representation_cost
from .synthetic import SyntheticSpec, generate_synthetic
from .train import TrainConfig, evaluate, fit_model, train

__all__ = [
    "AblationSpec",
    "BataxisError",
    "BiAxialTransformer",
    "Dataset",
    "ExperimentConfig",
    "ModelConfig",
    "RunContextAdapter",
    "SensorRegistry",
    "SplitSpec",
    "SyntheticSpec",
    "TimeSeriesSample",
    "TrainConfig",
    "build_model",
    "evaluate",
    "fit_model",
    "generate_synthetic",
    "get_logger",
    "induce_sparsity",
    "load_ndjson",
    "representation_cost",
    "run_context",
    "split",
    "train",
    "write_ndjson",
]
