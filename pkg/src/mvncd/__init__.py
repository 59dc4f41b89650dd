"""Multi-view novel class discovery via joint factorization with learned
view weights."""

from mvncd.dataset import (
    DatasetError,
    MultiViewDataset,
    SyntheticSpec,
    ViewMatrix,
    encode_onehot,
    generate_synthetic,
    load_dataset,
    normalize_features,
    split_known_novel,
    write_dataset,
)
from mvncd.metrics import clustering_accuracy, nmi, purity
from mvncd.solver import FitResult, ModelState, SolverConfig, fit

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "MultiViewDataset",
    "SyntheticSpec",
    "ViewMatrix",
    "encode_onehot",
    "generate_synthetic",
    "load_dataset",
    "normalize_features",
    "split_known_novel",
    "write_dataset",
    "clustering_accuracy",
    "nmi",
    "purity",
    "FitResult",
    "ModelState",
    "SolverConfig",
    "fit",
    "__version__",
]
