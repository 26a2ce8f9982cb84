"""phenolab: passive-sensing features and feature-group ablation harness.

Pipeline: raw sensor logs -> canonical event streams (`phenolab.ingest`)
-> daily group-tagged features over three wall-clock periods
(`phenolab.featurize` / `phenolab.registry`) -> stress classification and
PHQ-9 regression tasks (`phenolab.tasks`) -> seeded per-group ablation grids
(`phenolab.runner`) trained with the built-in differentiable core
(`phenolab.nn`). `phenolab.synthgen` produces deterministic synthetic
datasets with a plantable WiFi signal, and `phenolab.cli` wires everything
into reproducible command-line runs.
"""

__version__ = "0.1.0"

from .ingest import Dataset, parse_dataset, validate_stream, write_canonical
from .registry import FeatureRegistry, default_registry
from .featurize import FeatureMatrix, build_feature_matrix, standardize
from .runner import AblationConfig, AblationReport, emit, run_ablation
from .synthgen import SynthConfig, generate

__all__ = [
    "__version__",
    "Dataset",
    "parse_dataset",
    "validate_stream",
    "write_canonical",
    "FeatureRegistry",
    "default_registry",
    "FeatureMatrix",
    "build_feature_matrix",
    "standardize",
    "AblationConfig",
    "AblationReport",
    "run_ablation",
    "emit",
    "SynthConfig",
    "generate",
]
