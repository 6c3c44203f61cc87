"""Self-supervised embeddings for heterogeneous graphs.

Masked autoencoding over metapath adjacency views: an attention encoder
is trained to rebuild masked edges, restore masked attributes, and
predict walk-based positional features, then frozen and used as an
embedding function. The top-level estimators follow the scikit-learn
fit/transform convention; the ``hgmae`` command line drives the same
code end to end.
"""

from .encdec import ModelDims, ModelParams, load_params, save_params
from .errors import ConfigError, DataError, DivergenceError
from .evaluation import (
    EvalReport,
    Split,
    edge_auc,
    kmeans_cluster,
    linear_probe,
    make_splits,
    nmi_ari,
)
from .hetgraph import (
    HeteroGraph,
    Metapath,
    MetapathView,
    SyntheticSpec,
    build_metapath_adjacency,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .masking import MaskSchedule, mask_edges, plan_attribute_mask, schedule_rate
from .mp2vec import Metapath2Vec, WalkConfig, positional_features
from .objectives import LossReport, LossWeights
from .trainer import HGMAE, TrainConfig, TrainState, embed, fit
from .rng import derive_rng

__version__ = "0.1.0"

__all__ = [
    "HGMAE",
    "Metapath2Vec",
    "HeteroGraph",
    "Metapath",
    "MetapathView",
    "SyntheticSpec",
    "MaskSchedule",
    "WalkConfig",
    "TrainConfig",
    "TrainState",
    "LossWeights",
    "LossReport",
    "ModelDims",
    "ModelParams",
    "EvalReport",
    "Split",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "build_metapath_adjacency",
    "generate_synthetic",
    "load_dataset",
    "save_dataset",
    "load_params",
    "save_params",
    "mask_edges",
    "plan_attribute_mask",
    "schedule_rate",
    "positional_features",
    "fit",
    "embed",
    "make_splits",
    "linear_probe",
    "kmeans_cluster",
    "nmi_ari",
    "edge_auc",
    "derive_rng",
    "__version__",
]
