"""scene-robust: corruption benchmarking and caption-graph fusion models
for indoor scene recognition."""

__version__ = "0.1.0"

from .captions import CaptionRecord, preprocess_caption
from .cooccurrence import CoOccurrenceStats, edge_weights, mine_cooccurrence
from .corruption import (
    CORRUPTION_KINDS,
    SEVERITY_LEVELS,
    apply_corruption,
    load_severity_table,
)
from .dataset import (
    ClassMap,
    Manifest,
    ManifestRecord,
    SplitRules,
    build_manifest,
    generate_corrupted_benchmark,
    load_class_map,
    shipped_class_map,
)
from .embeddings import EmbeddingTable
from .errors import (
    ConfigurationError,
    ContractError,
    DataError,
    EmptyCaptionError,
    FormatError,
    NumericError,
    SceneRobustError,
    UndefinedMetricError,
)
from .estimators import (
    CaptionPreprocessor,
    CoOccurrenceMiner,
    HighLevelGraphClassifier,
    ImageCorruptor,
    KnowledgeGraphBuilder,
    LateFusionClassifier,
)
from .fusion import FeatureSet, fuse, ingest_features, rank_topk, write_features
from .graphs import KnowledgeGraph, build_graph
from .images import ImageBuffer, load_image, save_jpeg, save_png
from .metrics import (
    ErrorTable,
    EvalReport,
    corruption_error,
    mean_ce,
    mean_rce,
    pr_curve,
    relative_corruption_error,
    topk_accuracy,
)
from .nn import GinConfig
from .seeds import derive_seed
from .training import (
    TrainHyper,
    TrainResult,
    train_fusion,
    train_high_level,
)

__all__ = [
    "__version__",
    "CaptionRecord",
    "preprocess_caption",
    "CoOccurrenceStats",
    "edge_weights",
    "mine_cooccurrence",
    "CORRUPTION_KINDS",
    "SEVERITY_LEVELS",
    "apply_corruption",
    "load_severity_table",
    "ClassMap",
    "Manifest",
    "ManifestRecord",
    "SplitRules",
    "build_manifest",
    "generate_corrupted_benchmark",
    "load_class_map",
    "shipped_class_map",
    "EmbeddingTable",
    "ConfigurationError",
    "ContractError",
    "DataError",
    "EmptyCaptionError",
    "FormatError",
    "NumericError",
    "SceneRobustError",
    "UndefinedMetricError",
    "CaptionPreprocessor",
    "CoOccurrenceMiner",
    "HighLevelGraphClassifier",
    "ImageCorruptor",
    "KnowledgeGraphBuilder",
    "LateFusionClassifier",
    "FeatureSet",
    "fuse",
    "ingest_features",
    "rank_topk",
    "write_features",
    "KnowledgeGraph",
    "build_graph",
    "ImageBuffer",
    "load_image",
    "save_jpeg",
    "save_png",
    "ErrorTable",
    "EvalReport",
    "corruption_error",
    "mean_ce",
    "mean_rce",
    "pr_curve",
    "relative_corruption_error",
    "topk_accuracy",
    "GinConfig",
    "derive_seed",
    "TrainHyper",
    "TrainResult",
    "train_fusion",
    "train_high_level",
]
