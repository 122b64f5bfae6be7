"""Significance-guided convolutional image descriptors and L1 retrieval.

The pipeline: run (or load) network activations for an image, find where the
last convolutional block fires above a threshold, project that significance
back onto earlier blocks, and summarize every feature map into one weighted
average per channel.  The resulting descriptors are searched by exact flat
scan under dimension-normalized L1 distance and assessed with RGB color
histograms.
"""

from .config import (
    BlockShape,
    ConfigError,
    NetworkConfig,
    Preprocessing,
    VGG16_CONFIG,
)
from .descriptors import (
    BlockSummary,
    Descriptor,
    DescriptorSet,
    Family,
    block_summary,
    build_descriptors,
)
from .dumpio import DumpFormatError, read_dump, write_dump
from .evaluation import (
    ColorHistogram,
    EvaluationError,
    EvaluationReport,
    color_histogram,
    evaluate,
    histogram_distance,
)
from .images import ImageRecord, load_image, preprocess, read_manifest, write_manifest
from .index import (
    DescriptorIndex,
    FamilyMismatchWarning,
    Hit,
    IndexFormatError,
    QueryResult,
    l1_norm_distance,
    load_index,
    save_index,
    top_k,
    top_k_chunked,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .significance import (
    SignificanceSet,
    back_project_indices,
    build_count_matrix,
    compute_significance,
    threshold_last_block,
)
from .tensors import (
    ActivationError,
    BlockActivations,
    NetworkActivations,
    ShapeMismatch,
    validate_shapes,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationError",
    "BlockActivations",
    "BlockShape",
    "BlockSummary",
    "ColorHistogram",
    "ConfigError",
    "Descriptor",
    "DescriptorIndex",
    "DescriptorSet",
    "DumpFormatError",
    "EvaluationError",
    "EvaluationReport",
    "Family",
    "FamilyMismatchWarning",
    "Hit",
    "ImageRecord",
    "IndexFormatError",
    "KERNEL_BACKEND",
    "NetworkActivations",
    "NetworkConfig",
    "Preprocessing",
    "QueryResult",
    "ShapeMismatch",
    "SignificanceSet",
    "VGG16_CONFIG",
    "back_project_indices",
    "block_summary",
    "build_count_matrix",
    "build_descriptors",
    "color_histogram",
    "compute_significance",
    "evaluate",
    "histogram_distance",
    "l1_norm_distance",
    "load_image",
    "load_index",
    "preprocess",
    "read_dump",
    "read_manifest",
    "save_index",
    "threshold_last_block",
    "top_k",
    "top_k_chunked",
    "validate_shapes",
    "write_dump",
    "write_manifest",
    "__version__",
]
