"""Knowledge-graph link prediction with a Tucker-decomposition bilinear model."""

from .checkpoint import load_checkpoint, save_checkpoint
from .cores import (
    build_complex_core,
    build_distmult_core,
    build_simple_core,
    rescal_score,
)
from .data import (
    FilterIndex,
    TripleStore,
    Vocabulary,
    augment_reciprocal,
    build_filter_index,
    generate_synthetic,
    load_triples,
    make_1n_batches,
    save_triples,
)
from .evaluate import EvalReport, evaluate, filtered_rank
from .expressive import construct_full_expressive, verify_separation
from .model import (
    BatchNorm,
    ModelKind,
    TuckerModel,
    init_model,
    param_count,
    relation_matrix,
    score_all_objects,
    score_triple,
    symmetry_score,
)
from .tensor import ShapeError, matmul, mode_n_product, mode_n_vec_product, transpose
from .train import (
    AdamState,
    GradientSet,
    TrainConfig,
    adam_step,
    bce_loss,
    fit,
    forward_backward,
    preset_config,
    smooth_labels,
)

__version__ = "0.1.0"
