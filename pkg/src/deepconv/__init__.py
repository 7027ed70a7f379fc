"""deepconv: zero-padded 1-D convolutional networks, built and trained exactly.

The package covers the full life cycle of these networks:

- `seqconv`: sequences, convolution, Toeplitz matrices, downsampling.
- `factorize`: polynomial-symbol factorization of long filters into short ones.
- `dcnn`: the network data model, forward evaluation, serialization.
- `capacity`: pseudo-dimension / covering / learning-rate bound evaluators.
- `deepen`: constructive deepening of a teacher network into a student that
  interpolates a dataset while preserving the teacher off a thin slab.
- `trainer`: squared-loss training with exact, weight-shared backpropagation.
- `harness`: simulated-data experiments and the end-to-end pipeline.
"""

from .capacity import (
    ArchSpec,
    BoundReport,
    covering_log_bound,
    dcnn_arch_spec,
    evaluate_bounds,
    pdim_dcnn,
    pdim_general,
    r_constant,
    rate_bound_theorem2,
)
from .dcnn import (
    BiasVector,
    ConvLayer,
    Dcnn,
    count_free_params,
    deserialize,
    forward,
    forward_batch,
    serialize,
    truncate,
)
from .deepen import (
    Block,
    Dataset,
    InterpolationPlan,
    build_block,
    embed_teacher,
    in_slab,
    interpolate,
    linear_feature_block,
    normalize_teacher,
    replication_block,
    stack_blocks,
)
from .errors import NumericalError, ValidationError
from .factorize import (
    FactorizationResult,
    SymbolPoly,
    factor_sequence,
    find_roots,
    replication_roots,
    replication_sequence,
)
from .harness import (
    PipelineReport,
    SimSpec,
    experiment_csv,
    pipeline_csv,
    regression_values,
    render_experiment_figure,
    render_pipeline_figure,
    run_experiment,
    run_pipeline,
    simulate,
    write_experiment_csv,
    write_pipeline_csv,
)
from .seqconv import (
    ConvMatrix,
    FilterSeq,
    apply_conv,
    as_filter,
    convolve_seq,
    downsample,
    materialize,
)
from .trainer import (
    GradientPack,
    OptimizerSpec,
    TrainConfig,
    TrainReport,
    fit,
    grad,
    init_net,
    loss,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "NumericalError",
    "ValidationError",
    # seqconv
    "FilterSeq",
    "ConvMatrix",
    "as_filter",
    "convolve_seq",
    "apply_conv",
    "materialize",
    "downsample",
    # factorize
    "SymbolPoly",
    "FactorizationResult",
    "find_roots",
    "factor_sequence",
    "replication_sequence",
    "replication_roots",
    # dcnn
    "BiasVector",
    "ConvLayer",
    "Dcnn",
    "forward",
    "forward_batch",
    "truncate",
    "count_free_params",
    "serialize",
    "deserialize",
    # capacity
    "ArchSpec",
    "BoundReport",
    "dcnn_arch_spec",
    "r_constant",
    "pdim_general",
    "pdim_dcnn",
    "covering_log_bound",
    "rate_bound_theorem2",
    "evaluate_bounds",
    # deepen
    "Dataset",
    "InterpolationPlan",
    "Block",
    "build_block",
    "linear_feature_block",
    "embed_teacher",
    "replication_block",
    "normalize_teacher",
    "interpolate",
    "in_slab",
    "stack_blocks",
    # trainer
    "OptimizerSpec",
    "TrainConfig",
    "TrainReport",
    "GradientPack",
    "init_net",
    "loss",
    "grad",
    "fit",
    # harness
    "SimSpec",
    "PipelineReport",
    "simulate",
    "regression_values",
    "run_experiment",
    "experiment_csv",
    "write_experiment_csv",
    "render_experiment_figure",
    "run_pipeline",
    "pipeline_csv",
    "write_pipeline_csv",
    "render_pipeline_figure",
]
