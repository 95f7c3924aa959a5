"""Multi-learner nonparametric iterative teaching in RBF function spaces."""
from ._backend import BACKEND
from .communication import (
    CommMatrix,
    CommPolicy,
    apply_comm,
    comm_gain,
    should_communicate,
    solve_comm_matrix,
)
from .engine import (
    LossSpec,
    SamplingDistribution,
    StepSizes,
    TeachingConfig,
    TeachingExample,
    TeachingRound,
    TeachingRun,
    TraceRecord,
    descent_diagnostic,
    functional_gradient,
    iteration_bound,
    learner_update,
    loss_value_and_grad,
    multi_loss,
    run_sequential,
    run_teaching,
    select_gft,
    select_rft,
)
from .kernels import (
    Grid,
    KernelAtom,
    KernelSpec,
    SampledFunction,
    VectorValuedFunction,
    apply_atom,
    disagreement,
    eval_functional,
    eval_functional_gradient,
    kernel_eval,
)
from .metrics import PsnrResult, psnr, read_trace, write_snapshot, write_trace
from .targets import ImageFunction, SyntheticSpec, load_image, partition, stitch, synth_target

__version__ = "0.1.0"
