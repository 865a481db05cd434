"""otkit: entropic optimal transport with hand-derived gradients.

``OTKIT_THREADS`` caps the thread pools of the BLAS backend.  It must be
set before NumPy is first imported in the process to take effect.
"""
import os as _os

_threads = _os.environ.get("OTKIT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .core import (  # noqa: E402
    CostKernelPair,
    Coupling,
    SolveOptions,
    build_kernel,
    diag_scale,
    entropic_loss,
    entropy,
    min_col,
    min_row,
    residual_matrix,
    soft_min,
    soft_min_grad,
    softmax_jacobian_vec,
    softmax_mat,
    softmax_vec,
    validate_histogram,
    validate_histogram_batch,
)
from .sinkhorn import ScalingState, SinkhornResult, solve_log, solve_parallel, solve_vanilla  # noqa: E402
from .sinkhorn_grad import GradResult, solve_log_with_grad, solve_vanilla_with_grad  # noqa: E402
from .barycenter import BarycenterProblem, barycenter_log, barycenter_parallel  # noqa: E402
from .barycenter_grad import (  # noqa: E402
    BarycenterGradResult,
    barycenter_log_grad,
    barycenter_parallel_grad,
)
from .optim import OptimizerState, adam_step, adamw_step, minibatch_average, sgd_step  # noqa: E402
from .wdl import WdlConfig, WdlParams, init_params, reconstruct, wdl_step, wdl_train  # noqa: E402

__version__ = "0.1.0"
