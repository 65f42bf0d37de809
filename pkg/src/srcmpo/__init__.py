"""Successive randomized compression (SRC) of MPO-MPS products, with the
standard comparison algorithms and a benchmark harness."""

from .baselines import MethodReport, ctc_basic, ctc_randomized, density_matrix, fitting, zip_up
from .estimators import LooEstimate, g_append, loo_error, norm_estimate, qr_append
from .mps import (
    Mpo,
    Mps,
    apply_exact,
    canonicalize,
    inner,
    norm,
    random_mpo,
    random_mps,
    relative_error,
    to_dense,
    to_dense_matrix,
    truncate,
)
from .policy import Adaptive, FixedBond, Oversampled, Tolerance
from .sketch import KhatriRaoSketch, grow, new_sketch, qb_approx
from .src import CapReachedWarning, SrcInfo, randomized_round, src_multiply, src_multiply_sum
from .tensor import count_flops, qr_thin, svd_truncated

__version__ = "0.1.0"
