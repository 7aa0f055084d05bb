"""Quaternion low-rank recovery with the nuclear-over-Frobenius norm ratio (QNOF)."""

from .estimators import QNOFCompletion, QNOFRobustCompletion, QNOFRobustPCA
from .imaging import ColorImage, CorruptionSpec, corrupt_image, image_to_quat, psnr, quat_to_image, ssim
from .prox import prox_sigma_l1l2, qnof_prox
from .qsvd import QsvdFactors, nuclear_norm, numeric_rank, qnof_value, qsvd, singular_values
from .quaternion import Quaternion, QuatMatrix
from .solvers import SolverParams, check_convergence_limits, quat_soft_threshold, solve_mc, solve_rmc, solve_rpca

__version__ = "0.1.0"

__all__ = [
    "ColorImage",
    "CorruptionSpec",
    "QNOFCompletion",
    "QNOFRobustCompletion",
    "QNOFRobustPCA",
    "QsvdFactors",
    "QuatMatrix",
    "Quaternion",
    "SolverParams",
    "check_convergence_limits",
    "corrupt_image",
    "image_to_quat",
    "nuclear_norm",
    "numeric_rank",
    "prox_sigma_l1l2",
    "psnr",
    "qnof_prox",
    "qnof_value",
    "qsvd",
    "quat_soft_threshold",
    "quat_to_image",
    "singular_values",
    "solve_mc",
    "solve_rmc",
    "solve_rpca",
    "ssim",
]
