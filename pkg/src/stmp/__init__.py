"""Score-based turbo message passing for linear inverse problems y = Ax + n.

The package pairs a linear MMSE module with a score-based MMSE denoiser in a
turbo (extrinsic message passing) loop.  Analytic Gaussian-mixture priors
supply exact scores and oracles, so every identity the algorithm relies on
is testable at desk scale.
"""

__version__ = "0.1.0"

from .driver import SePrediction, StmpConfig, StmpTrace, gmm_channel_mmse, run_stmp, se_predict
from .linops import (
    DenseOperator,
    LinearOperator,
    PartialOrthogonalOperator,
    SvdOperator,
    build_partial_orthogonal,
)
from .lmmse import LmmseProblem, lmmse_exact_joint, lmmse_posterior
from .messages import (
    ClampCounter,
    DampingPolicy,
    GaussianMessage,
    NoInformationGain,
    damp,
    extrinsic,
)
from .priors import GmmPrior, PerturbedGmm, mmse_scalar_oracle, quadrature_oracle
from .score import (
    AffineScore,
    AnalyticGmmScore,
    AnalyticGmmTrace,
    ConstantTrace,
    DsmDataset,
    default_sigma_grid,
    dsm_loss1,
    dsm_loss2,
    dsm_unified,
    fit_affine_score,
    fit_constant_trace,
    tweedie_denoise,
)

__all__ = [
    "AffineScore",
    "AnalyticGmmScore",
    "AnalyticGmmTrace",
    "ClampCounter",
    "ConstantTrace",
    "DampingPolicy",
    "DenseOperator",
    "DsmDataset",
    "GaussianMessage",
    "GmmPrior",
    "LinearOperator",
    "LmmseProblem",
    "NoInformationGain",
    "PartialOrthogonalOperator",
    "PerturbedGmm",
    "SePrediction",
    "StmpConfig",
    "StmpTrace",
    "SvdOperator",
    "build_partial_orthogonal",
    "damp",
    "default_sigma_grid",
    "dsm_loss1",
    "dsm_loss2",
    "dsm_unified",
    "extrinsic",
    "fit_affine_score",
    "fit_constant_trace",
    "gmm_channel_mmse",
    "lmmse_exact_joint",
    "lmmse_posterior",
    "mmse_scalar_oracle",
    "quadrature_oracle",
    "run_stmp",
    "se_predict",
    "tweedie_denoise",
]
