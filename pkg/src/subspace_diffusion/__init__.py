"""Score-based diffusion on data supported by a low-dimensional linear subspace.

Forward OU process, exact and quadrature score oracles, an encoder-decoder
score network trained by denoising score matching, the discretised backward
sampler, a grid approximant built from trapezoids and the metrics used to
judge subspace and distribution recovery.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    DivergenceError,
    DomainError,
    InvariantError,
    UnsupportedOracleError,
)
from .sde_core import TimeSchedule, alpha_h, forward_kernel_sample, noise_score_target  # noqa: E402
from .subspace_data import (  # noqa: E402
    LatentDistribution,
    SubspaceModel,
    latent_moments,
    random_orthonormal,
    sample_data,
)
from .oracle_scores import gaussian_score, mixture_score, oracle_score, quadrature_score  # noqa: E402
from .score_network import MlpConfig, ScoreNetwork, init_network  # noqa: E402
from .trainer import TrainConfig, train  # noqa: E402
from .sampler import backward_sample  # noqa: E402
from .eval_metrics import procrustes_align, subspace_error  # noqa: E402

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "InvariantError",
    "UnsupportedOracleError",
    "TimeSchedule",
    "alpha_h",
    "forward_kernel_sample",
    "noise_score_target",
    "LatentDistribution",
    "SubspaceModel",
    "latent_moments",
    "random_orthonormal",
    "sample_data",
    "gaussian_score",
    "mixture_score",
    "oracle_score",
    "quadrature_score",
    "MlpConfig",
    "ScoreNetwork",
    "init_network",
    "TrainConfig",
    "train",
    "backward_sample",
    "procrustes_align",
    "subspace_error",
]
