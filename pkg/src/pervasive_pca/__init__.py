"""Score-plot consistency of PCA under pervasive, linearly growing spikes."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    BlockSpec,
    FactorVector,
    SpikeSpec,
    block_eigenvalues,
    materialize_covariance,
    pervasiveness_ratio,
    spike_eigenvalue,
)
from .simulate import Dataset, ScoreDistribution, draw_scores, generate_dataset, population_scores  # noqa: E402
from .pca import PcaResult, dual_gram, pca_decompose  # noqa: E402
from .limit import (  # noqa: E402
    build_w,
    noise_variance_asymptotic,
    pair_decomposition,
    predict,
    predict_dual_eigenvector,
    predict_sample_eigenvalues,
    predict_scores,
    wishart_asymptotics,
)
from .diagnose import (  # noqa: E402
    classify_transform,
    estimate_signals,
    fit_pair_transform,
    required_sample_size,
)
