"""Representation Jensen-Shannon divergence via covariance operators of Fourier features."""

__version__ = "0.1.0"

from .data import CauchySpec, SampleSet, cauchy_jsd_closed_form, location_for_target_jsd
from .divergence import (
    CovariancePair,
    cov_from_features,
    kernel_matrix_gaussian,
    rjsd_cov,
    rjsd_from_gram,
    rjsd_kernel,
    rjsd_mutual_info,
    upper_bound,
)
from .estimate import EstimatorConfig, estimate_jsd, estimate_jsd_ema
from .features import DeepFourierNetwork, build_dffn, combined_mapping, dffn_forward, map_rff, sample_rff
from .spectral import eigh_psd, vn_entropy
