"""Copy detection pattern authentication with per-pattern binary channels."""

from .types import (
    BinaryImage, ChannelObservations, Codebook, GrayImage, ModelConfig, ProbeFeatures, validate,
)
from .patterns import (
    encode_pattern, estimate_codebook, extract_channels, fuse_multishot, probe_features,
)
from .stats import (
    ChannelErrorProfile, cross_entropy_bernoulli, gamma_crit, kl_bernoulli, np_log_ratio,
    np_statistic, optimal_threshold, p_false_accept, p_miss, pll_score, rho_for_gamma,
)

__version__ = "0.1.0"
