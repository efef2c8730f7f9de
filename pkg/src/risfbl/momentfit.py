"""Moment-matched Gamma approximations for the cascade and RIS-side sums.

A variate with mean mu and variance sigma_sq is replaced by a Gamma law with
shape mu^2/sigma_sq and scale sigma_sq/mu. Three variates are fitted:

* cascade-uniform     S = sum_n |h_bn,n| |h_nd,n|
* cascade-nonuniform  S = sum_n w_n |h_bn,n| |h_nd,n| (weights set by mode)
* rispower-nonuniform Z = sum_n beta_n |h_nd,n|^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import NakagamiLink, RISConfig

PARAM_MODES = ("derived", "paper")


@dataclass(frozen=True)
class GammaFit:
    mu: float
    sigma_sq: float
    shape: float
    scale: float
    kind: str

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"degenerate Gamma fit: shape={self.shape}, scale={self.scale}")

    @classmethod
    def from_moments(cls, mu: float, sigma_sq: float, kind: str) -> "GammaFit":
        if not (mu > 0 and sigma_sq > 0):
            raise ValueError(f"moments must be positive, got mu={mu}, sigma_sq={sigma_sq}")
        return cls(mu, sigma_sq, mu * mu / sigma_sq, sigma_sq / mu, kind)

    def cdf(self, v):
        """Gamma CDF of the fitted variate."""
        from scipy import special

        return special.gammainc(self.shape, np.asarray(v, dtype=float) / self.scale)


def cascade_element_moments(link_bn: NakagamiLink, link_nd: NakagamiLink) -> tuple[float, float]:
    """Mean and variance of one product |h_bn| |h_nd|."""
    log_ratio = (math.lgamma(link_bn.m + 0.5) - math.lgamma(link_bn.m)
                 + math.lgamma(link_nd.m + 0.5) - math.lgamma(link_nd.m))
    ratio = math.exp(log_ratio)
    prod_omega = link_bn.omega * link_nd.omega
    mean = ratio * math.sqrt(prod_omega / (link_bn.m * link_nd.m))
    var = prod_omega * (1.0 - ratio * ratio / (link_bn.m * link_nd.m))
    return mean, var


def fit_cascade_uniform(link_bn: NakagamiLink, link_nd: NakagamiLink, n_elements: int) -> GammaFit:
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    mean, var = cascade_element_moments(link_bn, link_nd)
    return GammaFit.from_moments(n_elements * mean, n_elements * var, "cascade-uniform")


def fit_cascade_nonuniform(link_bn: NakagamiLink, link_nd: NakagamiLink, ris: RISConfig,
                           mode: str = "derived") -> GammaFit:
    """Fit of the beta-weighted cascade sum.

    ``derived``: moments of sum sqrt(beta_n) |h_bn||h_nd|, i.e. mean weights
    sqrt(beta_n), variance weights beta_n, shape = mu^2/sigma^2.
    ``paper``: mean weights beta_n, variance weights beta_n^2, shape =
    mu/sigma^2 as printed (scale sigma^2/mu in both).
    """
    mean, var = cascade_element_moments(link_bn, link_nd)
    beta = ris.beta_array
    if mode == "derived":
        mu = mean * math.fsum(np.sqrt(beta))
        s2 = var * math.fsum(beta)
        return GammaFit.from_moments(mu, s2, "cascade-nonuniform")
    if mode == "paper":
        mu = mean * math.fsum(beta)
        s2 = var * math.fsum(beta ** 2)
        if not (mu > 0 and s2 > 0):
            raise ValueError("moments must be positive")
        return GammaFit(mu, s2, mu / s2, s2 / mu, "cascade-nonuniform")
    raise ValueError(f"unknown parameter mode {mode!r}")


def fit_rispower_nonuniform(link_nd: NakagamiLink, ris: RISConfig) -> GammaFit:
    """Fit of Z = sum beta_n |h_nd,n|^2 (exact Gamma when beta is uniform)."""
    beta = ris.beta_array
    mu = math.fsum(beta) * link_nd.omega
    s2 = math.fsum(beta ** 2) * link_nd.omega ** 2 / link_nd.m
    return GammaFit.from_moments(mu, s2, "rispower-nonuniform")


def integer_series_order(shape: float) -> int:
    """Nearest positive integer to ``shape`` (halves round away from zero)."""
    if not shape > 0:
        raise ValueError("shape must be positive")
    return max(1, int(math.floor(shape + 0.5)))
