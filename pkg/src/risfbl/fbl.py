"""Closed-form finite-blocklength reliability of the RIS link.

The BLER is E[Q((C(g) - r) / sqrt(V(g)/n))]. The closed forms replace Q by
a three-piece linear function of the SINR, collapse the resulting integral
of the SINR CDF with a single midpoint, and write the CDF at the midpoint
as 1 - (1 - v1)(1 - v2): v2 is the noise-free term (cascade Gamma fit),
v1 the RIS-noise-limited term (cascade fit mixed over the RIS-side power).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .channel import NakagamiLink, RISConfig
from .momentfit import (
    PARAM_MODES,
    GammaFit,
    fit_cascade_nonuniform,
    fit_cascade_uniform,
    fit_rispower_nonuniform,
    integer_series_order,
)
from .specfun import (
    LOG_SQRT_PI,
    MeijerG2112Args,
    log_meijer_g_2112,
    log_regularized_lower_gamma,
)

log = logging.getLogger(__name__)

LOG2E = math.log2(math.e)
NOISE_MODES = ("with-ris-noise", "no-ris-noise")
MIN_BLOCKLENGTH = 100


class ConfigurationError(ValueError):
    """Parameters outside the region where the closed forms are defined."""


def capacity(gamma):
    """Shannon capacity log2(1 + gamma) in bits per channel use."""
    return np.log2(1.0 + np.asarray(gamma, dtype=float)) if np.ndim(gamma) else math.log2(1.0 + gamma)


def dispersion(gamma):
    """Channel dispersion (1 - (1 + gamma)^-2) (log2 e)^2."""
    g = np.asarray(gamma, dtype=float)
    out = -np.expm1(-2.0 * np.log1p(g)) * LOG2E ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FBLParams:
    """Blocklength (channel uses) and payload (bits) plus derived constants."""

    blocklength_xi: int
    payload_bits_theta: float

    def __post_init__(self):
        if not self.blocklength_xi > MIN_BLOCKLENGTH:
            raise ConfigurationError(
                f"normal approximation needs blocklength > {MIN_BLOCKLENGTH}, got {self.blocklength_xi}"
            )
        if not self.payload_bits_theta > 0:
            raise ConfigurationError("payload must be positive")

    @property
    def rate_r(self) -> float:
        return self.payload_bits_theta / self.blocklength_xi

    @property
    def lambda_cap(self) -> float:
        return 2.0 ** self.rate_r - 1.0

    @property
    def varpi(self) -> float:
        return 1.0 / (2.0 * math.pi * math.sqrt(2.0 ** (2.0 * self.rate_r) - 1.0))

    @property
    def half_width(self) -> float:
        return 1.0 / (2.0 * self.varpi * math.sqrt(self.blocklength_xi))

    @property
    def eps1(self) -> float:
        return self.lambda_cap - self.half_width

    @property
    def eps2(self) -> float:
        return self.lambda_cap + self.half_width

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.eps1 + self.eps2)

    @property
    def slope(self) -> float:
        """varpi * sqrt(Xi), the magnitude of the linear piece's slope."""
        return self.varpi * math.sqrt(self.blocklength_xi)

    def check_closed_form(self) -> None:
        if not self.eps1 > 0:
            raise ConfigurationError(
                f"eps1={self.eps1:.4g} <= 0 (Xi={self.blocklength_xi}, theta={self.payload_bits_theta}); "
                "closed forms undefined"
            )


def linearized_q(gamma, fbl: FBLParams):
    """Piecewise-linear surrogate of the normal-approximation error curve."""
    g = np.asarray(gamma, dtype=float)
    out = np.clip(0.5 - fbl.slope * (g - fbl.lambda_cap), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def normal_approx_error(gamma, fbl: FBLParams):
    """Q((C(g) - r) / sqrt(V(g)/Xi)) for instantaneous SINR g (vectorized)."""
    from .specfun import gaussian_q

    g = np.asarray(gamma, dtype=float)
    v = dispersion(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (capacity(g) - fbl.rate_r) / np.sqrt(v / fbl.blocklength_xi)
    # zero dispersion only at g = 0, where the block always fails
    arg = np.where(v > 0, arg, -np.inf)
    return gaussian_q(arg)


# --------------------------------------------------------------------------
# Closed-form inputs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedFormInputs:
    """Everything a closed-form BLER evaluation needs.

    ``noise_ratio`` is sigma_r^2 / sigma_d^2 as it enters the SINR. The psi
    of the uniform expressions is beta * noise_ratio; the psi-hat of the
    non-uniform ones is noise_ratio * sum(beta).
    """

    rho: float
    noise_ratio: float
    link_bn: NakagamiLink
    link_nd: NakagamiLink
    ris: RISConfig
    fbl: FBLParams
    noise_mode: str = "with-ris-noise"
    param_mode: str = "derived"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.noise_ratio >= 0:
            raise ValueError("noise ratio must be >= 0")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.param_mode not in PARAM_MODES:
            raise ValueError(f"param_mode must be one of {PARAM_MODES}")

    @property
    def psi(self) -> float:
        if not self.ris.uniform():
            raise ValueError("psi is defined for uniform surfaces only")
        return self.ris.beta[0] * self.noise_ratio

    @property
    def psi_hat(self) -> float:
        return self.noise_ratio * math.fsum(self.ris.beta)

    @property
    def with_noise(self) -> bool:
        return self.noise_mode == "with-ris-noise" and self.noise_ratio > 0

    @cached_property
    def fit_uniform(self) -> GammaFit:
        return fit_cascade_uniform(self.link_bn, self.link_nd, self.ris.n_elements)

    @cached_property
    def fit_cascade(self) -> GammaFit:
        return fit_cascade_nonuniform(self.link_bn, self.link_nd, self.ris, self.param_mode)

    @cached_property
    def fit_rispower(self) -> GammaFit:
        return fit_rispower_nonuniform(self.link_nd, self.ris)

    def with_rho(self, rho: float) -> "ClosedFormInputs":
        import dataclasses

        return dataclasses.replace(self, rho=rho)


@dataclass(frozen=True)
class BlerTerms:
    """Closed-form BLER with its two CDF terms and the pre-clamp value."""

    v1: float
    v2: float
    raw: float

    @property
    def value(self) -> float:
        return min(1.0, max(0.0, self.raw))


def _combine(fbl: FBLParams, v1: float, v2: float) -> BlerTerms:
    raw = fbl.slope * (fbl.eps2 - fbl.eps1) * (v1 + v2 - v1 * v2)
    if not -0.05 <= raw <= 1.05:
        log.warning("closed-form BLER pre-clamp value %.6g outside [-0.05, 1.05]", raw)
    elif not 0.0 <= raw <= 1.0:
        log.debug("clamping closed-form BLER %.17g", raw)
    return BlerTerms(v1, v2, raw)


# --------------------------------------------------------------------------
# RIS-noise term: E_Z[P(K, c sqrt(Z))] with Z ~ Gamma(shape_z, scale_z)
# --------------------------------------------------------------------------

def _log_noise_term(i: int, c: float, shape_z: float, scale_z: float, scale_power: float) -> float:
    x = c * c * scale_z / 4.0
    log_g = log_meijer_g_2112(MeijerG2112Args(x, 1.0 - shape_z - 0.5 * i))
    return (-math.lgamma(i + 1.0) - LOG_SQRT_PI + scale_power * math.log(scale_z)
            + i * math.log(c) - math.lgamma(shape_z) + log_g)


def noise_limited_cdf(order: int, c: float, shape_z: float, scale_z: float,
                      literal_prefactor: bool = False) -> float:
    """1 - sum_{i<order} (1/(i! sqrt(pi))) scale^(i/2) c^i / Gamma(shape) G^{2,1}_{1,2}(...).

    Equals E[P(order, c sqrt(Z))]. The i-th summand is E[Poisson_i(c sqrt Z)]
    and all summands over i >= 0 add to one, so when the head sum is close
    to one the tail sum from ``order`` upward is returned instead; same
    value, no cancellation. ``literal_prefactor`` swaps scale^(i/2) for
    scale^shape, the alternative prefactor; the tail identity then does not
    hold and the head form is used as written.
    """
    if c == 0.0:
        return 0.0
    if literal_prefactor:
        head = math.fsum(math.exp(_log_noise_term(i, c, shape_z, scale_z, shape_z))
                         for i in range(order))
        return 1.0 - head
    head_terms = [math.exp(_log_noise_term(i, c, shape_z, scale_z, 0.5 * i)) for i in range(order)]
    head = math.fsum(head_terms)
    if head < 0.5:
        return 1.0 - head
    tail_terms = []
    i = order
    while True:
        t = math.exp(_log_noise_term(i, c, shape_z, scale_z, 0.5 * i))
        tail_terms.append(t)
        i += 1
        total = math.fsum(tail_terms)
        if t <= 1e-17 * total or (total == 0.0 and i > order + 50):
            break
        if i > order + 100_000:
            raise ArithmeticError("RIS-noise tail series did not converge")
    return total


# --------------------------------------------------------------------------
# Finite-SNR closed forms
# --------------------------------------------------------------------------

def bler_uniform_terms(inp: ClosedFormInputs) -> BlerTerms:
    if not inp.ris.uniform():
        raise ValueError("bler_uniform needs equal reflection coefficients")
    fbl = inp.fbl
    fbl.check_closed_form()
    fit = inp.fit_uniform
    beta = inp.ris.beta[0]
    if beta == 0.0:
        return _combine(fbl, 1.0, 1.0)
    lam = fbl.midpoint
    v2 = math.exp(log_regularized_lower_gamma(fit.shape, math.sqrt(lam / (inp.rho * beta)) / fit.scale))
    v1 = 0.0
    if inp.with_noise:
        nd = inp.link_nd
        c = math.sqrt(lam * inp.psi / (inp.rho * beta)) / fit.scale
        v1 = noise_limited_cdf(integer_series_order(fit.shape), c,
                               nd.m * inp.ris.n_elements, nd.omega / nd.m,
                               literal_prefactor=inp.param_mode == "paper")
    return _combine(fbl, v1, v2)


def bler_uniform(inp: ClosedFormInputs) -> float:
    """Closed-form BLER for equal reflection coefficients, clamped to [0, 1]."""
    return bler_uniform_terms(inp).value


def _nonuniform_noise_factor(inp: ClosedFormInputs) -> float:
    # derived: Z already carries beta_n, so only sigma_r^2/sigma_d^2 multiplies it
    return inp.noise_ratio if inp.param_mode == "derived" else inp.psi_hat


def bler_nonuniform_terms(inp: ClosedFormInputs) -> BlerTerms:
    fbl = inp.fbl
    fbl.check_closed_form()
    fit = inp.fit_cascade
    lam = fbl.midpoint
    v2 = math.exp(log_regularized_lower_gamma(fit.shape, math.sqrt(lam / inp.rho) / fit.scale))
    v1 = 0.0
    if inp.with_noise:
        z = inp.fit_rispower
        c = math.sqrt(lam * _nonuniform_noise_factor(inp) / inp.rho) / fit.scale
        v1 = noise_limited_cdf(integer_series_order(fit.shape), c, z.shape, z.scale)
    return _combine(fbl, v1, v2)


def bler_nonuniform(inp: ClosedFormInputs) -> float:
    """Closed-form BLER for per-element reflection coefficients, clamped."""
    return bler_nonuniform_terms(inp).value


# --------------------------------------------------------------------------
# High-SNR closed forms (log domain)
# --------------------------------------------------------------------------

def _log_one_minus_product(la: float, lb: float) -> float:
    """log(1 - (1 - a)(1 - b)) from log a, log b."""
    if la == -math.inf:
        return lb
    if lb == -math.inf:
        return la
    a, b = math.exp(min(la, 700.0)), math.exp(min(lb, 700.0))
    if a < 1.0:
        return float(np.logaddexp(la, lb + math.log1p(-a)))
    if b < 1.0:
        return float(np.logaddexp(lb, la + math.log1p(-b)))
    val = a + b - a * b
    return math.log(val) if val > 0 else -math.inf


@dataclass(frozen=True)
class AsymptoticTerms:
    """High-SNR BLER in log form.

    The two terms stand in for CDF values, so each is capped at 1 before
    they are combined; ``log_unclamped`` keeps log(K (v1 + v2)) from the raw
    power laws for locating curve crossings below the cap.
    """

    log_v1: float
    log_v2: float
    log_raw: float
    log_unclamped: float

    @property
    def raw(self) -> float:
        return math.exp(min(self.log_raw, 700.0))

    @property
    def value(self) -> float:
        return min(1.0, self.raw)


def _asymptotic(fbl: FBLParams, log_v1: float, log_v2: float) -> AsymptoticTerms:
    log_k = math.log(fbl.slope * (fbl.eps2 - fbl.eps1))
    la, lb = min(log_v1, 0.0), min(log_v2, 0.0)
    return AsymptoticTerms(log_v1, log_v2, log_k + _log_one_minus_product(la, lb),
                           log_k + float(np.logaddexp(log_v1, log_v2)))


def _log_small_arg_cdf(shape: float, log_arg: float) -> float:
    # gamma(a, z)/Gamma(a) ~ z^a / (a Gamma(a)) as z -> 0
    return shape * log_arg - math.log(shape) - math.lgamma(shape)


def bler_asymptotic_uniform_terms(inp: ClosedFormInputs) -> AsymptoticTerms:
    fbl = inp.fbl
    fbl.check_closed_form()
    fit = inp.fit_uniform
    d, zeta = fit.shape, fit.scale
    beta = inp.ris.beta[0]
    lam = fbl.midpoint
    if inp.param_mode == "paper":
        log_arg2 = 0.5 * math.log(lam * inp.psi / (inp.rho * beta)) - math.log(zeta)
    else:
        log_arg2 = 0.5 * math.log(lam / (inp.rho * beta)) - math.log(zeta)
    log_v2 = _log_small_arg_cdf(d, log_arg2)
    log_v1 = -math.inf
    if inp.with_noise:
        nd = inp.link_nd
        shape_z = nd.m * inp.ris.n_elements
        log_c = 0.5 * math.log(lam * inp.psi / (inp.rho * beta)) - math.log(zeta)
        # derived: same integer order as the finite-SNR series, whose limit this is
        k = d if inp.param_mode == "paper" else float(integer_series_order(d))
        log_v1 = (-0.5 * k * math.log(nd.m / nd.omega) + math.lgamma(shape_z + 0.5 * k)
                  - math.lgamma(shape_z) + _log_small_arg_cdf(k, log_c))
    return _asymptotic(fbl, log_v1, log_v2)


def bler_asymptotic_uniform(inp: ClosedFormInputs) -> float:
    """High-SNR BLER for equal coefficients (clamped at 1)."""
    return bler_asymptotic_uniform_terms(inp).value


def bler_asymptotic_nonuniform_terms(inp: ClosedFormInputs) -> AsymptoticTerms:
    fbl = inp.fbl
    fbl.check_closed_form()
    fit = inp.fit_cascade
    d, zeta = fit.shape, fit.scale
    lam = fbl.midpoint
    paper = inp.param_mode == "paper"
    if paper:
        log_arg2 = 0.5 * math.log(lam * inp.psi_hat / inp.rho) - math.log(zeta)
    else:
        log_arg2 = 0.5 * math.log(lam / inp.rho) - math.log(zeta)
    log_v2 = _log_small_arg_cdf(d, log_arg2)
    log_v1 = -math.inf
    if inp.with_noise:
        log_c = 0.5 * math.log(lam * _nonuniform_noise_factor(inp) / inp.rho) - math.log(zeta)
        if paper:
            nd = inp.link_nd
            shape_z = nd.m * inp.ris.n_elements
            log_moment = (-0.5 * d * math.log(nd.m / nd.omega) + math.lgamma(shape_z + 0.5 * d)
                          - math.lgamma(shape_z))
            log_v1 = log_moment + _log_small_arg_cdf(d, log_c)
        else:
            z = inp.fit_rispower
            k = float(integer_series_order(d))
            log_moment = (0.5 * k * math.log(z.scale) + math.lgamma(z.shape + 0.5 * k)
                          - math.lgamma(z.shape))
            log_v1 = log_moment + _log_small_arg_cdf(k, log_c)
    return _asymptotic(fbl, log_v1, log_v2)


def bler_asymptotic_nonuniform(inp: ClosedFormInputs) -> float:
    """High-SNR BLER for per-element coefficients (clamped at 1)."""
    return bler_asymptotic_nonuniform_terms(inp).value


def diversity_order(fit: GammaFit) -> float:
    """High-SNR log-log slope magnitude of the BLER: shape / 2."""
    return fit.shape / 2.0


# --------------------------------------------------------------------------
# Goodput and power targeting
# --------------------------------------------------------------------------

def goodput(fbl: FBLParams, training_uses_varrho: int, bler: float) -> float:
    """(1 - 1/chi) r (1 - bler) with chi = Xi + training uses; unit of r (bits)."""
    if not 0.0 <= bler <= 1.0:
        raise ValueError("bler must lie in [0, 1]")
    if training_uses_varrho < 0:
        raise ValueError("training uses must be >= 0")
    chi = fbl.blocklength_xi + training_uses_varrho
    return (1.0 - 1.0 / chi) * fbl.rate_r * (1.0 - bler)


def goodput_nats(fbl: FBLParams, training_uses_varrho: int, bler: float) -> float:
    return goodput(fbl, training_uses_varrho, bler) * math.log(2.0)


class BracketError(ValueError):
    """Target BLER not reachable inside the power bracket."""


def required_power_for_bler(target: float, bler_at_dbm: Callable[[float], float],
                            lo_dbm: float = -80.0, hi_dbm: float = 0.0,
                            rtol: float = 1e-3, power_tol_db: float = 0.01) -> float:
    """Transmit power (dBm) at which a decreasing BLER curve crosses ``target``.

    Bisection in dBm; stops once the BLER is within ``rtol`` of the target,
    or the bracket is narrower than ``power_tol_db`` and the bracket ends are
    within ``rtol`` of each other in log-BLER terms (steep curves).
    """
    if not 0.0 < target < 1.0 + 1e-15:
        raise ValueError("target BLER must lie in (0, 1]")
    f_lo, f_hi = bler_at_dbm(lo_dbm), bler_at_dbm(hi_dbm)
    if f_lo == target:
        return lo_dbm
    if f_hi == target:
        return hi_dbm
    if not (f_lo > target > f_hi):
        raise BracketError(
            f"target {target:g} not bracketed: BLER({lo_dbm})={f_lo:g}, BLER({hi_dbm})={f_hi:g}"
        )
    lo, hi = lo_dbm, hi_dbm
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = bler_at_dbm(mid)
        if abs(f - target) <= rtol * target:
            return mid
        if f > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < power_tol_db * 1e-3:
            break
    return 0.5 * (lo + hi)
