"""Physical-layer model: fading links, RIS configuration, thermal noise, SINR."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K
DEFAULT_TEMPERATURE_K = 290.0


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x_lin):
    return 10.0 * np.log10(x_lin)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(p_w) + 30.0


@dataclass(frozen=True)
class NakagamiLink:
    """Nakagami-m hop: shape m and average power omega (path loss included)."""

    m: float
    omega: float

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError(f"Nakagami shape must be >= 0.5, got m={self.m}")
        if not self.omega > 0:
            raise ValueError(f"Nakagami omega must be > 0, got {self.omega}")


@dataclass(frozen=True)
class LinkGeometry:
    d_bn: float
    d_nd: float
    tau_bn: float
    tau_nd: float
    varsigma: float = 1.0

    def __post_init__(self):
        if not (self.d_bn > 0 and self.d_nd > 0):
            raise ValueError("link distances must be positive")
        if not (self.tau_bn > 0 and self.tau_nd > 0):
            raise ValueError("path-loss exponents must be positive")


@dataclass(frozen=True)
class RISConfig:
    """N reflecting elements with per-element amplitude coefficients beta_n.

    Phases are always co-phased to the cascade (optimal alignment).
    """

    beta: tuple[float, ...]
    phase_policy: str = "optimal-alignment"

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) < 1:
            raise ValueError("RIS needs at least one element")
        if any(not (0.0 <= b <= 1.0) for b in beta):
            raise ValueError("every beta_n must lie in [0, 1]")
        if self.phase_policy != "optimal-alignment":
            raise ValueError("only optimal-alignment phases are supported")

    @classmethod
    def uniform_config(cls, n_elements: int, beta: float) -> "RISConfig":
        if n_elements < 1:
            raise ValueError("n_elements must be >= 1")
        return cls(tuple([beta] * int(n_elements)))

    @property
    def n_elements(self) -> int:
        return len(self.beta)

    @property
    def beta_array(self) -> np.ndarray:
        return np.asarray(self.beta)

    def uniform(self) -> bool:
        return all(b == self.beta[0] for b in self.beta)


@dataclass(frozen=True)
class NoiseModel:
    """Johnson-Nyquist noise at the receiver and at each RIS element.

    ``sigma_r_sq`` is the per-element RIS noise power kTB unless overridden.
    ``sigma_d_sq`` defaults to kTB*lambda and can be pinned to a quoted value.
    """

    bandwidth_hz: float = 10e6
    temperature: float = DEFAULT_TEMPERATURE_K
    noise_figure_lambda: float = 10.0 ** 0.3
    boltzmann_k: float = BOLTZMANN
    sigma_d_sq_override: float | None = None
    sigma_r_sq_override: float | None = None

    def __post_init__(self):
        if not (self.bandwidth_hz > 0 and self.temperature > 0):
            raise ValueError("bandwidth and temperature must be positive")
        if not self.noise_figure_lambda >= 1.0:
            raise ValueError("noise figure lambda must be >= 1 (linear)")
        if self.sigma_r_sq_override is not None and self.sigma_r_sq_override < 0:
            raise ValueError("sigma_r_sq override must be >= 0")
        if self.sigma_d_sq_override is not None and not self.sigma_d_sq_override > 0:
            raise ValueError("sigma_d_sq override must be > 0")

    @property
    def ktb(self) -> float:
        return self.boltzmann_k * self.temperature * self.bandwidth_hz

    @property
    def sigma_r_sq(self) -> float:
        if self.sigma_r_sq_override is not None:
            return float(self.sigma_r_sq_override)
        return self.ktb

    @property
    def sigma_d_sq(self) -> float:
        if self.sigma_d_sq_override is not None:
            return float(self.sigma_d_sq_override)
        return self.ktb * self.noise_figure_lambda

    @property
    def noise_ratio(self) -> float:
        """sigma_r^2 / sigma_d^2."""
        return self.sigma_r_sq / self.sigma_d_sq

    def without_ris_noise(self) -> "NoiseModel":
        return dataclasses.replace(self, sigma_r_sq_override=0.0)

    def rho(self, p_dbm) -> float:
        """Transmit SNR P / sigma_d^2 for a power in dBm."""
        return dbm_to_watt(p_dbm) / self.sigma_d_sq


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of both hops; amplitudes and phases per element."""

    h_bn_amp: np.ndarray
    h_nd_amp: np.ndarray
    h_bn_phase: np.ndarray = field(default=None)
    h_nd_phase: np.ndarray = field(default=None)

    def __post_init__(self):
        bn = np.asarray(self.h_bn_amp, dtype=float)
        nd = np.asarray(self.h_nd_amp, dtype=float)
        if bn.shape != nd.shape or bn.ndim != 1:
            raise ValueError("amplitude vectors must be 1-D and of equal length")
        if (bn < 0).any() or (nd < 0).any():
            raise ValueError("amplitudes must be nonnegative")
        object.__setattr__(self, "h_bn_amp", bn)
        object.__setattr__(self, "h_nd_amp", nd)
        for name in ("h_bn_phase", "h_nd_phase"):
            ph = getattr(self, name)
            ph = np.full(bn.shape, 2 * math.pi) if ph is None else np.asarray(ph, dtype=float)
            if ph.shape != bn.shape:
                raise ValueError(f"{name} length must equal N")
            object.__setattr__(self, name, ph)

    @property
    def n_elements(self) -> int:
        return self.h_bn_amp.size


def omega_from_geometry(geom: LinkGeometry) -> tuple[float, float]:
    """Average hop powers varsigma * D^-tau for the Tx-RIS and RIS-Rx links."""
    omega_bn = geom.varsigma * geom.d_bn ** (-geom.tau_bn)
    omega_nd = geom.varsigma * geom.d_nd ** (-geom.tau_nd)
    return omega_bn, omega_nd


def ris_noise_power(ris: RISConfig, noise: NoiseModel) -> float:
    """Aggregate RIS thermal noise power kTB * sum(beta_n), in watts."""
    return noise.ktb * math.fsum(ris.beta)


def ris_noise_power_db(ris: RISConfig, noise: NoiseModel) -> float:
    return float(linear_to_db(ris_noise_power(ris, noise)))


RIS_NOISE_CONVENTIONS = ("per-element", "aggregate")


def apply_ris_noise_convention(noise: NoiseModel, ris: RISConfig, convention: str) -> NoiseModel:
    """Return the noise model whose sigma_r^2 enters the SINR.

    "per-element": sigma_r^2 = kTB, the noise of one element (the model as
    written). "aggregate": sigma_r^2 = kTB * sum(beta_n), the surface total;
    this is the value quoted alongside the published BLER curves and the one
    that reproduces their with-noise power thresholds.
    """
    if convention == "per-element":
        return noise
    if convention == "aggregate":
        if noise.sigma_r_sq_override == 0.0:
            return noise
        return dataclasses.replace(noise, sigma_r_sq_override=ris_noise_power(ris, noise))
    raise ValueError(f"unknown RIS noise convention {convention!r}")


def sample_nakagami_amplitude(link: NakagamiLink, rng: np.random.Generator, size=None):
    """Nakagami-m amplitude(s): sqrt of Gamma(shape=m, scale=omega/m) power."""
    return np.sqrt(rng.gamma(link.m, link.omega / link.m, size=size))


def sample_realization(link_bn: NakagamiLink, link_nd: NakagamiLink, n_elements: int,
                       rng: np.random.Generator, with_phases: bool = False) -> ChannelRealization:
    bn = sample_nakagami_amplitude(link_bn, rng, n_elements)
    nd = sample_nakagami_amplitude(link_nd, rng, n_elements)
    if with_phases:
        ph_bn = rng.uniform(0.0, 2 * math.pi, n_elements)
        ph_nd = rng.uniform(0.0, 2 * math.pi, n_elements)
        return ChannelRealization(bn, nd, ph_bn, ph_nd)
    return ChannelRealization(bn, nd)


def optimal_phases(real: ChannelRealization) -> np.ndarray:
    """theta_n that co-phase every term conj(h_nd,n) h_bn,n."""
    return -(real.h_bn_phase - real.h_nd_phase)


def cascade_gain(real: ChannelRealization, ris: RISConfig, theta=None) -> float:
    """|sum_n sqrt(beta_n) conj(h_nd,n) h_bn,n e^{j theta_n}|^2.

    With ``theta`` None the optimal alignment is used and the phases drop out.
    """
    sb = np.sqrt(ris.beta_array)
    if theta is None:
        return float(np.sum(sb * real.h_nd_amp * real.h_bn_amp) ** 2)
    h_nd = real.h_nd_amp * np.exp(1j * real.h_nd_phase)
    h_bn = real.h_bn_amp * np.exp(1j * real.h_bn_phase)
    return float(abs(np.sum(sb * np.conj(h_nd) * h_bn * np.exp(1j * np.asarray(theta)))) ** 2)


def sinr_uniform(real: ChannelRealization, ris: RISConfig, noise: NoiseModel, rho: float) -> float:
    """SINR for a uniform surface: rho*beta*S^2 / (psi*||h_nd||^2 + 1), psi = beta*sigma_r^2/sigma_d^2."""
    if not ris.uniform():
        raise ValueError("sinr_uniform requires equal reflection coefficients")
    if real.n_elements != ris.n_elements:
        raise ValueError("realization and RIS sizes differ")
    beta = ris.beta[0]
    psi = beta * noise.noise_ratio
    s = float(np.sum(real.h_nd_amp * real.h_bn_amp))
    return rho * beta * s * s / (psi * float(np.sum(real.h_nd_amp ** 2)) + 1.0)


def sinr_nonuniform(real: ChannelRealization, ris: RISConfig, noise: NoiseModel, rho: float) -> float:
    """SINR with per-element coefficients under optimal phase alignment."""
    if real.n_elements != ris.n_elements:
        raise ValueError("realization and RIS sizes differ")
    b = ris.beta_array
    s = float(np.sum(np.sqrt(b) * real.h_nd_amp * real.h_bn_amp))
    z = float(np.sum(b * real.h_nd_amp ** 2))
    return rho * s * s / (1.0 + noise.noise_ratio * z)


def sinr_from_sums(rho, cascade_sum, weighted_power, noise_ratio):
    """Vectorized SINR from S = sum sqrt(beta) |h_bn||h_nd| and Z = sum beta |h_nd|^2."""
    return rho * cascade_sum ** 2 / (1.0 + noise_ratio * weighted_power)
