"""Seeded Monte Carlo reference for BLER, goodput and SINR distributions.

Trials are cut into fixed-size blocks. Block b draws from its own Philox
stream keyed by (seed, b), so every trial sees the same random numbers no
matter how many workers run or in which order blocks finish. Per-block
statistics are merged in block order, which makes results bit-identical
across worker counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fbl import normal_approx_error
from .scenario import Scenario

DEFAULT_BLOCK = 1 << 15
ESTIMATORS = ("bler", "goodput", "sinr-cdf")


@dataclass(frozen=True)
class McRunSpec:
    scenario: Scenario
    trials: int = 100_000
    seed: int = 20240607
    workers: int = 1
    p_dbm: float = -40.0
    estimator: str = "bler"
    noise_mode: str = "with-ris-noise"
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def noise_ratio(self) -> float:
        if self.noise_mode == "no-ris-noise":
            return 0.0
        return self.scenario.noise_ratio

    @property
    def n_blocks(self) -> int:
        return -(-self.trials // self.block_size)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int


@dataclass
class _Moments:
    """Count, mean and summed squared deviations, mergeable (Chan et al.)."""

    n: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Moments":
        # samples: (trials, points)
        mean = samples.mean(axis=0)
        return cls(samples.shape[0], mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.n * other.n / n)
        return _Moments(n, mean, m2)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _block_range(spec: McRunSpec, block: int) -> int:
    start = block * spec.block_size
    return min(spec.block_size, spec.trials - start)


def draw_sums(scenario: Scenario, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per trial: weighted cascade sum sum sqrt(b) |h_bn||h_nd|, weighted
    RIS-side power sum b |h_nd|^2, and the unweighted power sum."""
    N = scenario.ris.n_elements
    bn, nd = scenario.link_bn, scenario.link_nd
    h_bn = np.sqrt(rng.gamma(bn.m, bn.omega / bn.m, size=(n, N)))
    h_nd = np.sqrt(rng.gamma(nd.m, nd.omega / nd.m, size=(n, N)))
    beta = scenario.ris.beta_array
    p_nd = h_nd * h_nd
    cascade = (np.sqrt(beta) * h_bn * h_nd).sum(axis=1)
    return cascade, (beta * p_nd).sum(axis=1), p_nd.sum(axis=1)


def _sinr(rho, cascade, weighted_power, noise_ratio):
    # rho is broadcast over columns: (n, 1) realizations x (points,) powers
    return (rho * cascade[:, None] ** 2) / (1.0 + noise_ratio * weighted_power[:, None])


def _run_blocks(spec: McRunSpec, fn):
    blocks = range(spec.n_blocks)
    if spec.workers == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(fn, blocks))


def _reduce(parts: list[_Moments]) -> _Moments:
    acc = _Moments()
    for p in parts:
        acc = acc.merge(p)
    return acc


def _estimates(spec: McRunSpec, mom: _Moments, scale: float = 1.0, offset: float = 0.0) -> list[McEstimate]:
    out = []
    for mean, m2 in zip(mom.mean, mom.m2):
        var = m2 / (mom.n - 1) if mom.n > 1 else 0.0
        se = math.sqrt(max(var, 0.0) / mom.n)
        out.append(McEstimate(offset + scale * float(mean), abs(scale) * se, mom.n, spec.seed))
    return out


def estimate_bler_curve(spec: McRunSpec, p_dbm_grid) -> list[McEstimate]:
    """BLER at several powers on common random numbers (one draw per trial)."""
    rho = np.array([spec.scenario.rho(p) for p in np.atleast_1d(p_dbm_grid)])
    kappa = spec.noise_ratio
    fbl = spec.scenario.fbl

    def one(block):
        n = _block_range(spec, block)
        cascade, weighted, _ = draw_sums(spec.scenario, block_rng(spec.seed, block), n)
        return _Moments.of(normal_approx_error(_sinr(rho, cascade, weighted, kappa), fbl))

    return _estimates(spec, _reduce(_run_blocks(spec, one)))


def estimate_bler(spec: McRunSpec) -> McEstimate:
    """Mean of Q((C(g) - r) / sqrt(V(g)/Xi)) over channel draws."""
    return estimate_bler_curve(spec, [spec.p_dbm])[0]


def estimate_goodput(spec: McRunSpec) -> McEstimate:
    """(1 - 1/chi) r (1 - BLER) with the BLER estimated by simulation."""
    fbl = spec.scenario.fbl
    chi = fbl.blocklength_xi + spec.scenario.training_uses
    factor = (1.0 - 1.0 / chi) * fbl.rate_r
    b = estimate_bler(spec)
    return McEstimate(factor * (1.0 - b.mean), factor * b.std_error, b.trials, b.seed)


@dataclass(frozen=True)
class SinrCdf:
    grid: np.ndarray
    cdf: np.ndarray
    cdf_lower_bound_sinr: np.ndarray
    cdf_upper_bound_sinr: np.ndarray
    std_error: np.ndarray
    trials: int


def sinr_bounds(rho, cascade, weighted_power, noise_ratio):
    """Per-trial (lower, exact, upper) SINR from the min-based sandwich.

    1/(a + 1) lies between 1/(2 max(a, 1)) and 1/max(a, 1), with a the
    RIS-noise to receiver-noise power ratio of the trial.
    """
    signal = rho * cascade ** 2
    a = noise_ratio * weighted_power
    exact = signal / (1.0 + a)
    with np.errstate(divide="ignore"):
        upper = np.minimum(np.where(a > 0, signal / a, np.inf), signal)
    return 0.5 * upper, exact, upper


def empirical_sinr_cdf(spec: McRunSpec, grid, check_sandwich: bool = False) -> SinrCdf:
    """Empirical CDF of the SINR at ``spec.p_dbm`` plus the CDFs of its bounds."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    rho = spec.scenario.rho(spec.p_dbm)
    kappa = spec.noise_ratio

    def one(block):
        n = _block_range(spec, block)
        cascade, weighted, _ = draw_sums(spec.scenario, block_rng(spec.seed, block), n)
        lb, g, ub = sinr_bounds(rho, cascade, weighted, kappa)
        if check_sandwich:
            assert np.all(lb <= g) and np.all(g <= ub), "SINR sandwich violated"
        counts = [np.searchsorted(np.sort(v), grid, side="right") for v in (g, lb, ub)]
        return n, counts

    parts = _run_blocks(spec, one)
    n = sum(p[0] for p in parts)
    totals = [sum(p[1][k] for p in parts) for k in range(3)]
    cdf = totals[0] / n
    return SinrCdf(grid, cdf, totals[1] / n, totals[2] / n, np.sqrt(cdf * (1 - cdf) / n), n)


def phase_alignment_check(scenario: Scenario, trials: int, seed: int) -> float:
    """Largest relative gap between the explicit-phase cascade power with
    optimal theta and the amplitude-only form, over ``trials`` draws."""
    rng = block_rng(seed, 0)
    N = scenario.ris.n_elements
    bn, nd = scenario.link_bn, scenario.link_nd
    a_bn = np.sqrt(rng.gamma(bn.m, bn.omega / bn.m, size=(trials, N)))
    a_nd = np.sqrt(rng.gamma(nd.m, nd.omega / nd.m, size=(trials, N)))
    ph_bn = rng.uniform(0, 2 * np.pi, size=(trials, N))
    ph_nd = rng.uniform(0, 2 * np.pi, size=(trials, N))
    theta = -(ph_bn - ph_nd)
    sb = np.sqrt(scenario.ris.beta_array)
    h_bn = a_bn * np.exp(1j * ph_bn)
    h_nd = a_nd * np.exp(1j * ph_nd)
    explicit = np.abs((sb * np.conj(h_nd) * h_bn * np.exp(1j * theta)).sum(axis=1)) ** 2
    reduced = (sb * a_bn * a_nd).sum(axis=1) ** 2
    return float(np.max(np.abs(explicit - reduced) / reduced))
