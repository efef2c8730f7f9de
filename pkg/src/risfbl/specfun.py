"""Special functions used by the closed-form BLER expressions.

Everything here is double precision. The Meijer-G evaluators work in the
log domain internally because the Gamma factors involved overflow long
before the final values do (shapes of a few hundred are routine).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

SQRT_PI = math.sqrt(math.pi)
LOG_SQRT_PI = 0.5 * math.log(math.pi)

# condition estimate above which the two-series Meijer-G path is abandoned
DEFAULT_COND_GUARD = 1e5
DEFAULT_A1_GUARD = 1e4

_EPS = np.finfo(float).eps
_MAX_SERIES_TERMS = 100_000


class SpecialFunctionError(ArithmeticError):
    """Base class for evaluation failures in this module."""


class GammaPoleError(SpecialFunctionError, ValueError):
    """Gamma evaluated at a non-positive integer."""


class GammaOverflowError(SpecialFunctionError, OverflowError):
    """Result is not representable; use the log-domain companion."""


class ConvergenceError(SpecialFunctionError):
    """No evaluation path reached the requested tolerance."""


# --------------------------------------------------------------------------
# Gamma and incomplete gamma
# --------------------------------------------------------------------------

def gamma_fn(x: float) -> float:
    """Euler Gamma function.

    Raises GammaPoleError at 0, -1, -2, ... and GammaOverflowError when the
    value exceeds the double range (switch to :func:`log_gamma_fn`).
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise GammaPoleError(f"Gamma has a pole at x={x}")
    try:
        return math.gamma(x)
    except OverflowError as exc:
        raise GammaOverflowError(f"Gamma({x}) overflows double precision") from exc


def log_gamma_fn(x: float) -> float:
    """log|Gamma(x)|, finite for every non-pole argument."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise GammaPoleError(f"Gamma has a pole at x={x}")
    return math.lgamma(x)


def _check_incgamma_domain(a: float, x: float) -> None:
    if not a > 0:
        raise ValueError(f"incomplete gamma needs a > 0, got a={a}")
    if not x >= 0:
        raise ValueError(f"incomplete gamma needs x >= 0, got x={x}")


def _log_p_series(a: float, x: float) -> float:
    # log P(a,x) from x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= x / (a + k)
        total += term
        if term < total * 1e-17:
            break
        if k > _MAX_SERIES_TERMS:
            raise ConvergenceError(f"incomplete gamma series stalled (a={a}, x={x})")
    return a * math.log(x) - x - math.lgamma(a + 1.0) + math.log(total)


def _log_q_contfrac(a: float, x: float) -> float:
    # modified Lentz on the continued fraction for Gamma(a,x)/Gamma(a)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_SERIES_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return a * math.log(x) - x - math.lgamma(a) + math.log(h)
    raise ConvergenceError(f"incomplete gamma continued fraction stalled (a={a}, x={x})")


def log_regularized_lower_gamma(a: float, x: float) -> float:
    """log P(a, x) with P = gamma(a, x) / Gamma(a); -inf at x = 0."""
    a = float(a)
    x = float(x)
    _check_incgamma_domain(a, x)
    if x == 0.0:
        return -math.inf
    if x < a + 1.0:
        return _log_p_series(a, x)
    return math.log1p(-math.exp(_log_q_contfrac(a, x)))


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a), in [0, 1]."""
    a = float(a)
    x = float(x)
    _check_incgamma_domain(a, x)
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, math.exp(_log_p_series(a, x)))
    return max(0.0, -math.expm1(_log_q_contfrac(a, x)))


def lower_incomplete_gamma(a: float, x: float) -> float:
    """Lower incomplete gamma gamma(a, x) = int_0^x t^(a-1) e^-t dt.

    Series for x < a + 1, continued fraction for the complement otherwise.
    Raises GammaOverflowError if the unregularized value leaves double range.
    """
    lp = log_regularized_lower_gamma(a, x)
    if lp == -math.inf:
        return 0.0
    log_val = lp + math.lgamma(float(a))
    if log_val > 709.78:
        raise GammaOverflowError(f"gamma({a}, {x}) overflows; use the regularized form")
    return math.exp(log_val)


def gaussian_q(x):
    """Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt 2). Array friendly."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Meijer-G, G^{2,1}_{1,2}(x | a1; 0, 1/2)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MeijerG2112Args:
    """Arguments of G^{2,1}_{1,2}(x | a1; b) with b fixed at (0, 1/2)."""

    x: float
    a1: float
    b: tuple[float, float] = (0.0, 0.5)
    a1_guard: float = DEFAULT_A1_GUARD

    def __post_init__(self):
        if not (math.isfinite(self.x) and self.x > 0):
            raise ValueError(f"G2112 needs x > 0, got {self.x}")
        if not math.isfinite(self.a1):
            raise ValueError("G2112 upper parameter must be finite")
        if abs(self.a1) > self.a1_guard:
            raise ValueError(
                f"|a1|={abs(self.a1):g} exceeds guard {self.a1_guard:g}; runaway series input?"
            )
        if tuple(self.b) != (0.0, 0.5):
            raise ValueError("only lower parameters (0, 1/2) are supported")
        # b1 - b2 = -1/2 keeps the two residue series apart; asserted for safety
        assert (self.b[0] - self.b[1]) % 1.0 != 0.0
        if self.a1 >= 1.0:
            # poles of Gamma(1-a1-t) would meet those of Gamma(t), Gamma(1/2+t)
            frac = self.a1 - 1.0
            if frac == math.floor(frac) or (frac + 0.5) == math.floor(frac + 0.5):
                raise ValueError(f"a1={self.a1} makes the Meijer-G contour degenerate")


@dataclass(frozen=True)
class MeijerG1112Args:
    """Arguments of G^{1,1}_{1,2}(x | a1; b1, b2)."""

    x: float
    a1: float = 1.0
    b1: float = 1.0
    b2: float = 0.0

    def __post_init__(self):
        if not self.x >= 0:
            raise ValueError(f"G1112 needs x >= 0, got {self.x}")
        if not self.b1 > 0:
            raise ValueError(f"G1112 needs b1 > 0, got {self.b1}")


@dataclass(frozen=True)
class G2112Result:
    log_value: float
    method: str
    condition: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def _log_kummer_m(a: float, b: float, x: float, rtol: float) -> float:
    """log 1F1(a; b; x) for a, b, x > 0 (all terms positive)."""
    # running log-scale keeps e^x sized sums representable
    log_scale = 0.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        ratio = (a + k) * x / ((b + k) * (k + 1))
        term *= ratio
        total += term
        k += 1
        if total > 1e250:
            total *= 1e-250
            term *= 1e-250
            log_scale += 250.0 * math.log(10.0)
        if ratio < 1.0:
            # geometric bound on the remaining tail
            if term * ratio / (1.0 - ratio) <= rtol * total:
                break
        if k > _MAX_SERIES_TERMS:
            raise ConvergenceError(f"1F1({a};{b};{x}) series did not converge")
    return math.log(total) + log_scale


def g2112_series(x: float, a1: float, rtol: float = 1e-13) -> G2112Result:
    """Two-series (residue) expansion of G^{2,1}_{1,2}(x | a1; 0, 1/2).

    With s = 1 - a1:  G = sqrt(pi) [Gamma(s) M(s, 1/2, x)
    - 2 Gamma(s + 1/2) sqrt(x) M(s + 1/2, 3/2, x)].
    The returned ``condition`` is (A + B) / (A - B) for the two series
    contributions; large values mean the difference lost precision.
    """
    s = 1.0 - a1
    if s <= 0:
        # Gamma(s) may be negative here; no log-domain shortcut
        A = SQRT_PI * special.gamma(s) * special.hyp1f1(s, 0.5, x)
        B = 2.0 * SQRT_PI * special.gamma(s + 0.5) * math.sqrt(x) * special.hyp1f1(s + 0.5, 1.5, x)
        val = A - B
        cond = (abs(A) + abs(B)) / abs(val) if val != 0 else math.inf
        if val <= 0 or not math.isfinite(val):
            return G2112Result(math.nan, "series", math.inf)
        return G2112Result(math.log(val), "series", cond)
    log_m1 = _log_kummer_m(s, 0.5, x, rtol)
    log_m2 = _log_kummer_m(s + 0.5, 1.5, x, rtol)
    log_a = LOG_SQRT_PI + math.lgamma(s) + log_m1
    # B/A through poch(s, 1/2) = Gamma(s+1/2)/Gamma(s); a difference of two
    # lgamma values would cost ~1e-14 absolute before amplification
    log_ratio = math.log(2.0 * special.poch(s, 0.5)) + 0.5 * math.log(x) + log_m2 - log_m1
    ratio = math.exp(log_ratio) if log_ratio < 700 else math.inf
    if ratio >= 1.0:
        return G2112Result(math.nan, "series", math.inf)
    cond = (1.0 + ratio) / (1.0 - ratio)
    return G2112Result(log_a + math.log1p(-ratio), "series", cond)


def _mb_log_integrand(t, s: float, logx: float):
    return (special.loggamma(t) + special.loggamma(t + 0.5)
            + special.loggamma(s - t) - t * logx)


def g2112_mellin_barnes(x: float, a1: float) -> G2112Result:
    """Mellin-Barnes contour quadrature of G^{2,1}_{1,2}(x | a1; 0, 1/2).

    G = (1/2 pi i) int Gamma(t) Gamma(1/2 + t) Gamma(1 - a1 - t) x^-t dt on a
    vertical line Re t = c. c is the real saddle of the integrand, where the
    line is locally steepest descent, so the integrand is close to a positive
    bump and the trapezoid rule (spectrally accurate for analytic
    integrands) needs few nodes. Requires a1 < 1.
    """
    s = 1.0 - a1
    if s <= 0:
        raise ValueError("Mellin-Barnes path needs a1 < 1")
    logx = math.log(x)

    def dlog(c):
        return special.digamma(c) + special.digamma(c + 0.5) - special.digamma(s - c) - logx

    lo = s * 1e-12
    hi = s * (1.0 - 1e-12)
    c = optimize.brentq(dlog, lo, hi, xtol=1e-15 * s, rtol=4 * _EPS, maxiter=500)
    f0 = float(np.real(_mb_log_integrand(c, s, logx)))
    # distance from the line to the nearest pole sets the step
    dist = min(c, s - c)
    curv = special.polygamma(1, c) + special.polygamma(1, c + 0.5) + special.polygamma(1, s - c)
    width = 1.0 / math.sqrt(curv)
    h = min(dist / 8.0, width / 4.0)
    chunk = 512
    total = 0.5  # g(0) = 1 after normalization, half weight at the centre
    start = 1
    while True:
        tau = h * np.arange(start, start + chunk)
        g = np.real(np.exp(_mb_log_integrand(c + 1j * tau, s, logx) - f0))
        total += float(np.sum(g))
        tail = np.abs(g[-16:]).max()
        start += chunk
        if tail < 1e-18 and tau[-1] > 5 * width:
            break
        if start > 2_000_000:
            raise ConvergenceError(f"Mellin-Barnes quadrature did not decay (x={x}, a1={a1})")
    integral = h * total / math.pi
    if not integral > 0:
        raise ConvergenceError(f"Mellin-Barnes quadrature lost positivity (x={x}, a1={a1})")
    return G2112Result(f0 + math.log(integral), "mellin-barnes", 1.0)


def log_meijer_g_2112(args: MeijerG2112Args, method: str = "auto",
                      cond_guard: float = DEFAULT_COND_GUARD) -> float:
    """log G^{2,1}_{1,2}(x | a1; 0, 1/2). The function is positive for a1 < 1."""
    return _meijer_g_2112(args, method, cond_guard).log_value


def meijer_g_2112(args: MeijerG2112Args, method: str = "auto",
                  cond_guard: float = DEFAULT_COND_GUARD) -> float:
    """G^{2,1}_{1,2}(x | a1; 0, 1/2).

    ``method`` is "auto" (series, falling back to Mellin-Barnes quadrature
    when the condition estimate exceeds ``cond_guard``), "series" or
    "quadrature".
    """
    res = _meijer_g_2112(args, method, cond_guard)
    if res.log_value > 709.78:
        raise GammaOverflowError("Meijer-G value overflows; use log_meijer_g_2112")
    return res.value


def _meijer_g_2112(args: MeijerG2112Args, method: str, cond_guard: float) -> G2112Result:
    x, a1 = float(args.x), float(args.a1)
    if method == "quadrature":
        return g2112_mellin_barnes(x, a1)
    if method not in ("auto", "series"):
        raise ValueError(f"unknown method {method!r}")
    # cheap precheck: for large s*x the residue series cancel catastrophically
    s = 1.0 - a1
    hopeless = s > 0 and (x + 2.0 * math.sqrt(max(s, 0.0) * x)) > 1.5 * math.log(cond_guard) + 40
    if not (method == "auto" and hopeless):
        res = g2112_series(x, a1)
        if method == "series":
            if not math.isfinite(res.log_value):
                raise ConvergenceError(f"series path failed (x={x}, a1={a1})")
            return res
        if math.isfinite(res.log_value) and res.condition <= cond_guard:
            return res
    if s <= 0:
        raise ConvergenceError(f"no path reaches tolerance for x={x}, a1={a1}")
    return g2112_mellin_barnes(x, a1)


# --------------------------------------------------------------------------
# Meijer-G, G^{1,1}_{1,2}(x | 1; b1, 0)
# --------------------------------------------------------------------------

def meijer_g_1112(args: MeijerG1112Args) -> float:
    """G^{1,1}_{1,2}(x | 1; b1, 0), which equals gamma(b1, x)."""
    if args.a1 != 1.0 or args.b2 != 0.0:
        raise ValueError("only the pattern G^{1,1}_{1,2}(x | 1; b1, 0) is supported")
    return lower_incomplete_gamma(args.b1, args.x)


def meijer_g_1112_general(x: float, a1: float, b1: float, b2: float) -> float:
    """Residue series of G^{1,1}_{1,2}(x | a1; b1, b2); testing aid only.

    G = sum_k (-1)^k / k! Gamma(1 - a1 + b1 + k) / Gamma(1 - b2 + b1 + k) x^(b1 + k)
    """
    if x == 0:
        return 0.0
    total = 0.0
    comp = 0.0
    k = 0
    while True:
        lt = (math.lgamma(1 - a1 + b1 + k) - math.lgamma(1 - b2 + b1 + k)
              - math.lgamma(k + 1) + (b1 + k) * math.log(x))
        term = (-1) ** k * math.exp(lt)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        k += 1
        if k > x + 10 and abs(term) < 1e-17 * abs(total):
            break
        if k > 5000:
            raise ConvergenceError("G1112 residue series did not converge")
    return total
