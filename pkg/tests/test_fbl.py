import math

import numpy as np
import pytest

from risfbl.fbl import (
    NOISE_MODES,
    BracketError,
    ConfigurationError,
    FBLParams,
    bler_asymptotic_nonuniform,
    bler_asymptotic_uniform,
    bler_asymptotic_uniform_terms,
    bler_nonuniform,
    bler_nonuniform_terms,
    bler_uniform,
    bler_uniform_terms,
    capacity,
    diversity_order,
    dispersion,
    goodput,
    goodput_nats,
    linearized_q,
    noise_limited_cdf,
    normal_approx_error,
    required_power_for_bler,
)
from risfbl.momentfit import fit_cascade_uniform
from risfbl.channel import NakagamiLink
from risfbl.scenario import table1_scenario
from risfbl.sweep import FIG2_N10_BETA, FIG2_N15_BETA, asymptotic_terms

from oracles import bler_uniform_by_quadrature, noise_term_by_quadrature

FIG1_GRID = np.linspace(-60, -30, 61)
TABLE1_FBL = FBLParams(500, 200)


class TestCapacityDispersion:
    def test_values(self):
        assert capacity(3.0) == 2.0
        assert dispersion(0.0) == 0.0
        assert dispersion(1e12) == pytest.approx(2.0813689810056077, abs=1e-10)
        assert dispersion(1.0) == pytest.approx(1.5610267357542058, rel=1e-14)

    def test_vectorized(self):
        g = np.array([0.0, 1.0, 3.0])
        assert np.allclose(capacity(g), [0, 1, 2])


class TestFBLParams:
    def test_constants(self):
        # mpmath at 30 digits
        f = TABLE1_FBL
        assert f.rate_r == 0.4
        assert f.lambda_cap == pytest.approx(0.31950791077289426, rel=1e-14)
        assert f.varpi == pytest.approx(0.18487636557936668, rel=1e-14)
        assert f.eps1 == pytest.approx(0.19855854169089255, rel=1e-13)
        assert f.eps2 == pytest.approx(0.44045727985489597, rel=1e-13)
        assert f.midpoint == pytest.approx(f.lambda_cap, rel=1e-15)
        assert f.slope * (f.eps2 - f.eps1) == pytest.approx(1.0, rel=1e-14)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            FBLParams(100, 50)
        with pytest.raises(ConfigurationError):
            FBLParams(500, 0)
        with pytest.raises(ConfigurationError):
            FBLParams(500, 10).check_closed_form()
        TABLE1_FBL.check_closed_form()

    def test_linearized_q_knots(self):
        f = TABLE1_FBL
        assert linearized_q(f.lambda_cap, f) == pytest.approx(0.5, abs=1e-15)
        assert linearized_q(f.eps1, f) == pytest.approx(1.0, abs=1e-12)
        assert linearized_q(f.eps2, f) == pytest.approx(0.0, abs=1e-12)
        assert linearized_q(0.0, f) == 1.0 and linearized_q(5.0, f) == 0.0

    def test_linearization_tracks_normal_approximation(self):
        f = TABLE1_FBL
        g = np.linspace(f.eps1, f.eps2, 50)
        # the three-piece surrogate is coarse: its slope is set by the
        # midpoint derivative, so the gap near the knots reaches ~0.21
        gap = np.abs(linearized_q(g, f) - normal_approx_error(g, f))
        assert gap.max() < 0.25
        assert normal_approx_error(f.lambda_cap, f) == pytest.approx(0.5, abs=1e-12)
        assert normal_approx_error(0.0, f) == 1.0


class TestNoiseLimitedCdf:
    @pytest.mark.parametrize("order,c,shape,scale", [
        (55, 400.0, 30.0, 0.0515),
        (55, 150.0, 30.0, 0.0515),
        (20, 30.0, 12.0, 0.4),
        (3, 0.5, 5.0, 1.0),
    ])
    def test_against_quadrature(self, order, c, shape, scale):
        ref = noise_term_by_quadrature(order, c, shape, scale)
        got = noise_limited_cdf(order, c, shape, scale)
        assert abs(got - ref) <= 1e-9 * max(ref, 1e-300) + 1e-300

    def test_zero_argument(self):
        assert noise_limited_cdf(10, 0.0, 5.0, 1.0) == 0.0


@pytest.fixture(scope="module")
def s10():
    return table1_scenario(10)


@pytest.fixture(scope="module")
def s20():
    return table1_scenario(20)


class TestBlerUniform:
    def test_quadrature_chain(self, s10):
        for p in np.linspace(-50, -32, 10):
            for nm in NOISE_MODES:
                inp = s10.inputs(p, nm)
                ref = bler_uniform_by_quadrature(inp)
                got = bler_uniform(inp)
                assert abs(got - ref) <= 1e-6 * ref + 1e-300, (p, nm)

    def test_high_snr_limit(self, s10):
        vals = [bler_uniform(s10.inputs(p)) for p in (-30, 0, 50, 100)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        inp = s10.inputs(0).with_rho(1e30)
        assert bler_uniform(inp) < 1e-300

    def test_requires_uniform(self):
        sc = table1_scenario(beta=FIG2_N10_BETA)
        with pytest.raises(ValueError):
            bler_uniform(sc.inputs(-40))

    def test_bad_fbl_rejected(self, s10):
        sc = s10.replace(fbl=FBLParams(500, 10))
        with pytest.raises(ConfigurationError):
            bler_uniform(sc.inputs(-40))

    @pytest.mark.parametrize("n", [10, 20])
    def test_grid_invariants(self, n):
        sc = table1_scenario(n)
        prev = {nm: 1.0 for nm in NOISE_MODES}
        for p in FIG1_GRID:
            t = {nm: bler_uniform_terms(sc.inputs(p, nm)) for nm in NOISE_MODES}
            for nm in NOISE_MODES:
                assert -0.05 <= t[nm].raw <= 1.05
                assert 0.0 <= t[nm].value <= prev[nm] + 1e-15
                prev[nm] = t[nm].value
            assert t["with-ris-noise"].value >= t["no-ris-noise"].value

    def test_monotone_in_blocklength(self, s10):
        vals = [bler_uniform(s10.replace(fbl=FBLParams(xi, 200)).inputs(-45)) for xi in (300, 500, 1000, 4000)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_paper_mode_evaluates(self, s10):
        for p in (-45, -40, -35):
            v = bler_uniform(s10.inputs(p, param_mode="paper"))
            assert 0.0 <= v <= 1.0


class TestBlerNonuniform:
    def test_constant_beta_reduction(self, s10):
        for p in FIG1_GRID:
            for nm in NOISE_MODES:
                a = bler_uniform(s10.inputs(p, nm))
                b = bler_nonuniform(s10.inputs(p, nm))
                assert abs(a - b) <= 1e-9

    def test_noise_mode_consistency(self):
        sc = table1_scenario(beta=FIG2_N10_BETA)
        silent = sc.replace(noise=sc.noise.without_ris_noise())
        for p in (-50, -44, -38):
            assert bler_nonuniform(sc.inputs(p, "no-ris-noise")) == bler_nonuniform(silent.inputs(p))

    def test_grid_invariants(self):
        for beta in (FIG2_N10_BETA, FIG2_N15_BETA):
            sc = table1_scenario(beta=beta)
            for p in FIG1_GRID:
                w = bler_nonuniform_terms(sc.inputs(p, "with-ris-noise"))
                wo = bler_nonuniform_terms(sc.inputs(p, "no-ris-noise"))
                assert -0.05 <= w.raw <= 1.05
                assert w.value >= wo.value

    def test_paper_mode_on_unit_power_links(self):
        # mu/sigma^2 is only a sensible shape when amplitudes are O(1)
        sc = table1_scenario(beta=FIG2_N10_BETA, d_bn=1.0, d_nd=1.0, sigma_d_sq_db=-100.0)
        for p in (-80.0, -70.0, -60.0):
            assert 0.0 <= bler_nonuniform(sc.inputs(p, param_mode="paper")) <= 1.0

    def test_paper_mode_rejects_runaway_order(self):
        sc = table1_scenario(beta=FIG2_N10_BETA)
        assert sc.inputs(-38, param_mode="paper").fit_cascade.shape > 1e3
        with pytest.raises(ValueError):
            bler_nonuniform(sc.inputs(-38, param_mode="paper"))


def _slope(sc, nm, pm="derived"):
    p = np.linspace(-40, -30, 21)
    y = [asymptotic_terms(sc, x, nm, pm).log_unclamped for x in p]
    return np.polyfit([math.log(sc.rho(x)) for x in p], y, 1)[0]


class TestAsymptotic:
    def test_diversity_order(self):
        unit = NakagamiLink(3.0, 1.0)
        assert diversity_order(fit_cascade_uniform(unit, unit, 10)) == pytest.approx(27.70, abs=0.01)

    @pytest.mark.parametrize("n", [10, 20])
    @pytest.mark.parametrize("nm", NOISE_MODES)
    def test_slope_uniform(self, n, nm):
        sc = table1_scenario(n)
        d = sc.inputs(-30).fit_uniform.shape
        assert abs(_slope(sc, nm) / (-d / 2) - 1) <= 0.01

    @pytest.mark.parametrize("beta", [FIG2_N10_BETA, FIG2_N15_BETA])
    @pytest.mark.parametrize("nm", NOISE_MODES)
    def test_slope_nonuniform(self, beta, nm):
        sc = table1_scenario(beta=beta)
        d = sc.inputs(-30).fit_cascade.shape
        assert abs(_slope(sc, nm) / (-d / 2) - 1) <= 0.01

    def test_paper_mode_slope_is_exact(self, s10):
        d = s10.inputs(-30).fit_uniform.shape
        assert _slope(s10, "with-ris-noise", "paper") == pytest.approx(-d / 2, rel=1e-9)

    def test_converges_to_closed_form(self, s10):
        grid = np.arange(-60.0, 41.0, 1.0)
        ratios = []
        for p in grid:
            exact = bler_uniform(s10.inputs(p))
            ratios.append(bler_asymptotic_uniform(s10.inputs(p)) / exact if exact > 0 else math.nan)
        ratios = np.array(ratios)
        outside = ~(np.abs(ratios - 1) <= 0.05)
        assert not outside[-1]
        threshold = grid[np.nonzero(outside)[0].max() + 1]
        # convergence sets in well above the figure range
        assert 10.0 <= threshold <= 30.0
        assert abs(ratios[-1] - 1) < 0.01

    def test_nonuniform_constant_beta_reduction(self, s10):
        for p in (-40, -30, -20, 0):
            for nm in NOISE_MODES:
                a = bler_asymptotic_uniform(s10.inputs(p, nm))
                b = bler_asymptotic_nonuniform(s10.inputs(p, nm))
                assert abs(a - b) <= 1e-9 * max(a, 1e-300)

    def test_n15_tracks_closed_form(self):
        sc = table1_scenario(beta=FIG2_N15_BETA)
        for p in (30.0, 35.0, 40.0):
            ratio = bler_asymptotic_nonuniform(sc.inputs(p)) / bler_nonuniform(sc.inputs(p))
            assert abs(ratio - 1) <= 0.05

    def test_capped_below_one(self, s10):
        for p in FIG1_GRID:
            t = bler_asymptotic_uniform_terms(s10.inputs(p))
            assert 0.0 <= t.value <= 1.0 and math.isfinite(t.log_raw)


class TestGoodput:
    def test_examples(self):
        assert goodput(TABLE1_FBL, 0, 1.0) == 0.0
        assert goodput(TABLE1_FBL, 0, 0.0) == pytest.approx(0.3992, rel=1e-14)
        assert goodput_nats(TABLE1_FBL, 0, 0.0) == pytest.approx(0.3992 * math.log(2))
        assert goodput(TABLE1_FBL, 12, 0.0) == pytest.approx((1 - 1 / 512) * 0.4)

    def test_validation(self):
        with pytest.raises(ValueError):
            goodput(TABLE1_FBL, 0, 1.5)
        with pytest.raises(ValueError):
            goodput(TABLE1_FBL, -1, 0.1)

    def test_below_rate_and_increasing_to_peak(self):
        sc = table1_scenario(10, payload_bits=300)
        xis = np.unique(np.rint(np.geomspace(200, 20000, 41)).astype(int))
        for nm in NOISE_MODES:
            g = []
            for xi in xis:
                fbl = FBLParams(int(xi), 300)
                b = bler_uniform(sc.replace(fbl=fbl).inputs(-52, nm))
                g.append(goodput(fbl, 0, b))
                assert g[-1] < fbl.rate_r
            knee = int(np.argmax(g))
            # BLER is 1 - O(eps) on the flat part; ignore rounding there
            assert np.all(np.diff(g[: knee + 1]) >= -1e-12)


class TestRequiredPower:
    def test_endpoint_and_bracket(self):
        def curve(p):
            return 10 ** (-(p + 80) / 10)

        assert required_power_for_bler(1.0, curve) == -80.0
        assert required_power_for_bler(1e-4, curve) == pytest.approx(-40.0, abs=0.01)
        with pytest.raises(BracketError):
            required_power_for_bler(1e-12, curve)
        with pytest.raises(ValueError):
            required_power_for_bler(0.0, curve)

    def test_relative_tolerance(self, s10):
        p = required_power_for_bler(1e-4, lambda x: bler_uniform(s10.inputs(x)))
        assert bler_uniform(s10.inputs(p)) == pytest.approx(1e-4, rel=1e-3)
