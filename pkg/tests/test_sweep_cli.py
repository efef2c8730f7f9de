import json
import math

import numpy as np
import pytest

from risfbl import cli
from risfbl.channel import BOLTZMANN, linear_to_db
from risfbl.scenario import table1_scenario
from risfbl.sweep import (
    ConfigError,
    crossover_report,
    load_config,
    resolve_config,
    run_experiment,
)


def body(csv_text):
    return "\n".join(l for l in csv_text.splitlines() if not l.startswith("#"))


def header(csv_text):
    out = {}
    for line in csv_text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            out[k] = v
    return out


class TestConfig:
    def test_empty_config_is_table1(self):
        cfg = resolve_config({})
        sc = cfg.series[0].scenario
        ref = table1_scenario(10)
        assert sc.link_bn == ref.link_bn and sc.link_nd == ref.link_nd
        assert sc.ris.beta == (0.9,) * 10
        assert sc.fbl.blocklength_xi == 500 and sc.fbl.payload_bits_theta == 200
        assert sc.noise.bandwidth_hz == 10e6
        assert sc.noise.sigma_d_sq == pytest.approx(10 ** -13.15, rel=1e-12)
        assert sc.noise.noise_figure_lambda == pytest.approx(10 ** 0.3)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("")
        assert load_config(p).experiment == "custom"

    def test_wrong_beta_length_names_field(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"scenario": {"n_elements": 4, "beta": [0.5, 0.6, 0.7]}})
        assert err.value.path == "series[0].beta"

    @pytest.mark.parametrize("user,path", [
        ({"sweep": {"variable": "bandwidth"}}, "sweep.variable"),
        ({"sweep": {"points": 1}}, "sweep.points"),
        ({"evaluators": ["x"]}, "evaluators[0]"),
        ({"scenario": {"m_bn": "three"}}, "series[0].m_bn"),
        ({"scenario": {"colour": 1}}, "series[0].colour"),
        ({"mc": {"trials": 10}, "evaluators": ["m"]}, "mc.trials"),
        ({"bogus": 1}, "bogus"),
    ])
    def test_schema_errors(self, user, path):
        with pytest.raises(ConfigError) as err:
            resolve_config(user)
        assert err.value.path == path

    def test_eps1_violation_before_compute(self):
        # a tiny payload puts the lower knot below zero
        with pytest.raises(ConfigError) as err:
            resolve_config({"scenario": {"payload_bits": 4}})
        assert "series[N10]" in err.value.path and "eps1" in str(err.value)
        with pytest.raises(ConfigError) as err:
            resolve_config({"scenario": {"payload_bits": 20},
                            "sweep": {"variable": "blocklength", "start": 200, "stop": 5000, "points": 3}})
        assert err.value.path.endswith("blocklength=200")

    def test_fig2_n10_preset(self):
        cfg = resolve_config({"experiment": "fig2-n10"})
        assert cfg.series[0].scenario.ris.beta == tuple([0.7] * 4 + [0.9] * 4 + [0.6] * 2)

    def test_fig2_n15_preset(self):
        beta = resolve_config({"experiment": "fig2-n15"}).series[0].scenario.ris.beta
        assert len(beta) == 15 and beta[10:] == (0.4, 0.4, 0.8, 0.8, 0.8)

    def test_hash_ignores_output(self):
        a = resolve_config({"output": {"path": "a.csv"}})
        b = resolve_config({"output": {"path": "b.csv"}})
        c = resolve_config({"param_mode": "paper"})
        assert a.config_hash == b.config_hash != c.config_hash


class TestRun:
    def test_fig1_columns(self):
        cfg = resolve_config({"experiment": "fig1", "sweep": {"points": 2}, "mc": {"trials": 1000}})
        cols = run_experiment(cfg).columns
        assert cols[0] == "tx_power_dbm" and cols[-1] == "error"
        for label in ("N10", "N20"):
            for ev in ("analytical", "asymptotic", "mc"):
                for nm in ("noise", "nonoise"):
                    assert f"bler_{ev}_{nm}_{label}" in cols
            assert f"bler_mc_noise_{label}_stderr" in cols
            assert f"bler_analytical_noise_{label}_stderr" not in cols

    def test_fig1_grid(self):
        v = resolve_config({"experiment": "fig1"}).sweep.values()
        assert v.size == 61 and v[0] == -60 and v[-1] == -30

    def test_fig5_arithmetic(self):
        res = run_experiment(resolve_config({"experiment": "fig5"}))
        assert "mc" not in " ".join(res.columns)
        assert header(res.to_csv())["trials"] == "n/a"
        for row in res.rows:
            b = row["beta_uniform"]
            for n in (5, 10, 20):
                for bw in (10, 20):
                    expected = linear_to_db(n * b * BOLTZMANN * 290 * bw * 1e6)
                    assert row[f"ris_noise_db_N{n}_B{bw}MHz"] == pytest.approx(expected, abs=1e-9)

    def test_fig5_equal_noise_at_beta_star(self):
        cfg = resolve_config({"experiment": "fig5",
                              "sweep": {"start": 10 ** 0.3 / 5, "stop": 1.0, "points": 2}})
        row = run_experiment(cfg).rows[0]
        assert row["ris_noise_db_N5_B10MHz"] == pytest.approx(row["receiver_noise_db_N5_B10MHz"], abs=1e-12)

    def test_blocklength_goodput_sweep(self):
        cfg = resolve_config({
            "scenario": {"tx_power_dbm": -52.0, "payload_bits": 300},
            "sweep": {"variable": "blocklength", "start": 500, "stop": 20000, "points": 9, "scale": "dB"},
            "metric": "goodput",
            "noise_modes": ["no-ris-noise"],
        })
        res = run_experiment(cfg)
        g = [r["goodput_analytical_nonoise_N10"] for r in res.rows]
        xi = [r["blocklength"] for r in res.rows]
        assert all(isinstance(x, (int, np.integer)) for x in xi)
        for x, v in zip(xi, g):
            assert 0 <= v < 300 / x
        # payload over blocklength once BLER is negligible
        assert g[-1] == pytest.approx((1 - 1 / xi[-1]) * 300 / xi[-1], rel=1e-6)

    def test_nats_unit(self):
        base = {"scenario": {"tx_power_dbm": -40.0}, "metric": "goodput",
                "sweep": {"variable": "blocklength", "start": 400, "stop": 600, "points": 2}}
        a = run_experiment(resolve_config(base)).rows[0]
        b = run_experiment(resolve_config({**base, "goodput_unit": "nats"})).rows[0]
        k = "goodput_analytical_noise_N10"
        assert b[k] == pytest.approx(a[k] * math.log(2), rel=1e-15)

    def test_rerun_bytes_identical(self, tmp_path):
        user = {"experiment": "fig1", "sweep": {"start": -46, "stop": -42, "points": 3},
                "mc": {"trials": 2000, "workers": 3}}
        a = run_experiment(resolve_config(user), output=tmp_path / "a.csv")
        user["mc"]["workers"] = 1
        run_experiment(resolve_config(user), output=tmp_path / "b.csv")
        ta, tb = (tmp_path / "a.csv").read_text(), (tmp_path / "b.csv").read_text()
        assert body(ta) == body(tb)
        h = header(ta)
        assert h["config_hash"] == resolve_config({**user, "mc": {"trials": 2000, "workers": 3}}).config_hash
        assert h["param_mode"] == "derived" and h["seed"] == "20240607" and h["trials"] == "2000"
        assert "wall_clock_s" in h and "ris_noise_convention" in h
        assert a.exit_code == 0

    def test_number_format(self):
        res = run_experiment(resolve_config({"sweep": {"start": -40, "stop": -39, "points": 2}}))
        line = body(res.to_csv()).splitlines()[1].split(",")
        mant = line[1].split("e")[0]
        assert len(mant.replace(".", "").lstrip("-")) == 10

    def test_failed_cells_recorded(self):
        # paper-literal non-uniform shape is not dimensionless and runs away
        cfg = resolve_config({"experiment": "fig2-n10", "param_mode": "paper", "evaluators": ["a"],
                              "sweep": {"start": -45, "stop": -40, "points": 2}})
        res = run_experiment(cfg)
        assert res.exit_code == 2
        assert all(math.isnan(r["bler_analytical_noise_N10"]) for r in res.rows)
        assert all("bler_analytical_noise_N10" in r["error"] for r in res.rows)
        assert "nan" in body(res.to_csv())


class TestCrossover:
    def test_beta_star(self):
        cfg = resolve_config({"series": [{"label": "N5", "n_elements": 5}]})
        rep = crossover_report(cfg)
        assert rep["beta_star"]["N5"]["beta_star"] == pytest.approx(0.399, abs=5e-4)
        assert rep["beta_star"]["N5"]["beta_star"] == 10 ** 0.3 / 5
        assert "need two series" in rep["message"]

    def test_fig1_pair(self):
        rep = crossover_report(resolve_config({"experiment": "fig1"}))
        assert rep["pair"] == ["N10", "N20"]
        closed = rep["closed_form"]
        assert -46 < closed["with-ris-noise"]["power_below_which_smaller_n_wins_dbm"] < -40
        for kind in ("closed_form", "asymptotic"):
            nn = rep[kind]["no-ris-noise"]
            assert nn["power_below_which_smaller_n_wins_dbm"] is None
            assert nn["message"].startswith("no crossover in bracket")


class TestCli:
    def _cfg(self, tmp_path, user):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(user))
        return str(p)

    def test_run_ok(self, tmp_path, capsys):
        c = self._cfg(tmp_path, {"sweep": {"start": -45, "stop": -40, "points": 3}})
        out = tmp_path / "o.csv"
        assert cli.main(["run", "--config", c, "--output", str(out), "--evaluators", "a,s"]) == 0
        text = out.read_text()
        assert "bler_asymptotic_noise_N10" in text

    def test_run_stdout_and_flags(self, tmp_path, capsys):
        c = self._cfg(tmp_path, {"sweep": {"start": -45, "stop": -40, "points": 2}})
        assert cli.main(["run", "--config", c, "--no-ris-noise", "--evaluators", "m",
                         "--trials", "1000", "--seed", "5", "--param-mode", "derived"]) == 0
        text = capsys.readouterr().out
        h = header(text)
        assert h["seed"] == "5" and h["noise_modes"] == "no-ris-noise"
        assert "bler_mc_nonoise_N10_stderr" in text and "bler_mc_noise_N10" not in text

    def test_config_error_exit(self, tmp_path, capsys):
        c = self._cfg(tmp_path, {"scenario": {"n_elements": 3, "beta": [0.1]}})
        assert cli.main(["run", "--config", c]) == 1
        assert "series[0].beta" in capsys.readouterr().err
        assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["validate", "--config", str(bad)]) == 1

    def test_partial_failure_exit(self, tmp_path, capsys):
        c = self._cfg(tmp_path, {"param_mode": "paper", "evaluators": ["a"],
                                 "sweep": {"start": -45, "stop": -40, "points": 2}})
        out = tmp_path / "o.csv"
        assert cli.main(["run", "--experiment", "fig2-n10", "--config", c, "--output", str(out)]) == 2
        assert out.exists()

    def test_validate_and_crossover(self, tmp_path, capsys):
        c = self._cfg(tmp_path, {"experiment": "fig1"})
        assert cli.main(["validate", "--config", c]) == 0
        assert "points=61" in capsys.readouterr().out
        assert cli.main(["crossover", "--config", c]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert set(rep) >= {"closed_form", "asymptotic", "beta_star"}
