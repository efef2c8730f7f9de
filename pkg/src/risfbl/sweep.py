"""Experiment configs, named presets, sweep execution and CSV output.

A config is a JSON object. Every field is optional; absent scenario fields
take the published simulation defaults. Layout::

    {
      "experiment": "fig1" | "fig2" | "fig3" | "fig5" | "custom",
      "scenario": {"n_elements": 10, "beta": 0.9, "tx_power_dbm": -40, ...},
      "series":   [{"label": "N10", "n_elements": 10}, ...],
      "sweep":    {"variable": "tx_power_dbm", "start": -60, "stop": -30,
                   "points": 61, "scale": "linear"},
      "metric":   "bler" | "goodput" | "noise-power",
      "evaluators": ["analytical", "asymptotic", "monte-carlo"],
      "noise_modes": ["with-ris-noise", "no-ris-noise"],
      "param_mode": "derived" | "paper",
      "goodput_unit": "bits" | "nats",
      "mc": {"trials": 100000, "seed": 20240607, "workers": 1},
      "output": {"path": "out.csv", "format": "csv"}
    }

Each series is a set of scenario overrides with a label; columns are named
``<metric>_<evaluator>_<noise>_<label>``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .channel import RISConfig, db_to_linear, linear_to_db, ris_noise_power
from .fbl import (
    NOISE_MODES,
    FBLParams,
    bler_asymptotic_nonuniform_terms,
    bler_asymptotic_uniform_terms,
    bler_nonuniform_terms,
    bler_uniform_terms,
    goodput,
)
from .mc import McRunSpec, estimate_bler
from .momentfit import PARAM_MODES
from .scenario import TABLE1, Scenario, table1_scenario

EXPERIMENTS = ("fig1", "fig2", "fig3", "fig5", "custom")
SWEEP_VARIABLES = ("tx_power_dbm", "blocklength", "beta_uniform", "n_elements")
EVALUATORS = ("analytical", "asymptotic", "monte-carlo")
METRICS = ("bler", "goodput", "noise-power")
EVALUATOR_ALIASES = {
    "a": "analytical", "analytical": "analytical",
    "s": "asymptotic", "asy": "asymptotic", "asymptotic": "asymptotic",
    "m": "monte-carlo", "mc": "monte-carlo", "monte-carlo": "monte-carlo",
}
EVAL_TAG = {"analytical": "analytical", "asymptotic": "asymptotic", "monte-carlo": "mc"}
NOISE_TAG = {"with-ris-noise": "noise", "no-ris-noise": "nonoise"}
MIN_MC_TRIALS = 1000

SCENARIO_FIELDS = set(TABLE1) | {
    "n_elements", "tx_power_dbm", "ris_noise_convention", "training_uses", "label",
}

FIG2_N10_BETA = [0.7] * 4 + [0.9] * 4 + [0.6] * 2
FIG2_N15_BETA = FIG2_N10_BETA + [0.4] * 2 + [0.8] * 3

PRESETS = {
    "fig1": {
        "series": [{"label": "N10", "n_elements": 10}, {"label": "N20", "n_elements": 20}],
        "sweep": {"variable": "tx_power_dbm", "start": -60.0, "stop": -30.0, "points": 61},
        "evaluators": ["analytical", "asymptotic", "monte-carlo"],
    },
    "fig2": {
        "series": [{"label": "N10", "beta": FIG2_N10_BETA}, {"label": "N15", "beta": FIG2_N15_BETA}],
        "sweep": {"variable": "tx_power_dbm", "start": -60.0, "stop": -30.0, "points": 61},
        "evaluators": ["analytical", "asymptotic", "monte-carlo"],
    },
    "fig2-n10": {
        "series": [{"label": "N10", "beta": FIG2_N10_BETA}],
        "sweep": {"variable": "tx_power_dbm", "start": -60.0, "stop": -30.0, "points": 61},
        "evaluators": ["analytical", "asymptotic", "monte-carlo"],
    },
    "fig3": {
        "scenario": {"tx_power_dbm": -52.0, "n_elements": 10},
        "series": [
            {"label": "U_t300", "payload_bits": 300},
            {"label": "U_t200", "payload_bits": 200},
            {"label": "NU_t300", "payload_bits": 300, "beta": FIG2_N10_BETA},
        ],
        "sweep": {"variable": "blocklength", "start": 200, "stop": 20000, "points": 41, "scale": "dB"},
        "metric": "goodput",
        "evaluators": ["analytical", "monte-carlo"],
    },
    "fig5": {
        "series": [
            {"label": f"N{n}_B{int(b / 1e6)}MHz", "n_elements": n, "bandwidth_hz": b}
            for b in (10e6, 20e6) for n in (5, 10, 20)
        ],
        "sweep": {"variable": "beta_uniform", "start": 0.05, "stop": 1.0, "points": 20},
        "metric": "noise-power",
        "evaluators": ["analytical"],
    },
}
PRESETS["fig2-n15"] = {**PRESETS["fig2"], "series": [PRESETS["fig2"]["series"][1]]}

DEFAULTS = {
    "experiment": "custom",
    "scenario": {},
    "series": [{"label": "N10"}],
    "sweep": {"variable": "tx_power_dbm", "start": -60.0, "stop": -30.0, "points": 61,
              "scale": "linear"},
    "metric": "bler",
    "evaluators": ["analytical"],
    "noise_modes": list(NOISE_MODES),
    "param_mode": "derived",
    "goodput_unit": "bits",
    "mc": {"trials": 100_000, "seed": 20240607, "workers": 1},
    "output": {"path": None, "format": "csv"},
}
TOP_FIELDS = set(DEFAULTS)


class ConfigError(ValueError):
    """Invalid experiment config; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SweepAxis:
    variable: str
    start: float
    stop: float
    points: int
    scale: str = "linear"

    def values(self) -> np.ndarray:
        if self.scale == "dB":
            v = np.geomspace(self.start, self.stop, self.points)
        else:
            v = np.linspace(self.start, self.stop, self.points)
        if self.variable in ("blocklength", "n_elements"):
            v = np.unique(np.rint(v).astype(int))
        return v


@dataclass(frozen=True)
class Series:
    label: str
    scenario: Scenario
    tx_power_dbm: float
    base: dict


@dataclass
class ExperimentConfig:
    experiment: str
    series: list[Series]
    sweep: SweepAxis
    metric: str
    evaluators: list[str]
    noise_modes: list[str]
    param_mode: str
    goodput_unit: str
    mc: dict
    output: dict
    raw: dict = field(repr=False)

    @property
    def config_hash(self) -> str:
        body = {k: v for k, v in self.raw.items() if k != "output"}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _number(path: str, v, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    if integer and float(v) != int(v):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return int(v) if integer else float(v)


def _build_scenario(path: str, fields: dict) -> tuple[Scenario, float]:
    for k in fields:
        if k not in SCENARIO_FIELDS:
            raise ConfigError(f"{path}.{k}", "unknown field")
    f = dict(fields)
    f.pop("label", None)
    p_dbm = _number(f"{path}.tx_power_dbm", f.pop("tx_power_dbm", -40.0))
    conv = f.pop("ris_noise_convention", "aggregate")
    if conv not in ("aggregate", "per-element"):
        raise ConfigError(f"{path}.ris_noise_convention", f"unknown convention {conv!r}")
    training = _number(f"{path}.training_uses", f.pop("training_uses", 0), integer=True)
    if training < 0:
        raise ConfigError(f"{path}.training_uses", "must be >= 0")
    beta = f.pop("beta", TABLE1["beta"])
    n = f.pop("n_elements", None)
    if isinstance(beta, list):
        vals = [_number(f"{path}.beta[{i}]", b) for i, b in enumerate(beta)]
        if n is not None and len(vals) != n:
            raise ConfigError(f"{path}.beta", f"length {len(vals)} does not match n_elements {n}")
        beta, n = vals, len(vals)
    else:
        beta = _number(f"{path}.beta", beta)
    n = _number(f"{path}.n_elements", 10 if n is None else n, integer=True)
    if n < 1:
        raise ConfigError(f"{path}.n_elements", "must be >= 1")
    nums = {}
    for k, v in f.items():
        if k == "sigma_d_sq_db" and v is None:
            nums[k] = None
            continue
        nums[k] = _number(f"{path}.{k}", v, integer=k == "blocklength")
    try:
        sc = table1_scenario(n, beta=beta, ris_noise_convention=conv, **nums)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return sc.replace(training_uses=training), p_dbm


def _check_choice(path, value, choices):
    if value not in choices:
        raise ConfigError(path, f"{value!r} is not one of {list(choices)}")
    return value


def resolve_config(user: dict) -> ExperimentConfig:
    """Merge preset, defaults and user fields; validate everything up front."""
    if not isinstance(user, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for k in user:
        if k not in TOP_FIELDS:
            raise ConfigError(k, "unknown field")
    exp = user.get("experiment", "custom")
    if exp not in EXPERIMENTS and exp not in PRESETS:
        raise ConfigError("experiment", f"{exp!r} is not a known experiment")
    raw = _deep_merge(_deep_merge(DEFAULTS, PRESETS.get(exp, {})), user)
    raw["experiment"] = exp

    for k in ("scenario", "sweep", "mc", "output"):
        if not isinstance(raw[k], dict):
            raise ConfigError(k, "expected an object")
    if not isinstance(raw["series"], list) or not raw["series"]:
        raise ConfigError("series", "expected a non-empty list")

    sw = raw["sweep"]
    for k in sw:
        if k not in ("variable", "start", "stop", "points", "scale"):
            raise ConfigError(f"sweep.{k}", "unknown field")
    axis = SweepAxis(
        _check_choice("sweep.variable", sw.get("variable"), SWEEP_VARIABLES),
        _number("sweep.start", sw.get("start")),
        _number("sweep.stop", sw.get("stop")),
        _number("sweep.points", sw.get("points"), integer=True),
        _check_choice("sweep.scale", sw.get("scale", "linear"), ("linear", "dB")),
    )
    if axis.points < 2:
        raise ConfigError("sweep.points", "must be >= 2")
    if axis.scale == "dB" and not (axis.start > 0 and axis.stop > 0):
        raise ConfigError("sweep", "dB scale needs positive start and stop")

    metric = _check_choice("metric", raw["metric"], METRICS)
    if not isinstance(raw["evaluators"], list) or not raw["evaluators"]:
        raise ConfigError("evaluators", "expected a non-empty list")
    evaluators = []
    for i, e in enumerate(raw["evaluators"]):
        name = EVALUATOR_ALIASES.get(e)
        if name is None:
            raise ConfigError(f"evaluators[{i}]", f"unknown evaluator {e!r}")
        if name not in evaluators:
            evaluators.append(name)
    noise_modes = [_check_choice(f"noise_modes[{i}]", m, NOISE_MODES)
                   for i, m in enumerate(raw["noise_modes"])]
    if not noise_modes:
        raise ConfigError("noise_modes", "expected a non-empty list")
    param_mode = _check_choice("param_mode", raw["param_mode"], PARAM_MODES)
    unit = _check_choice("goodput_unit", raw["goodput_unit"], ("bits", "nats"))

    mc = dict(raw["mc"])
    for k in mc:
        if k not in ("trials", "seed", "workers", "block_size"):
            raise ConfigError(f"mc.{k}", "unknown field")
    for k in mc:
        mc[k] = _number(f"mc.{k}", mc[k], integer=True)
    if "monte-carlo" in evaluators and mc["trials"] < MIN_MC_TRIALS:
        raise ConfigError("mc.trials", f"must be >= {MIN_MC_TRIALS} for Monte Carlo runs")
    if mc["workers"] < 1:
        raise ConfigError("mc.workers", "must be >= 1")
    if not 0 <= mc["seed"] < 2 ** 64:
        raise ConfigError("mc.seed", "must be a 64-bit unsigned integer")

    series, labels = [], set()
    for i, s in enumerate(raw["series"]):
        if not isinstance(s, dict):
            raise ConfigError(f"series[{i}]", "expected an object")
        label = str(s.get("label", f"S{i}"))
        if label in labels:
            raise ConfigError(f"series[{i}].label", f"duplicate label {label!r}")
        labels.add(label)
        merged = {**raw["scenario"], **s}
        # a sweep over N replaces any explicit beta vector
        if axis.variable == "n_elements" and isinstance(merged.get("beta"), list):
            raise ConfigError(f"series[{i}].beta", "n_elements sweeps need a scalar beta")
        sc, p = _build_scenario(f"series[{i}]", merged)
        series.append(Series(label, sc, p, merged))

    cfg = ExperimentConfig(exp, series, axis, metric, evaluators, noise_modes, param_mode,
                           unit, mc, dict(raw["output"]), raw)
    if metric != "noise-power":
        for s in cfg.series:
            for v in axis.values():
                try:
                    _point_scenario(s, axis.variable, v)[0].fbl.check_closed_form()
                except ValueError as exc:
                    raise ConfigError(f"series[{s.label}] at {axis.variable}={v:g}", str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        user = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return resolve_config(user)


def _point_scenario(s: Series, variable: str, value) -> tuple[Scenario, float]:
    sc, p = s.scenario, s.tx_power_dbm
    if variable == "tx_power_dbm":
        p = float(value)
    elif variable == "blocklength":
        sc = sc.replace(fbl=FBLParams(int(value), sc.fbl.payload_bits_theta))
    elif variable == "beta_uniform":
        sc = sc.replace(ris=RISConfig.uniform_config(sc.ris.n_elements, float(value)))
    elif variable == "n_elements":
        sc = sc.replace(ris=RISConfig.uniform_config(int(value), sc.ris.beta[0]))
    return sc, p


def analytical_bler(sc: Scenario, p_dbm: float, noise_mode: str, param_mode: str) -> float:
    inp = sc.inputs(p_dbm, noise_mode, param_mode)
    terms = bler_uniform_terms(inp) if sc.ris.uniform() else bler_nonuniform_terms(inp)
    return terms.value


def asymptotic_terms(sc: Scenario, p_dbm: float, noise_mode: str, param_mode: str):
    inp = sc.inputs(p_dbm, noise_mode, param_mode)
    if sc.ris.uniform():
        return bler_asymptotic_uniform_terms(inp)
    return bler_asymptotic_nonuniform_terms(inp)


def column_names(cfg: ExperimentConfig) -> list[str]:
    cols = [cfg.sweep.variable]
    for s in cfg.series:
        if cfg.metric == "noise-power":
            cols += [f"ris_noise_db_{s.label}", f"receiver_noise_db_{s.label}"]
            continue
        for ev in cfg.evaluators:
            for nm in cfg.noise_modes:
                base = f"{cfg.metric}_{EVAL_TAG[ev]}_{NOISE_TAG[nm]}_{s.label}"
                cols.append(base)
                if ev == "monte-carlo":
                    cols.append(f"{base}_stderr")
    return cols + ["error"]


def _evaluate_point(cfg: ExperimentConfig, value) -> dict:
    row = {cfg.sweep.variable: value}
    errors = []
    unit = math.log(2.0) if cfg.goodput_unit == "nats" else 1.0
    for s in cfg.series:
        sc, p = _point_scenario(s, cfg.sweep.variable, value)
        if cfg.metric == "noise-power":
            row[f"ris_noise_db_{s.label}"] = float(ris_noise_power_db_safe(sc))
            row[f"receiver_noise_db_{s.label}"] = float(linear_to_db(sc.noise.ktb * sc.noise.noise_figure_lambda))
            continue
        chi = sc.fbl.blocklength_xi + sc.training_uses
        g_scale = (1.0 - 1.0 / chi) * sc.fbl.rate_r * unit
        for ev in cfg.evaluators:
            for nm in cfg.noise_modes:
                base = f"{cfg.metric}_{EVAL_TAG[ev]}_{NOISE_TAG[nm]}_{s.label}"
                try:
                    if ev == "monte-carlo":
                        spec = McRunSpec(sc, trials=cfg.mc["trials"], seed=cfg.mc["seed"], workers=1,
                                         p_dbm=p, noise_mode=nm,
                                         **({"block_size": cfg.mc["block_size"]} if "block_size" in cfg.mc else {}))
                        est = estimate_bler(spec)
                        if cfg.metric == "goodput":
                            row[base] = g_scale * (1.0 - est.mean)
                            row[f"{base}_stderr"] = g_scale * est.std_error
                        else:
                            row[base], row[f"{base}_stderr"] = est.mean, est.std_error
                        continue
                    if ev == "analytical":
                        b = analytical_bler(sc, p, nm, cfg.param_mode)
                    else:
                        b = asymptotic_terms(sc, p, nm, cfg.param_mode).value
                    row[base] = goodput(sc.fbl, sc.training_uses, b) * unit if cfg.metric == "goodput" else b
                except Exception as exc:  # recorded per cell, run continues
                    row[base] = math.nan
                    if ev == "monte-carlo":
                        row[f"{base}_stderr"] = math.nan
                    errors.append(f"{base}: {type(exc).__name__}: {exc}")
    row["error"] = " | ".join(errors)
    return row


def ris_noise_power_db_safe(sc: Scenario) -> float:
    power = ris_noise_power(sc.ris, sc.noise)
    return float(linear_to_db(power)) if power > 0 else -math.inf


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9e}"


@dataclass
class RunResult:
    columns: list[str]
    rows: list[dict]
    metadata: dict
    failed_cells: int

    @property
    def exit_code(self) -> int:
        return 2 if self.failed_cells else 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r.get(c, math.nan)) for c in self.columns])
        return buf.getvalue()


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def run_experiment(cfg: ExperimentConfig, output=None) -> RunResult:
    """Evaluate every sweep point; write CSV when an output path is given."""
    t0 = time.perf_counter()
    values = cfg.sweep.values()
    workers = cfg.mc.get("workers", 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda v: _evaluate_point(cfg, v), values))
    else:
        rows = [_evaluate_point(cfg, v) for v in values]
    failed = sum(r["error"].count(" | ") + 1 for r in rows if r["error"])
    uses_mc = "monte-carlo" in cfg.evaluators and cfg.metric != "noise-power"
    meta = {
        "artifact_version": _version(),
        "experiment": cfg.experiment,
        "config_hash": cfg.config_hash,
        "metric": cfg.metric,
        "param_mode": cfg.param_mode,
        "noise_modes": ",".join(cfg.noise_modes),
        "ris_noise_convention": ",".join(sorted({s.scenario.ris_noise_convention for s in cfg.series})),
        "evaluators": ",".join(cfg.evaluators),
        "seed": cfg.mc["seed"] if uses_mc else "n/a",
        "trials": cfg.mc["trials"] if uses_mc else "n/a",
        "series": ",".join(s.label for s in cfg.series),
        "wall_clock_s": f"{time.perf_counter() - t0:.3f}",
    }
    result = RunResult(column_names(cfg), rows, meta, failed)
    path = output or cfg.output.get("path")
    if path:
        Path(path).write_text(result.to_csv(), encoding="utf-8")
    return result


# --------------------------------------------------------------------------
# Crossover analysis
# --------------------------------------------------------------------------

def _crossings(p_grid, diff_fn) -> list[float]:
    """Powers where diff_fn changes sign, refined with Brent's method."""
    d = np.array([diff_fn(p) for p in p_grid])
    out = []
    for i in range(len(p_grid) - 1):
        a, b = d[i], d[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a != 0 and b != 0 and (a < 0) != (b < 0):
            out.append(float(brentq(diff_fn, p_grid[i], p_grid[i + 1], xtol=1e-6)))
    return out


def _log_closed_form(sc: Scenario, p: float, nm: str, pm: str) -> float:
    inp = sc.inputs(p, nm, pm)
    raw = (bler_uniform_terms(inp) if sc.ris.uniform() else bler_nonuniform_terms(inp)).raw
    return math.log(raw) if raw > 0 else -math.inf


def beta_star(n_elements: int, noise_figure_db: float) -> float:
    """Coefficient at which N beta kTB equals the receiver noise lambda kTB."""
    return float(db_to_linear(noise_figure_db)) / n_elements


def crossover_report(cfg: ExperimentConfig, lo_dbm: float = -60.0, hi_dbm: float = -20.0,
                     step_db: float = 0.25) -> dict:
    """Where the smallest-N series beats the largest-N one, plus beta*.

    For each noise mode, ``power_below_which_smaller_n_wins_dbm`` is the
    highest power at which log BLER(small N) - log BLER(large N) turns from
    negative (below) to positive (above). Closed-form curves use the
    pre-clamp value; asymptotic curves use the uncapped power laws. Crossings
    where the curves sit above BLER 1 are discarded.
    """
    by_n = sorted(cfg.series, key=lambda s: s.scenario.ris.n_elements)
    report = {"config_hash": cfg.config_hash, "param_mode": cfg.param_mode}
    if len(by_n) >= 2 and by_n[0].scenario.ris.n_elements < by_n[-1].scenario.ris.n_elements:
        small, large = by_n[0], by_n[-1]
        grid = np.arange(lo_dbm, hi_dbm + step_db / 2, step_db)
        report["pair"] = [small.label, large.label]
        curves = {
            "closed_form": lambda sc, p, nm: _log_closed_form(sc, p, nm, cfg.param_mode),
            "asymptotic": lambda sc, p, nm: asymptotic_terms(sc, p, nm, cfg.param_mode).log_unclamped,
        }
        for name, fn in curves.items():
            entry = {}
            for nm in NOISE_MODES:
                def diff(p, nm=nm, fn=fn):
                    return fn(small.scenario, p, nm) - fn(large.scenario, p, nm)

                # a crossing counts only where the curves are still probabilities
                xs = [x for x in _crossings(grid, diff)
                      if diff(x - step_db) < 0 < diff(x + step_db) and fn(small.scenario, x, nm) <= 0.0]
                entry[nm] = {
                    "power_below_which_smaller_n_wins_dbm": max(xs) if xs else None,
                    "all_crossings_dbm": xs,
                    "message": "ok" if xs else f"no crossover in bracket [{lo_dbm}, {hi_dbm}] dBm",
                }
            report[name] = entry
    else:
        report["message"] = "need two series with different n_elements for a crossover"
    report["beta_star"] = {
        s.label: {
            "n_elements": s.scenario.ris.n_elements,
            "noise_figure_db": float(linear_to_db(s.scenario.noise.noise_figure_lambda)),
            "beta_star": s.scenario.noise.noise_figure_lambda / s.scenario.ris.n_elements,
        }
        for s in cfg.series
    }
    return report
