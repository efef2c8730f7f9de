"""``risfbl`` command line: run, crossover, validate."""

from __future__ import annotations

import argparse
import json
import sys

from .sweep import ConfigError, crossover_report, load_config, resolve_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _read_user_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None


def _cmd_run(args) -> int:
    user = _read_user_config(args.config)
    if args.experiment != "custom" or "experiment" not in user:
        user["experiment"] = args.experiment
    mc = user.setdefault("mc", {})
    for key, val in (("trials", args.trials), ("seed", args.seed), ("workers", args.workers)):
        if val is not None:
            mc[key] = val
    if args.no_ris_noise:
        user["noise_modes"] = ["no-ris-noise"]
    if args.param_mode:
        user["param_mode"] = args.param_mode
    if args.evaluators:
        user["evaluators"] = [e.strip() for e in args.evaluators.split(",") if e.strip()]
    cfg = resolve_config(user)
    result = run_experiment(cfg, output=args.output)
    if not (args.output or cfg.output.get("path")):
        sys.stdout.write(result.to_csv())
    if result.failed_cells:
        print(f"{result.failed_cells} evaluation(s) failed; see the error column", file=sys.stderr)
    return result.exit_code


def _cmd_crossover(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(crossover_report(cfg), indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: experiment={cfg.experiment} series={[s.label for s in cfg.series]} "
          f"points={len(cfg.sweep.values())} hash={cfg.config_hash}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risfbl", description="RIS finite-blocklength BLER experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep and write CSV")
    run.add_argument("--experiment", default="custom",
                     help="fig1, fig2, fig2-n10, fig2-n15, fig3, fig5 or custom")
    run.add_argument("--config", help="JSON config (fields override the preset)")
    run.add_argument("--output", help="CSV path (stdout when omitted)")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--no-ris-noise", action="store_true")
    run.add_argument("--param-mode", choices=["paper", "derived"])
    run.add_argument("--evaluators", help="comma list of analytical|asymptotic|monte-carlo (a,s,m)")
    run.set_defaults(func=_cmd_run)

    for name, fn, text in (("crossover", _cmd_crossover, "N crossover and beta* report"),
                           ("validate", _cmd_validate, "check a config without computing")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True)
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
