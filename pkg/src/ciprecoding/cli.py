"""Command-line front end for the simulation sweeps.

Usage::

    ciprecoding <command> [--config FILE] [--set key=value ...] [--threads N] [--quiet]

Commands: powermin, balance, feasibility, robust, ser, bench, validate.
The config file is a flat JSON object; ``--set`` overrides single keys and
parses its value as JSON when it can (``--set gamma_db=[0,10]``), else as a
string. Exit codes: 0 success, 1 a sweep or acceptance check failed, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, acceptance, ci, conic, harness

log = logging.getLogger("ciprecoding")

CONFIG_KEYS = ("n_tx", "n_users", "modulation", "n0", "gamma_db", "power_budget_db", "delta_sq", "trials",
               "seed", "schemes", "out_dir")
MODULATIONS = ("bpsk", "qpsk", "8psk")

_SWEEP_KEYS = ("n_tx", "n_users", "trials", "out_dir")
REQUIRED = {
    "powermin": _SWEEP_KEYS + ("gamma_db",),
    "feasibility": _SWEEP_KEYS + ("gamma_db",),
    "balance": _SWEEP_KEYS + ("power_budget_db",),
    "robust": _SWEEP_KEYS + ("gamma_db", "delta_sq"),
    "ser": _SWEEP_KEYS + ("gamma_db",),
    "bench": _SWEEP_KEYS + ("gamma_db",),
    "validate": (),
}
DEFAULT_SCHEMES = {
    "powermin": (harness.CI_STRICT, harness.CI_RELAXED, harness.CONVENTIONAL),
    "feasibility": (harness.CI_RELAXED, harness.CONVENTIONAL),
    "balance": (harness.CI_RELAXED, harness.CONVENTIONAL),
    "robust": (harness.CI_RELAXED, harness.ROBUST_CI),
    "ser": (harness.CI_RELAXED,),
    "bench": (),
    "validate": (),
}
SWEEPS = {
    "powermin": ("power_sweep", harness.run_power_sweep),
    "feasibility": ("feasibility", harness.run_feasibility_sweep),
    "balance": ("balance", harness.run_balance_sweep),
    "robust": ("robust", harness.run_robust_sweeps),
    "ser": ("ser", harness.run_ser_check),
    "bench": ("timing", harness.run_timing),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    version: str
    seed: int
    config: dict
    tolerances: dict
    files: dict[str, list[str]] = field(default_factory=dict)
    status: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(t.strip()) for t in text.split(",") if t.strip()]
    return text


def load_config(path: str | None, overrides: list[str]) -> dict:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a flat key-value object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = _parse_value(value.strip())
    unknown = [k for k in raw if k not in CONFIG_KEYS]
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(repr, unknown))}; "
                          f"allowed keys are {', '.join(CONFIG_KEYS)}")
    return raw


def _ints(key, v, least=None):
    vals = v if isinstance(v, list) else [v]
    if not vals or any(isinstance(x, bool) or not isinstance(x, int) for x in vals):
        raise ConfigError(f"{key} must be an integer or a list of integers, got {v!r}")
    if least is not None and any(x < least for x in vals):
        raise ConfigError(f"{key} entries must be at least {least}, got {v!r}")
    return tuple(vals)


def _floats(key, v, nonneg=False):
    vals = v if isinstance(v, list) else [v]
    if not vals or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in vals):
        raise ConfigError(f"{key} must be a number or a non-empty list of numbers, got {v!r}")
    if any(not math.isfinite(x) for x in vals):
        raise ConfigError(f"{key} entries must be finite, got {v!r}")
    if nonneg and any(x < 0 for x in vals):
        raise ConfigError(f"{key} entries must be non-negative, got {v!r}")
    return tuple(float(x) for x in vals)


def _scalar_int(key, v, least):
    if isinstance(v, bool) or not isinstance(v, int) or v < least:
        raise ConfigError(f"{key} must be an integer >= {least}, got {v!r}")
    return v


def build_config(command: str, raw: dict, threads: int) -> harness.ExperimentConfig:
    """Validate raw key-values for ``command`` and build the experiment config."""
    missing = [k for k in REQUIRED[command] if k not in raw]
    if missing:
        raise ConfigError(f"{command} needs config key(s): {', '.join(missing)}")
    kw: dict = {"threads": threads}
    if "n_tx" in raw:
        kw["n_tx"] = _ints("n_tx", raw["n_tx"], 1)
    if "n_users" in raw:
        kw["n_users"] = _ints("n_users", raw["n_users"], 1)
    if "modulation" in raw:
        mod = raw["modulation"]
        if not isinstance(mod, str) or mod.lower() not in MODULATIONS:
            raise ConfigError(f"unsupported modulation {mod!r}; expected one of {', '.join(MODULATIONS)}")
        kw["modulation"] = mod.lower()
    if "n0" in raw:
        n0 = _floats("n0", raw["n0"])
        if len(n0) != 1 or n0[0] <= 0:
            raise ConfigError(f"n0 must be a single positive number, got {raw['n0']!r}")
        kw["n0"] = n0[0]
    for key in ("gamma_db", "power_budget_db"):
        if key in raw:
            kw[key] = _floats(key, raw[key])
    if "delta_sq" in raw:
        kw["delta_sq"] = _floats("delta_sq", raw["delta_sq"], nonneg=True)
    if "trials" in raw:
        kw["trials"] = _scalar_int("trials", raw["trials"], 1)
    if "seed" in raw:
        kw["seed"] = _scalar_int("seed", raw["seed"], 0)
    schemes = raw.get("schemes", list(DEFAULT_SCHEMES[command]))
    if isinstance(schemes, str):
        schemes = [schemes]
    if not isinstance(schemes, list) or any(not isinstance(s, str) for s in schemes):
        raise ConfigError(f"schemes must be a list of names, got {schemes!r}")
    bad = [s for s in schemes if s not in harness.SCHEMES]
    if bad:
        raise ConfigError(f"unsupported scheme(s) {', '.join(map(repr, bad))}; "
                          f"expected names from {', '.join(harness.SCHEMES)}")
    if command != "bench" and command != "validate" and not schemes:
        raise ConfigError("schemes must not be empty")
    kw["schemes"] = tuple(schemes)
    if "out_dir" in raw:
        if not isinstance(raw["out_dir"], str) or not raw["out_dir"]:
            raise ConfigError(f"out_dir must be a non-empty path string, got {raw['out_dir']!r}")
        kw["out_dir"] = raw["out_dir"]
    if command == "robust" and harness.ROBUST_CI in kw["schemes"] and kw.get("modulation") == "bpsk":
        raise ConfigError("robust-ci needs a modulation with at least 4 points")
    try:
        return harness.ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _echo(cfg: harness.ExperimentConfig) -> dict:
    out = {k: getattr(cfg, k) for k in CONFIG_KEYS}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def _tolerances(cfg: harness.ExperimentConfig) -> dict:
    return {"conic": dataclasses.asdict(conic.SolverOptions()), "dual_gp": dataclasses.asdict(ci.GPOptions()),
            "balance_rel_tol": cfg.balance_tol}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _print_rows(result: harness.SweepResult) -> None:
    cols = harness.CSV_COLUMNS[result.name]
    rows = harness.TimingView.wrap(result.rows) if result.name == "timing" else result.rows
    print(f"# {result.name}")
    print(",".join(cols))
    for r in rows:
        print(",".join(harness.fmt_value(getattr(r, c)) for c in cols))


def run_sweep(command: str, cfg: harness.ExperimentConfig, quiet: bool) -> int:
    name, fn = SWEEPS[command]
    out = Path(cfg.out_dir)
    manifest = RunManifest(command, __version__, cfg.seed, _echo(cfg), _tolerances(cfg))
    t0 = time.perf_counter()
    code = 0
    try:
        result = fn(cfg)
        files = [result.path.name] if result.path is not None else []
        trials = out / f"{name}_trials.csv"
        if cfg.trial_logs and result.records and trials.exists():
            files.append(trials.name)
        manifest.files[name] = files
        failed = sum(1 for r in result.records if r.status in ("error", "failed"))
        manifest.status[name] = "ok" if not failed else f"ok ({failed} trial solves without a verdict)"
        if not quiet:
            _print_rows(result)
    except Exception as exc:  # recorded in the manifest, reported through the exit code
        log.error("%s sweep failed: %s", name, exc)
        manifest.status[name] = f"failed: {exc}"
        code = 1
    finally:
        manifest.wall_time_s = time.perf_counter() - t0
        manifest.write(out)
    return code


def run_validate(cfg: harness.ExperimentConfig, raw: dict, only: list[int] | None, scale: float,
                 quiet: bool) -> int:
    numbers = only or sorted(acceptance.CRITERIA)
    t0 = time.perf_counter()
    report = None if quiet else (lambda r: print(r.line(), flush=True))
    results = acceptance.run_all(numbers, scale=scale, seed=cfg.seed, threads=cfg.threads, report=report)
    passed = sum(r.passed for r in results)
    if not quiet:
        print(f"{passed}/{len(results)} criteria passed")
    if "out_dir" in raw:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = [{"criterion": r.number, "title": r.title, "passed": r.passed, "checks": r.checks,
                    "measured": r.measured, "seconds": r.seconds} for r in results]
        (out / "validation.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
        manifest = RunManifest("validate", __version__, cfg.seed, _echo(cfg), _tolerances(cfg))
        manifest.files["validate"] = ["validation.json"]
        manifest.status["validate"] = f"{passed}/{len(results)} criteria passed"
        manifest.wall_time_s = time.perf_counter() - t0
        manifest.write(out)
    return 0 if passed == len(results) else 1


def _criteria_list(text: str) -> list[int]:
    try:
        nums = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated criterion numbers, got {text!r}") from exc
    bad = [n for n in nums if n not in acceptance.CRITERIA]
    if bad:
        raise argparse.ArgumentTypeError(f"no such criterion: {bad[0]}")
    return nums


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of config keys")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="worker processes, 0 = one per CPU")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    parser = argparse.ArgumentParser(prog="ciprecoding", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "powermin": "transmit power vs SINR target",
        "feasibility": "fraction of feasible trials",
        "balance": "balanced SINR vs power budget",
        "robust": "robust design over error bounds and targets",
        "ser": "simulated symbol error rate against the analytic bound",
        "bench": "solver timing on identical instances",
        "validate": "run the acceptance suite and print a pass/fail table",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "validate":
            p.add_argument("--only", type=_criteria_list, help="comma-separated criterion numbers")
            p.add_argument("--scale", type=float, default=1.0,
                           help="multiplier on trial counts (verdicts need 1.0)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 0:
            raise ConfigError("--threads must be non-negative")
        raw = load_config(args.config, args.set)
        cfg = build_config(args.command, raw, args.threads)
        if args.command == "validate" and not args.scale > 0:
            raise ConfigError("--scale must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        return run_validate(cfg, raw, args.only, args.scale, args.quiet)
    return run_sweep(args.command, cfg, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
