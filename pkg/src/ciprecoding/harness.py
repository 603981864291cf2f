"""Monte Carlo experiments: power, feasibility, balancing, robustness, SER and timing.

Every sweep draws trial ``t`` from the ``(seed, t)`` substreams, so all
schemes and sweep points see the same channels and symbols (paired trials)
and results do not depend on worker scheduling. Trials run in a process
pool when ``threads > 1`` and are reduced in trial order.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import erfc

from . import ci, conventional, robust
from .model import (
    STREAM_NOISE,
    ModulationSpec,
    PrecoderSet,
    Scenario,
    complex_gaussian,
    gen_channels,
    gen_symbols,
    instantaneous_power,
    lift_real,
    lin_to_db,
    rotate_channels,
    trial_rng,
)

log = logging.getLogger(__name__)

CI_STRICT = "ci-strict"
CI_RELAXED = "ci-relaxed"
CI_DUAL_GP = "ci-dual-gp"
CONVENTIONAL = "conventional"
ROBUST_CI = "robust-ci"
SCHEMES = (CI_STRICT, CI_RELAXED, CI_DUAL_GP, CONVENTIONAL, ROBUST_CI)

TIMING_METHODS = ("broadcast-conic", "multicast-conic", "dual-gp")

CSV_COLUMNS = {
    "power_sweep": ("scheme", "modulation", "n_tx", "n_users", "gamma_db", "trials", "feasible_frac",
                    "mean_power", "mean_power_db", "mean_inst_power_db"),
    "feasibility": ("scheme", "n_tx", "n_users", "gamma_db", "trials", "feasible_frac"),
    "balance": ("scheme", "n_tx", "n_users", "power_budget_db", "trials", "mean_gamma_db"),
    "robust": ("scheme", "n_tx", "n_users", "delta_sq", "gamma_db", "trials", "feasible_frac",
               "mean_power_db"),
    "ser": ("scheme", "gamma_db", "symbols", "ser", "bound"),
    "timing": ("method", "n_tx", "n_users", "trials", "median_us", "p90_us"),
}


def _as_tuple(v, cast):
    if isinstance(v, (list, tuple, np.ndarray)):
        return tuple(cast(x) for x in v)
    return (cast(v),)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep parameters. ``n_tx`` and ``n_users`` may be single values or grids."""

    n_tx: tuple = (5,)
    n_users: tuple = (4,)
    modulation: str = "qpsk"
    n0: float = 1.0
    gamma_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    power_budget_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    delta_sq: tuple = (0.0, 1e-5, 1e-4, 1e-3)
    trials: int = 500
    seed: int = 0
    schemes: tuple = (CI_STRICT, CI_RELAXED, CONVENTIONAL)
    out_dir: str | None = None
    threads: int = 1  # 0 picks the CPU count
    ser_draws: int = 250  # noise realizations per trial in the SER check
    noise_scale: float = 1.0  # 0 gives noiseless detection
    warmup: int = 3  # untimed solves before timing
    balance_tol: float = 1e-4
    trial_logs: bool = True  # also write per-trial CSVs next to each sweep

    def __post_init__(self):
        object.__setattr__(self, "n_tx", _as_tuple(self.n_tx, int))
        object.__setattr__(self, "n_users", _as_tuple(self.n_users, int))
        for name in ("gamma_db", "power_budget_db", "delta_sq"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name), float))
        object.__setattr__(self, "schemes", _as_tuple(self.schemes, str))
        ModulationSpec.from_name(self.modulation)
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown scheme {unknown[0]!r}; expected one of {', '.join(SCHEMES)}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n0 <= 0:
            raise ValueError("n0 must be positive")
        if min(self.n_tx) < 1 or min(self.n_users) < 1:
            raise ValueError("n_tx and n_users must be at least 1")
        if any(d < 0 for d in self.delta_sq):
            raise ValueError("delta_sq entries must be non-negative")
        if self.threads < 0:
            raise ValueError("threads must be non-negative")

    @property
    def mod(self) -> ModulationSpec:
        return ModulationSpec.from_name(self.modulation)

    @property
    def workers(self) -> int:
        return self.threads or (os.cpu_count() or 1)

    def scenario(self, n_tx: int, n_users: int, gamma_db: float = 0.0) -> Scenario:
        return Scenario.uniform(n_tx, n_users, gamma_db, self.n0, self.mod, self.seed)

    def dims(self):
        return [(n, k) for n in self.n_tx for k in self.n_users]


@dataclass
class TrialRecord:
    scheme: str
    n_tx: int
    n_users: int
    trial: int
    feasible: bool
    status: str
    gamma_db: float = math.nan
    delta_sq: float = math.nan
    power_budget_db: float = math.nan
    power: float = math.nan
    inst_power: float = math.nan
    gamma_t: float = math.nan
    seconds: float = math.nan


@dataclass
class SweepRow:
    scheme: str
    n_tx: int
    n_users: int
    modulation: str
    trials: int
    feasible: int
    feasible_frac: float
    gamma_db: float = math.nan
    delta_sq: float = math.nan
    power_budget_db: float = math.nan
    averaged: int = 0  # trials entering the means
    mean_power: float = math.nan
    mean_power_db: float = math.nan
    mean_inst_power_db: float = math.nan
    mean_gamma: float = math.nan
    mean_gamma_db: float = math.nan
    mean_time_us: float = math.nan
    median_time_us: float = math.nan
    p90_time_us: float = math.nan
    symbols: int = 0
    ser: float = math.nan
    bound: float = math.nan

    @property
    def method(self) -> str:
        return self.scheme


@dataclass
class SweepResult:
    name: str
    rows: list[SweepRow]
    records: list[TrialRecord] = field(default_factory=list)
    path: Path | None = None

    def row(self, scheme, **key) -> SweepRow:
        for r in self.rows:
            if r.scheme == scheme and all(_same(getattr(r, k), v) for k, v in key.items()):
                return r
        raise KeyError((scheme, key))


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, (int, float)):
        return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)
    return a == b


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def ser_bound(gamma_lin, mod: ModulationSpec):
    """``2 Q(sin(theta) sqrt(2 Gamma))`` from the guaranteed distance to each decision edge."""
    return 2.0 * q_function(np.sin(mod.theta) * np.sqrt(2.0 * np.asarray(gamma_lin, dtype=float)))


# ---------------------------------------------------------------------------
# trial workers (top level so they pickle)
# ---------------------------------------------------------------------------

def _record(scheme, n, k, trial, sol, **extra) -> TrialRecord:
    feasible = bool(sol is not None and sol.feasible)
    status = sol.status.value if sol is not None else "error"
    power = float(sol.power) if feasible else math.nan
    return TrialRecord(scheme, n, k, trial, feasible, status, power=power,
                       seconds=getattr(sol, "wall_time", math.nan), **extra)


def _ci_power_solve(scheme, ch, sy, rot, gamma, cfg):
    mod = cfg.mod
    if scheme == CI_STRICT:
        return ci.solve_strict(rot, gamma, cfg.n0, mod)
    if mod.order == 2:
        return ci.solve_bpsk(rot, gamma, cfg.n0)
    lift = lift_real(rot, mod, gamma, cfg.n0)
    if scheme == CI_DUAL_GP:
        return ci.solve_relaxed_gp(lift, mod)
    return ci.solve_relaxed_direct(lift, mod)


def _power_trial(cfg: ExperimentConfig, n: int, k: int, trial: int) -> list[TrialRecord]:
    sc = cfg.scenario(n, k)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    rot = rotate_channels(ch, sy)
    out = []
    for g_db in cfg.gamma_db:
        gamma = 10 ** (g_db / 10)
        for scheme in cfg.schemes:
            if scheme == ROBUST_CI:
                continue
            try:
                if scheme == CONVENTIONAL:
                    sol = conventional.solve_conventional_powermin(ch, gamma, cfg.n0)
                    T = sol.T
                else:
                    sol = _ci_power_solve(scheme, ch, sy, rot, gamma, cfg)
                    T = ci.split_precoders(sol.w, sy).T if sol.feasible else None
                rec = _record(scheme, n, k, trial, sol, gamma_db=g_db)
                if T is not None:
                    x = T.T @ sy.symbols
                    rec.inst_power = float(np.vdot(x, x).real)
            except Exception as exc:  # a failed trial is logged and counted infeasible
                log.warning("power trial %d (%s, %s dB) failed: %s", trial, scheme, g_db, exc)
                rec = TrialRecord(scheme, n, k, trial, False, "error", gamma_db=g_db)
            out.append(rec)
    return out


def _feasibility_trial(cfg: ExperimentConfig, n: int, k: int, trial: int) -> list[TrialRecord]:
    # power values come along for free; feasibility is the verdict of each solver
    return _power_trial(cfg, n, k, trial)


def _balance_trial(cfg: ExperimentConfig, n: int, k: int, trial: int) -> list[TrialRecord]:
    sc = cfg.scenario(n, k)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    rot = rotate_channels(ch, sy)
    mod = cfg.mod
    out = []
    for p_db in cfg.power_budget_db:
        P = 10 ** (p_db / 10)
        for scheme in cfg.schemes:
            if scheme in (ROBUST_CI, CI_STRICT):
                continue
            t0 = time.perf_counter()
            try:
                if scheme == CONVENTIONAL:
                    g = conventional.solve_conventional_balance(ch, cfg.n0, P, cfg.balance_tol)
                elif scheme == CI_DUAL_GP:
                    g = ci.solve_balancing_bisect(lift_real(rot, mod, 1.0, cfg.n0), cfg.n0, P,
                                                  cfg.balance_tol, mod)
                else:
                    g, _ = ci.solve_balancing_direct(lift_real(rot, mod, 1.0, cfg.n0), cfg.n0, P, mod)
                ok = g > 0
                rec = TrialRecord(scheme, n, k, trial, ok, "feasible" if ok else "infeasible",
                                  power_budget_db=p_db, gamma_t=g if ok else math.nan,
                                  seconds=time.perf_counter() - t0)
            except Exception as exc:
                log.warning("balance trial %d (%s, %s dB) failed: %s", trial, scheme, p_db, exc)
                rec = TrialRecord(scheme, n, k, trial, False, "error", power_budget_db=p_db)
            out.append(rec)
    return out


def _robust_trial(cfg: ExperimentConfig, n: int, k: int, trial: int) -> list[TrialRecord]:
    sc = cfg.scenario(n, k)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    rot = rotate_channels(ch, sy)
    mod = cfg.mod
    out = []
    for g_db in cfg.gamma_db:
        gamma = 10 ** (g_db / 10)
        perfect = {}
        for scheme in cfg.schemes:
            if scheme in (CI_STRICT, CI_RELAXED, CI_DUAL_GP, CONVENTIONAL):
                try:
                    if scheme == CONVENTIONAL:
                        perfect[scheme] = conventional.solve_conventional_powermin(ch, gamma, cfg.n0)
                    else:
                        perfect[scheme] = _ci_power_solve(scheme, ch, sy, rot, gamma, cfg)
                except Exception as exc:
                    log.warning("robust trial %d (%s) failed: %s", trial, scheme, exc)
                    perfect[scheme] = None
        for d_sq in cfg.delta_sq:
            for scheme in cfg.schemes:
                if scheme == ROBUST_CI:
                    try:
                        rob = robust.estimate_channels(ch, sc, trial, math.sqrt(d_sq))
                        sol = robust.solve_robust_powermin(rob, sy, gamma, cfg.n0, mod)
                    except Exception as exc:
                        log.warning("robust trial %d failed: %s", trial, exc)
                        sol = None
                else:
                    sol = perfect.get(scheme)
                out.append(_record(scheme, n, k, trial, sol, gamma_db=g_db, delta_sq=d_sq))
    return out


def _ser_trial(cfg: ExperimentConfig, n: int, k: int, trial: int) -> list[TrialRecord]:
    """One record per (scheme, Gamma) with ``power`` holding the error count."""
    sc = cfg.scenario(n, k)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    rot = rotate_channels(ch, sy)
    mod = cfg.mod
    rng = trial_rng(cfg.seed, trial, STREAM_NOISE)
    noise = complex_gaussian(rng, (cfg.ser_draws, k), cfg.n0) * cfg.noise_scale
    out = []
    for g_db in cfg.gamma_db:
        gamma = 10 ** (g_db / 10)
        for scheme in cfg.schemes:
            if scheme in (ROBUST_CI,):
                continue
            try:
                if scheme == CONVENTIONAL:
                    sol = conventional.solve_conventional_powermin(ch, gamma, cfg.n0)
                    T = sol.T
                else:
                    sol = _ci_power_solve(scheme, ch, sy, rot, gamma, cfg)
                    T = ci.split_precoders(sol.w, sy).T if sol.feasible else None
            except Exception as exc:
                log.warning("ser trial %d (%s) failed: %s", trial, scheme, exc)
                sol, T = None, None
            rec = _record(scheme, n, k, trial, sol, gamma_db=g_db)
            if T is not None:
                y = (ch.H @ (T.T @ sy.symbols))[None, :] + noise
                rec.power = float(np.count_nonzero(detect(y, mod) != sy.indices[None, :]))
                rec.inst_power = float(y.size)
            out.append(rec)
    return out


def detect(y, mod: ModulationSpec) -> np.ndarray:
    """Nearest-phase PSK decisions."""
    step = 2 * np.pi / mod.order
    return np.mod(np.rint((np.angle(y) - mod.offset) / step), mod.order).astype(np.int64)


# ---------------------------------------------------------------------------
# execution and reduction
# ---------------------------------------------------------------------------

def _run_trials(cfg: ExperimentConfig, worker, n: int, k: int) -> list[TrialRecord]:
    fn = functools.partial(worker, cfg, n, k)
    trials = range(cfg.trials)
    if cfg.workers <= 1 or cfg.trials == 1:
        chunks = [fn(t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(fn, trials, chunksize=max(1, cfg.trials // (4 * cfg.workers))))
    return [r for chunk in chunks for r in chunk]


def _mean(v):
    return float(np.mean(v)) if len(v) else math.nan


def _db(v):
    return float(lin_to_db(v)) if v > 0 else (-math.inf if v == 0 else math.nan)


def _aggregate(cfg, records, key_names, common: dict | None = None) -> list[SweepRow]:
    """One row per distinct key, in first-seen order.

    ``common`` optionally maps a key to the set of trials the means must be
    restricted to (paired averaging); otherwise each row averages its own
    feasible trials.
    """
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, f) for f in ("scheme", "n_tx", "n_users") + key_names), []).append(r)
    rows = []
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.trial)
        feas = [r for r in recs if r.feasible]
        use = feas
        if common is not None:
            allowed = common.get(_common_key(key, key_names))
            if allowed is not None:
                use = [r for r in feas if r.trial in allowed]
        pw = [r.power for r in use]
        ip = [r.inst_power for r in use if not math.isnan(r.inst_power)]
        gt = [r.gamma_t for r in use]
        ts = [r.seconds for r in recs if not math.isnan(r.seconds)]
        row = SweepRow(key[0], key[1], key[2], cfg.modulation, len(recs), len(feas), len(feas) / len(recs),
                       averaged=len(use))
        for name, val in zip(key_names, key[3:]):
            setattr(row, name, val)
        row.mean_power = _mean(pw)
        row.mean_power_db = _db(row.mean_power)
        row.mean_inst_power_db = _db(_mean(ip))
        row.mean_gamma = _mean(gt)
        row.mean_gamma_db = _db(row.mean_gamma)
        row.mean_time_us = _mean(ts) * 1e6
        row.median_time_us = float(np.median(ts)) * 1e6 if ts else math.nan
        rows.append(row)
    return rows


def _common_key(key, key_names):
    # paired robust averaging groups over every delta_sq at one (n_tx, n_users, gamma_db)
    d = dict(zip(key_names, key[3:]))
    return (key[1], key[2], d.get("gamma_db"))


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt_value(getattr(r, c)) for c in columns])
    return path


def _write(cfg, name, rows, records) -> Path | None:
    if cfg.out_dir is None:
        return None
    out = Path(cfg.out_dir)
    path = write_csv(out / f"{name}.csv", CSV_COLUMNS[name], rows)
    if cfg.trial_logs and records:
        # wall times are left out so reruns stay byte-identical
        cols = [f.name for f in fields(TrialRecord) if f.name != "seconds"]
        write_csv(out / f"{name}_trials.csv", cols, records)
    return path


def _sweep(cfg, name, worker, key_names, common_fn=None) -> SweepResult:
    records = []
    for n, k in cfg.dims():
        records += _run_trials(cfg, worker, n, k)
    common = common_fn(records) if common_fn else None
    rows = _aggregate(cfg, records, key_names, common)
    return SweepResult(name, rows, records, _write(cfg, name, rows, records))


def run_power_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Mean transmit power per (scheme, N, K, Gamma) over each scheme's feasible trials."""
    return _sweep(cfg, "power_sweep", _power_trial, ("gamma_db",))


def run_feasibility_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Fraction of trials each scheme can serve, per (N, K, Gamma)."""
    return _sweep(cfg, "feasibility", _feasibility_trial, ("gamma_db",))


def run_balance_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Mean balanced target per (scheme, N, K, budget); ``mean_gamma_db`` is dB of the linear mean."""
    return _sweep(cfg, "balance", _balance_trial, ("power_budget_db",))


def _robust_common(records) -> dict:
    """Trials feasible for every scheme and every delta_sq at one (N, K, Gamma)."""
    by: dict[tuple, dict[int, bool]] = {}
    for r in records:
        key = (r.n_tx, r.n_users, r.gamma_db)
        ok = by.setdefault(key, {})
        ok[r.trial] = ok.get(r.trial, True) and r.feasible
    return {key: {t for t, f in ok.items() if f} for key, ok in by.items()}


def run_robust_sweeps(cfg: ExperimentConfig) -> SweepResult:
    """Power over the (Gamma, delta_sq) grid for robust CI and perfect-CSI references.

    Means use the trials feasible for all schemes at all ``delta_sq`` of the
    same Gamma, so each curve compares identical channel sets.
    """
    return _sweep(cfg, "robust", _robust_trial, ("gamma_db", "delta_sq"), _robust_common)


def run_ser_check(cfg: ExperimentConfig) -> SweepResult:
    """Symbol error rate of the designed precoders under AWGN against ``2Q(sin(theta) sqrt(2 Gamma))``."""
    records = []
    for n, k in cfg.dims():
        records += _run_trials(cfg, _ser_trial, n, k)
    rows = []
    mod = cfg.mod
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.n_tx, r.n_users, r.gamma_db), []).append(r)
    for (scheme, n, k, g_db), recs in groups.items():
        feas = [r for r in recs if r.feasible]
        errors = sum(r.power for r in feas)
        symbols = int(sum(r.inst_power for r in feas))
        row = SweepRow(scheme, n, k, cfg.modulation, len(recs), len(feas), len(feas) / len(recs),
                       gamma_db=g_db, averaged=len(feas), symbols=symbols)
        row.ser = errors / symbols if symbols else math.nan
        row.bound = float(ser_bound(10 ** (g_db / 10), mod))
        rows.append(row)
    return SweepResult("ser", rows, records, _write(cfg, "ser", rows, records))


def run_timing(cfg: ExperimentConfig) -> SweepResult:
    """Wall time of the broadcast conic, multicast conic and dual-GP designs on identical instances.

    Runs in this process (timing is not parallelized) at ``gamma_db[0]``.
    """
    mod = cfg.mod
    rows = []
    g_db = cfg.gamma_db[0]
    gamma = 10 ** (g_db / 10)
    for n, k in cfg.dims():
        sc = cfg.scenario(n, k)
        inst = []
        for t in range(cfg.trials):
            ch, sy = gen_channels(sc, t), gen_symbols(sc, t)
            inst.append((sy, lift_real(rotate_channels(ch, sy), mod, gamma, cfg.n0)))
        solvers = {
            "broadcast-conic": lambda sy, L: ci.solve_broadcast(L, sy, mod),
            "multicast-conic": lambda sy, L: ci.solve_relaxed_direct(L, mod),
            "dual-gp": lambda sy, L: ci.solve_relaxed_gp(L, mod),
        }
        times = {m: [] for m in TIMING_METHODS}
        for sy, L in inst[: cfg.warmup]:
            for m in TIMING_METHODS:
                solvers[m](sy, L)
        for sy, L in inst:
            for m in TIMING_METHODS:
                t0 = time.perf_counter()
                solvers[m](sy, L)
                times[m].append(time.perf_counter() - t0)
        for m in TIMING_METHODS:
            us = np.array(times[m]) * 1e6
            row = SweepRow(m, n, k, cfg.modulation, cfg.trials, cfg.trials, 1.0, gamma_db=g_db,
                           averaged=cfg.trials)
            row.mean_time_us = float(np.mean(us))
            row.median_time_us = float(np.median(us))
            row.p90_time_us = float(np.percentile(us, 90))
            rows.append(row)
    result = SweepResult("timing", rows, [], None)
    if cfg.out_dir is not None:
        result.path = write_csv(Path(cfg.out_dir) / "timing.csv", CSV_COLUMNS["timing"], TimingView.wrap(rows))
    return result


@dataclass
class TimingView:
    method: str
    n_tx: int
    n_users: int
    trials: int
    median_us: float
    p90_us: float

    @classmethod
    def wrap(cls, rows):
        return [cls(r.scheme, r.n_tx, r.n_users, r.trials, r.median_time_us, r.p90_time_us) for r in rows]


def rows_as_dicts(result: SweepResult) -> list[dict]:
    return [asdict(r) for r in result.rows]
