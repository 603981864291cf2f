import csv
import math

import numpy as np
import pytest

from ciprecoding.harness import (
    CI_DUAL_GP,
    CI_RELAXED,
    CI_STRICT,
    CONVENTIONAL,
    CSV_COLUMNS,
    ROBUST_CI,
    TIMING_METHODS,
    ExperimentConfig,
    detect,
    fmt_value,
    q_function,
    run_balance_sweep,
    run_feasibility_sweep,
    run_power_sweep,
    run_robust_sweeps,
    run_ser_check,
    run_timing,
    ser_bound,
)
from ciprecoding.model import PSK8, QPSK


def _cfg(tmp_path=None, **kw):
    base = dict(n_tx=4, n_users=3, gamma_db=(0.0, 10.0), trials=6, seed=3,
                out_dir=str(tmp_path) if tmp_path else None)
    base.update(kw)
    return ExperimentConfig(**base)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_normalizes_and_validates():
    cfg = ExperimentConfig(n_tx=5, gamma_db=3, schemes=["ci-relaxed"])
    assert cfg.n_tx == (5,) and cfg.gamma_db == (3.0,) and cfg.schemes == (CI_RELAXED,)
    with pytest.raises(ValueError, match="bogus"):
        ExperimentConfig(schemes=("bogus",))
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError, match="16qam"):
        ExperimentConfig(modulation="16qam")
    with pytest.raises(ValueError):
        ExperimentConfig(delta_sq=(-1.0,))


def test_format_nine_significant_digits():
    assert fmt_value(1 / 3) == "0.333333333"
    assert fmt_value(True) == "1"
    assert fmt_value(np.int64(4)) == "4"
    assert fmt_value(math.inf) == "inf"


def test_power_sweep_csv_header_and_rows(tmp_path):
    res = run_power_sweep(_cfg(tmp_path))
    rows = _read(res.path)
    assert tuple(rows[0]) == CSV_COLUMNS["power_sweep"]
    assert len(rows) == 1 + 3 * 2
    assert (tmp_path / "power_sweep_trials.csv").exists()


def test_power_sweep_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_power_sweep(_cfg(a, trials=1, seed=7))
    run_power_sweep(_cfg(b, trials=1, seed=7))
    for name in ("power_sweep.csv", "power_sweep_trials.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_threads_do_not_change_results(tmp_path):
    one = run_power_sweep(_cfg(tmp_path / "one", threads=1))
    two = run_power_sweep(_cfg(tmp_path / "two", threads=2))
    assert (tmp_path / "one" / "power_sweep.csv").read_bytes() == (tmp_path / "two" / "power_sweep.csv").read_bytes()
    assert [r.trial for r in one.records] == [r.trial for r in two.records]


def test_aggregation_matches_trial_logs(tmp_path):
    res = run_power_sweep(_cfg(tmp_path, trials=8))
    log = _read(tmp_path / "power_sweep_trials.csv")
    head = log[0]
    recs = [dict(zip(head, r)) for r in log[1:]]
    for row in res.rows:
        mine = [r for r in recs if r["scheme"] == row.scheme and float(r["gamma_db"]) == row.gamma_db]
        feas = [float(r["power"]) for r in mine if r["feasible"] == "1"]
        assert row.trials == len(mine)
        assert row.feasible == len(feas)
        if feas:
            assert row.mean_power == pytest.approx(np.mean(feas), rel=1e-8)


def test_paired_trials_across_schemes():
    res = run_power_sweep(_cfg(schemes=(CI_STRICT, CI_RELAXED, CI_DUAL_GP)))
    by = {}
    for r in res.records:
        by.setdefault((r.gamma_db, r.trial), {})[r.scheme] = r
    for recs in by.values():
        # same instance: relaxed power never above strict, dual path equal to direct
        if recs[CI_STRICT].feasible:
            assert recs[CI_RELAXED].power <= recs[CI_STRICT].power + 1e-7
        assert recs[CI_DUAL_GP].power == pytest.approx(recs[CI_RELAXED].power, rel=1e-4)


def test_relaxed_mean_not_above_strict():
    res = run_power_sweep(_cfg(n_tx=5, n_users=4, trials=10))
    for g in (0.0, 10.0):
        assert res.row(CI_RELAXED, gamma_db=g).mean_power <= res.row(CI_STRICT, gamma_db=g).mean_power + 1e-7


def test_instantaneous_power_logged():
    res = run_power_sweep(_cfg(trials=3))
    for r in res.records:
        if r.feasible and r.scheme != CONVENTIONAL:
            # CI precoders carry exactly ||w||^2 for the designed symbols
            assert r.inst_power == pytest.approx(r.power, rel=1e-9)


def test_feasibility_sweep(tmp_path):
    res = run_feasibility_sweep(_cfg(tmp_path, n_tx=(3, 5), n_users=4, gamma_db=10.0, trials=10,
                                     schemes=(CI_RELAXED, CONVENTIONAL)))
    assert tuple(_read(res.path)[0]) == CSV_COLUMNS["feasibility"]
    assert res.row(CONVENTIONAL, n_tx=5).feasible_frac == 1.0
    assert res.row(CONVENTIONAL, n_tx=3).feasible_frac <= 0.1
    assert all(0.0 <= r.feasible_frac <= 1.0 for r in res.rows)


def test_balance_sweep(tmp_path):
    res = run_balance_sweep(_cfg(tmp_path, power_budget_db=(0.0, 10.0, 20.0), trials=3,
                                 schemes=(CI_RELAXED, CI_STRICT, CONVENTIONAL)))
    assert tuple(_read(res.path)[0]) == CSV_COLUMNS["balance"]
    assert {r.scheme for r in res.rows} == {CI_RELAXED, CONVENTIONAL}
    for s in (CI_RELAXED, CONVENTIONAL):
        vals = [res.row(s, power_budget_db=p).mean_gamma_db for p in (0.0, 10.0, 20.0)]
        assert vals == sorted(vals)
    row = res.row(CI_RELAXED, power_budget_db=10.0)
    assert row.mean_gamma_db == pytest.approx(10 * math.log10(row.mean_gamma), rel=1e-12)


def test_robust_sweep(tmp_path):
    cfg = _cfg(tmp_path, n_tx=4, n_users=4, gamma_db=(10.0,), delta_sq=(0.0, 1e-4, 1e-3), trials=4,
               schemes=(CI_RELAXED, ROBUST_CI))
    res = run_robust_sweeps(cfg)
    assert tuple(_read(res.path)[0]) == CSV_COLUMNS["robust"]
    rob = [res.row(ROBUST_CI, gamma_db=10.0, delta_sq=d).mean_power_db for d in (0.0, 1e-4, 1e-3)]
    nom = res.row(CI_RELAXED, gamma_db=10.0, delta_sq=0.0).mean_power_db
    assert rob[0] == pytest.approx(nom, abs=0.05)
    assert rob == sorted(rob)


def test_ser_noiseless_is_zero():
    res = run_ser_check(_cfg(trials=3, ser_draws=20, noise_scale=0.0, schemes=(CI_RELAXED, CONVENTIONAL)))
    assert all(r.ser == 0.0 for r in res.rows)


def test_ser_decreases_with_target(tmp_path):
    res = run_ser_check(_cfg(tmp_path, gamma_db=(3.0, 6.0), trials=20, ser_draws=200, schemes=(CI_RELAXED,)))
    assert tuple(_read(res.path)[0]) == CSV_COLUMNS["ser"]
    lo, hi = res.row(CI_RELAXED, gamma_db=3.0), res.row(CI_RELAXED, gamma_db=6.0)
    assert hi.ser < lo.ser
    assert lo.symbols == 20 * 200 * 3


def test_ser_bound_values():
    assert float(ser_bound(10.0, QPSK)) == pytest.approx(2 * float(q_function(math.sqrt(10.0))), rel=1e-12)
    assert float(q_function(0.0)) == 0.5


def test_detect_nearest_phase():
    pts = PSK8.points()
    assert np.array_equal(detect(pts * 3.0, PSK8), np.arange(8))
    assert np.array_equal(detect(QPSK.points() * np.exp(0.3j), QPSK), np.arange(4))


def test_timing(tmp_path):
    res = run_timing(_cfg(tmp_path, n_tx=5, n_users=(2, 4), trials=3, warmup=1))
    rows = _read(res.path)
    assert tuple(rows[0]) == CSV_COLUMNS["timing"]
    assert {r.scheme for r in res.rows} == set(TIMING_METHODS)
    assert all(r.median_time_us > 0 and r.p90_time_us >= r.median_time_us for r in res.rows)


def test_no_files_without_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    res = run_power_sweep(_cfg(trials=1))
    assert res.path is None
    assert list(tmp_path.iterdir()) == []
