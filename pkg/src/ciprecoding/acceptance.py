"""Acceptance criteria as runnable checks.

Each ``criterion_<n>`` runs its experiment at desk scale and returns a
``CriterionResult`` with one boolean per sub-check plus the measured numbers.
``scale`` shrinks every trial count proportionally for quick smoke runs; the
verdicts are only meaningful at ``scale=1``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ci, conic, harness, robust
from .model import (
    BPSK,
    QPSK,
    Scenario,
    db_to_lin,
    gen_channels,
    gen_symbols,
    lift_real,
    lift_vectors,
    rotate_channels,
)
from .oracle import active_set_qp

GAMMA_SWEEP_DB = (0.0, 5.0, 10.0, 15.0, 20.0)
POWER_GRID_DB = (0.0, 5.0, 10.0, 15.0, 20.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: dict[str, bool]
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed_checks(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        detail = "all checks met" if self.passed else "failed: " + ", ".join(self.failed_checks())
        return f"[{verdict}] criterion {self.number:>2} {self.title}: {detail} ({self.seconds:.1f} s)"


def _n(count: int, scale: float, least: int = 1) -> int:
    return max(least, int(round(count * scale)))


def _timed(fn):
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _instance(n, k, g_db, seed, trial, mod=QPSK):
    sc = Scenario.uniform(n, k, g_db, 1.0, mod, seed)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    return sc, ch, sy, rotate_channels(ch, sy)


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------


@_timed
def criterion_1(scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    """CI-relaxed mean power below conventional at every Gamma; at most 70% at the top."""
    cfg = harness.ExperimentConfig(n_tx=5, n_users=4, gamma_db=GAMMA_SWEEP_DB, trials=_n(500, scale),
                                   seed=seed, schemes=(harness.CI_RELAXED, harness.CONVENTIONAL),
                                   threads=threads, trial_logs=False)
    res = harness.run_power_sweep(cfg)
    ratios = {}
    for g in cfg.gamma_db:
        ci_p = res.row(harness.CI_RELAXED, gamma_db=g).mean_power
        conv_p = res.row(harness.CONVENTIONAL, gamma_db=g).mean_power
        ratios[g] = ci_p / conv_p
    top = ratios[cfg.gamma_db[-1]]
    return CriterionResult(1, "power savings", {
        "below conventional at every point": all(r < 1.0 for r in ratios.values()),
        "top of sweep <= 0.7x conventional": top <= 0.7,
    }, {"ratio_by_gamma_db": ratios})


@_timed
def criterion_2(scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    """Feasibility at N=3, K=4, Gamma=10 dB."""
    cfg = harness.ExperimentConfig(n_tx=3, n_users=4, gamma_db=(10.0,), trials=_n(2000, scale), seed=seed,
                                   schemes=(harness.CI_RELAXED, harness.CONVENTIONAL), threads=threads,
                                   trial_logs=False)
    res = harness.run_feasibility_sweep(cfg)
    ci_f = res.row(harness.CI_RELAXED).feasible_frac
    conv_f = res.row(harness.CONVENTIONAL).feasible_frac
    return CriterionResult(2, "feasibility at N<K", {
        "ci-relaxed within 0.926 +- 0.03": abs(ci_f - 0.926) <= 0.03,
        "conventional <= 0.01": conv_f <= 0.01,
    }, {"ci_relaxed": ci_f, "conventional": conv_f, "trials": cfg.trials})


@_timed
def criterion_3(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """Relaxed power never exceeds strict power on mutually feasible instances."""
    want = _n(500, scale)
    worst, count, violations, trial = -math.inf, 0, 0, 0
    while count < want:
        g_db = GAMMA_SWEEP_DB[trial % len(GAMMA_SWEEP_DB)]
        sc, ch, sy, rot = _instance(5, 4, g_db, seed, trial)
        trial += 1
        strict = ci.solve_strict(rot, sc.gamma, sc.n0)
        relaxed = ci.solve_relaxed_direct(lift_real(rot, QPSK, sc.gamma, sc.n0), QPSK)
        if not (strict.feasible and relaxed.feasible):
            continue
        count += 1
        excess = relaxed.power - strict.power
        worst = max(worst, excess)
        violations += excess > 1e-7
    return CriterionResult(3, "strict-vs-relaxed dominance", {
        "relaxed <= strict + 1e-7 on every instance": violations == 0,
    }, {"instances": count, "violations": violations, "max_excess": worst})


@_timed
def criterion_4(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """Broadcast and multicast forms reach the same optimum."""
    n = _n(100, scale)
    worst, bad, disagree = 0.0, 0, 0
    for t in range(n):
        g_db = GAMMA_SWEEP_DB[t % len(GAMMA_SWEEP_DB)]
        sc, ch, sy, rot = _instance(5, 4, g_db, seed, t)
        lift = lift_real(rot, QPSK, sc.gamma, sc.n0)
        mc = ci.solve_relaxed_direct(lift, QPSK)
        bc, _ = ci.solve_broadcast(lift, sy, QPSK)
        if mc.feasible != bc.feasible:
            disagree += 1
            continue
        if mc.feasible:
            r = _rel(bc.power, mc.power)
            worst = max(worst, r)
            bad += r > 1e-5
    return CriterionResult(4, "broadcast/multicast equivalence", {
        "objectives agree to 1e-5 relative": bad == 0,
        "same feasibility verdicts": disagree == 0,
    }, {"instances": n, "max_rel_diff": worst})


def _gp_verdict(state: ci.DualState) -> str:
    if state.diverged:
        return "infeasible"
    return "feasible" if state.converged else "undecided"


@_timed
def criterion_5(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """Strong duality of the gradient-projection dual and agreement of infeasibility verdicts."""
    want = _n(200, scale)
    worst, bad, count, trial = 0.0, 0, 0, 0
    while count < want:
        g_db = GAMMA_SWEEP_DB[trial % len(GAMMA_SWEEP_DB)]
        sc, ch, sy, rot = _instance(5, 4, g_db, seed, trial)
        trial += 1
        lift = lift_real(rot, QPSK, sc.gamma, sc.n0)
        direct = ci.solve_relaxed_direct(lift, QPSK)
        if not direct.feasible:
            continue
        count += 1
        state = ci.solve_dual_gp(ci.build_dual(lift))
        gap = abs(state.objective + direct.power)
        worst = max(worst, gap / (1.0 + direct.power))
        bad += gap > 1e-4 * (1.0 + direct.power)
    n_inf = _n(100, scale)
    agree, infeasible = 0, 0
    for t in range(n_inf):
        sc, ch, sy, rot = _instance(3, 4, 10.0, seed, t)
        lift = lift_real(rot, QPSK, sc.gamma, sc.n0)
        direct = ci.solve_relaxed_direct(lift, QPSK)
        cert = direct.status.value
        infeasible += cert == "infeasible"
        agree += _gp_verdict(ci.solve_dual_gp(ci.build_dual(lift))) == cert
    return CriterionResult(5, "dual gradient projection", {
        "strong duality within 1e-4 (1 + optimum)": bad == 0,
        "infeasibility verdicts agree": agree == n_inf,
    }, {"instances": count, "max_scaled_gap": worst, "verdict_instances": n_inf,
        "verdict_agreement": agree, "certified_infeasible": infeasible})


@_timed
def criterion_6(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """QPSK per-axis form equals the sector form with theta = pi/4."""
    n = _n(100, scale)
    worst, bad, disagree = 0.0, 0, 0
    for t in range(n):
        g_db = GAMMA_SWEEP_DB[t % len(GAMMA_SWEEP_DB)]
        sc, ch, sy, rot = _instance(5, 4, g_db, seed, t)
        sector = ci.solve_relaxed_direct(lift_real(rot, QPSK, sc.gamma, sc.n0), QPSK)
        axis = ci.solve_qpsk_axis(ch, sy, sc.gamma, sc.n0)
        if sector.feasible != axis.feasible:
            disagree += 1
            continue
        if sector.feasible:
            r = _rel(axis.power, sector.power)
            worst = max(worst, r)
            bad += r > 1e-5
    return CriterionResult(6, "QPSK formulation equivalence", {
        "optima agree to 1e-5 relative": bad == 0,
        "same feasibility verdicts": disagree == 0,
    }, {"instances": n, "max_rel_diff": worst})


@_timed
def criterion_7(scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    """SINR balancing gain over conventional, and balancing / power-min inversion."""
    checks, measured = {}, {}
    for n, need in ((5, 1.5), (4, 2.2)):
        cfg = harness.ExperimentConfig(n_tx=n, n_users=4, power_budget_db=POWER_GRID_DB, trials=_n(300, scale),
                                       seed=seed, schemes=(harness.CI_RELAXED, harness.CONVENTIONAL),
                                       threads=threads, trial_logs=False)
        res = harness.run_balance_sweep(cfg)
        gains = {p: res.row(harness.CI_RELAXED, power_budget_db=p).mean_gamma_db
                 - res.row(harness.CONVENTIONAL, power_budget_db=p).mean_gamma_db
                 for p in cfg.power_budget_db}
        measured[f"gain_db_{n}x4"] = gains
        checks[f"{n}x4 gain >= {need} dB at every budget"] = all(v >= need for v in gains.values())
    worst, bad = 0.0, 0
    n_inv = _n(100, scale)
    for t in range(n_inv):
        p_db = POWER_GRID_DB[t % len(POWER_GRID_DB)]
        P = float(db_to_lin(p_db))
        sc, ch, sy, rot = _instance(5, 4, 0.0, seed, t)
        g_t, _ = ci.solve_balancing_direct(lift_real(rot, QPSK, 1.0, 1.0), 1.0, P, QPSK)
        back = ci.solve_relaxed_direct(lift_real(rot, QPSK, g_t, 1.0), QPSK)
        r = _rel(back.power, P) if back.feasible else math.inf
        worst = max(worst, r)
        bad += r > 1e-3
    checks["powermin(balance(P)) = P within 1e-3"] = bad == 0
    measured["inversion_max_rel_err"] = worst
    return CriterionResult(7, "SINR balancing gain", checks, measured)


@_timed
def criterion_8(scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    """Robust design: degeneracy, monotonicity, loss vs perfect CSI, worst-case audits."""
    deltas = (0.0, 1e-5, 1e-4, 1e-3)
    cfg = harness.ExperimentConfig(n_tx=4, n_users=4, gamma_db=GAMMA_SWEEP_DB, delta_sq=deltas,
                                   trials=_n(200, scale), seed=seed,
                                   schemes=(harness.CI_RELAXED, harness.ROBUST_CI), threads=threads,
                                   trial_logs=False)
    res = harness.run_robust_sweeps(cfg)
    degeneracy, gaps, monotone = {}, {}, True
    for g in cfg.gamma_db:
        nominal = res.row(harness.CI_RELAXED, gamma_db=g, delta_sq=0.0).mean_power_db
        curve = [res.row(harness.ROBUST_CI, gamma_db=g, delta_sq=d).mean_power_db for d in deltas]
        degeneracy[g] = abs(curve[0] - nominal)
        gaps[g] = res.row(harness.ROBUST_CI, gamma_db=g, delta_sq=1e-4).mean_power_db - nominal
        monotone &= all(b >= a - 1e-9 for a, b in zip(curve, curve[1:]))
    worst_margin, worst_excess, audited = math.inf, -math.inf, 0
    rng = np.random.default_rng(seed)
    samples = _n(10_000, scale, 100)
    for t in range(_n(50, scale)):
        sc, ch, sy, rot = _instance(4, 4, 20.0, seed, t)
        for d_sq in deltas[1:]:
            rob = robust.estimate_channels(ch, sc, t, math.sqrt(d_sq))
            sol = robust.solve_robust_powermin(rob, sy, sc.gamma, sc.n0, QPSK)
            if not sol.feasible:
                continue
            audited += 1
            worst_margin = min(worst_margin, float(sol.margins.min()))
            e = rng.standard_normal((samples, 4, 4, 2)) @ np.array([1.0, 1j])
            e *= math.sqrt(d_sq) / np.linalg.norm(e, axis=2, keepdims=True)
            sampled = robust.sampled_margin(sol.w, rob, sy, sc.gamma, sc.n0, QPSK, e)
            # a sampled error can never do worse than the closed-form supremum
            worst_excess = max(worst_excess, float(np.max(sol.margins[None] - sampled)))
    return CriterionResult(8, "robust design", {
        "delta -> 0 within 0.05 dB": max(degeneracy.values()) <= 0.05,
        "power nondecreasing in delta_sq": bool(monotone),
        "gap <= 1.5 dB at delta_sq=1e-4": max(gaps.values()) <= 1.5,
        "worst-case margins >= -1e-6": worst_margin >= -1e-6,
        "sampled errors never beat the supremum": worst_excess <= 1e-9,
    }, {"degeneracy_db": degeneracy, "gap_db": gaps, "min_margin": worst_margin,
        "max_sample_excess": worst_excess, "audited_solutions": audited, "samples_per_audit": samples})


@_timed
def criterion_9(scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    """Simulated SER of CI-relaxed precoders against the geometric bound."""
    cfg = harness.ExperimentConfig(n_tx=5, n_users=4, gamma_db=(7.0, 10.0, 13.0), trials=_n(1000, scale),
                                   ser_draws=250, seed=seed, schemes=(harness.CI_RELAXED,),
                                   threads=threads, trial_logs=False)
    res = harness.run_ser_check(cfg)
    checks, measured = {}, {}
    for row in res.rows:
        sigma = math.sqrt(row.bound * (1 - row.bound) / row.symbols)
        limit = row.bound + 3 * sigma
        checks[f"SER <= bound + 3 sigma at {row.gamma_db:g} dB"] = row.ser <= limit
        measured[row.gamma_db] = {"ser": row.ser, "bound": row.bound, "limit": limit, "symbols": row.symbols}
    return CriterionResult(9, "SER bound", checks, measured)


@_timed
def criterion_10(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """Dual gradient projection at most half the multicast conic time at N=5, K=4."""
    cfg = harness.ExperimentConfig(n_tx=5, n_users=4, gamma_db=(10.0,), trials=_n(200, scale), seed=seed,
                                   warmup=5)
    res = harness.run_timing(cfg)
    gp = res.row("dual-gp").median_time_us
    mc = res.row("multicast-conic").median_time_us
    bc = res.row("broadcast-conic").median_time_us
    return CriterionResult(10, "solver timing", {
        "dual-gp median <= 0.5x multicast conic": gp <= 0.5 * mc,
    }, {"dual_gp_us": gp, "multicast_conic_us": mc, "broadcast_conic_us": bc, "ratio": gp / mc})


def _oracle_relaxed(rot, mod, gamma, n0):
    lift = lift_real(rot, mod, gamma, n0)
    return active_set_qp(np.zeros(2 * lift.n_tx), G=lift.B.T, h=-lift.c)


def _oracle_power(res) -> float:
    return 2.0 * res.objective if res.feasible else math.inf


@_timed
def criterion_11(scale: float = 1.0, seed: int = 0) -> CriterionResult:
    """Every linearly constrained solver path against active-set enumeration on tiny instances."""
    n = _n(50, scale)
    rng = np.random.default_rng(seed + 11)
    errs: dict[str, float] = {}
    verdicts: dict[str, int] = {}

    def check(path, got_feasible, got_power, ref_power):
        ref_feasible = math.isfinite(ref_power)
        if got_feasible != ref_feasible:
            verdicts[path] = verdicts.get(path, 0) + 1
            return
        verdicts.setdefault(path, 0)
        if ref_feasible:
            errs[path] = max(errs.get(path, 0.0), _rel(got_power, ref_power))

    for t in range(n):
        N = int(rng.integers(1, 3))
        K = int(rng.integers(1, 4))
        g_db = float(rng.uniform(0.0, 20.0))
        sc, ch, sy, rot = _instance(N, K, g_db, seed, t)
        gamma, n0 = sc.gamma, sc.n0
        F, G = lift_vectors(rot.H)
        thr = np.sqrt(gamma * n0)
        ref = _oracle_power(_oracle_relaxed(rot, QPSK, gamma, n0))
        lift = lift_real(rot, QPSK, gamma, n0)
        s = ci.solve_relaxed_direct(lift, QPSK)
        check("relaxed direct", s.feasible, s.power, ref)
        s = ci.solve_relaxed_gp(lift, QPSK, refine=False)
        check("relaxed dual-gp", s.feasible, s.power, ref)
        s, _ = ci.solve_broadcast(lift, sy, QPSK)
        check("broadcast", s.feasible, s.power, ref)
        s = ci.solve_qpsk_axis(ch, sy, gamma, n0)
        check("qpsk axis", s.feasible, s.power, ref)
        rob = robust.RobustScenario(ch.H, 0.0)
        s = robust.solve_robust_powermin(rob, sy, gamma, n0, QPSK)
        check("robust at delta=0", s.feasible, s.power, ref)
        # balancing: power is linear in a uniform target, so Gamma_t = P / p(1)
        P = float(db_to_lin(rng.uniform(0.0, 20.0)))
        unit = _oracle_power(_oracle_relaxed(rot, QPSK, 1.0, n0))
        g_ref = P / unit if math.isfinite(unit) else 0.0
        g_t, _ = ci.solve_balancing_direct(lift_real(rot, QPSK, 1.0, n0), n0, P, QPSK)
        check("balancing direct", g_t > 0, g_t, g_ref if g_ref > 0 else math.inf)
        g_t = ci.solve_balancing_bisect(lift_real(rot, QPSK, 1.0, n0), n0, P, 1e-9, QPSK)
        check("balancing bisection", g_t > 0, g_t, g_ref if g_ref > 0 else math.inf)
        g_t, _ = robust.solve_robust_balance(rob, sy, n0, P, QPSK)
        check("robust balancing at delta=0", g_t > 0, g_t, g_ref if g_ref > 0 else math.inf)
        # strict: Im = 0 equalities plus Re >= thr
        o = active_set_qp(np.zeros(2 * N), E=G, e=np.zeros(K), G=-F, h=-thr)
        s = ci.solve_strict(rot, gamma, n0)
        check("strict", s.feasible, s.power, _oracle_power(o))
        # BPSK half-planes on a BPSK frame of the same channels
        _, chb, syb, rotb = _instance(N, K, g_db, seed, t, BPSK)
        Fb, _ = lift_vectors(rotb.H)
        o = active_set_qp(np.zeros(2 * N), G=-Fb, h=-thr)
        s = ci.solve_bpsk(rotb, gamma, n0)
        check("bpsk", s.feasible, s.power, _oracle_power(o))
        # generic conic solver on a random linearly constrained problem
        q = rng.standard_normal(4)
        Gr = rng.standard_normal((6, 4))
        hr = rng.standard_normal(6)
        o = active_set_qp(q, G=Gr, h=hr)
        sol = conic.solve(conic.ConicProblem(q=q, G=Gr, h=hr))
        ref_obj = o.objective if o.feasible else math.inf
        if sol.optimal != o.feasible:
            verdicts["conic generic"] = verdicts.get("conic generic", 0) + 1
        else:
            verdicts.setdefault("conic generic", 0)
            if o.feasible:
                errs["conic generic"] = max(errs.get("conic generic", 0.0),
                                            abs(sol.objective - ref_obj) / max(1.0, abs(ref_obj)))
    checks = {f"{p} matches oracle": errs.get(p, 0.0) <= 1e-6 and verdicts[p] == 0 for p in verdicts}
    return CriterionResult(11, "active-set oracle", checks,
                           {"instances": n, "max_rel_err": errs, "verdict_mismatches": verdicts})


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}
PARALLEL = {1, 2, 7, 8, 9}  # criteria whose sweeps take a worker count


def run_criterion(number: int, scale: float = 1.0, seed: int = 0, threads: int = 1) -> CriterionResult:
    fn = CRITERIA[number]
    if number in PARALLEL:
        return fn(scale=scale, seed=seed, threads=threads)
    return fn(scale=scale, seed=seed)


def run_all(numbers=None, scale: float = 1.0, seed: int = 0, threads: int = 1, report=None) -> list[CriterionResult]:
    """Run the selected criteria in order; ``report`` receives each result as it finishes."""
    out = []
    for k in numbers or sorted(CRITERIA):
        res = run_criterion(k, scale, seed, threads)
        if report is not None:
            report(res)
        out.append(res)
    return out

