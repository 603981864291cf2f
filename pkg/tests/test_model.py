import math

import numpy as np
import pytest

from ciprecoding.model import (
    BPSK,
    PSK8,
    QPSK,
    ChannelSet,
    ModulationSpec,
    PrecoderSet,
    Scenario,
    SymbolFrame,
    check_constructive,
    gen_channels,
    gen_symbols,
    instantaneous_power,
    lift_real,
    perm_matrix,
    rotate_channels,
    w2_to_w,
    w_to_w1,
    w_to_w2,
)
from ciprecoding.ci import split_precoders


def _random_rot(rng, N, K, mod=QPSK):
    H = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    sy = SymbolFrame(rng.integers(0, mod.order, K), mod)
    return rotate_channels(ChannelSet(H), sy), sy


# ---------------------------------------------------------------------------
# modulation and scenario
# ---------------------------------------------------------------------------

def test_modulation_geometry():
    assert QPSK.theta == pytest.approx(math.pi / 4)
    assert QPSK.tan_theta == pytest.approx(1.0)
    assert PSK8.theta == pytest.approx(math.pi / 8)
    assert math.isinf(BPSK.tan_theta)
    assert np.allclose(np.abs(QPSK.points()), 1.0)
    assert np.allclose(QPSK.points() * math.sqrt(2), [1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])


@pytest.mark.parametrize("order", [0, 1, 3, 6])
def test_modulation_rejects_bad_order(order):
    with pytest.raises(ValueError):
        ModulationSpec(order)


def test_modulation_from_name():
    assert ModulationSpec.from_name("8PSK") == PSK8
    with pytest.raises(ValueError, match="16qam"):
        ModulationSpec.from_name("16qam")


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(2, 2, 0.0, 1.0)
    with pytest.raises(ValueError):
        Scenario(2, 2, 1.0, [1.0, -1.0])
    with pytest.raises(ValueError):
        Scenario(0, 2, 1.0, 1.0)
    sc = Scenario.uniform(5, 3, 10.0, 2.0)
    assert np.allclose(sc.gamma, 10.0)
    assert np.allclose(sc.thresholds, math.sqrt(20.0))


# ---------------------------------------------------------------------------
# random generation
# ---------------------------------------------------------------------------

def test_channels_deterministic_per_trial():
    sc = Scenario.uniform(4, 3, 10.0, seed=42)
    a, b = gen_channels(sc, 7), gen_channels(sc, 7)
    assert np.array_equal(a.H, b.H)
    assert not np.array_equal(a.H, gen_channels(sc, 8).H)


def test_channels_independent_of_call_order():
    sc = Scenario.uniform(3, 2, 0.0, seed=5)
    forward = [gen_channels(sc, t).H for t in range(5)]
    backward = [gen_channels(sc, t).H for t in reversed(range(5))][::-1]
    assert all(np.array_equal(x, y) for x, y in zip(forward, backward))


def test_channel_second_moment():
    sc = Scenario.uniform(10, 10, 0.0, seed=3)
    pooled = np.concatenate([gen_channels(sc, t).H.ravel() for t in range(1000)])
    p = np.abs(pooled) ** 2  # exponential with mean 1 and variance 1
    sigma = 1.0 / math.sqrt(p.size)
    assert abs(p.mean() - 1.0) <= 1.96 * sigma
    assert abs(pooled.real.var() - 0.5) < 0.01 and abs(pooled.imag.var() - 0.5) < 0.01


def test_bpsk_and_qpsk_phase_sets():
    b = gen_symbols(Scenario.uniform(2, 50, 0.0, modulation=BPSK, seed=1), 0)
    assert set(np.round(np.mod(b.phases, 2 * np.pi), 12)) <= {0.0, round(math.pi, 12)}
    q = gen_symbols(Scenario.uniform(2, 50, 0.0, modulation=QPSK, seed=1), 0)
    allowed = {round(k * math.pi / 4, 12) for k in (1, 3, 5, 7)}
    assert set(np.round(q.phases, 12)) <= allowed
    assert np.allclose(np.abs(q.symbols), 1.0)


def test_8psk_index_frequencies():
    sc = Scenario.uniform(1, 100, 0.0, modulation=PSK8, seed=9)
    idx = np.concatenate([gen_symbols(sc, t).indices for t in range(1000)])
    n = idx.size
    counts = np.bincount(idx, minlength=8)
    sigma = math.sqrt(n * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - n / 8) <= 3 * sigma)


def test_symbol_frame_from_phases_roundtrip():
    sy = SymbolFrame([0, 3, 1, 2], QPSK)
    assert np.array_equal(SymbolFrame.from_phases(sy.phases, QPSK).indices, sy.indices)
    with pytest.raises(ValueError):
        SymbolFrame([4], QPSK)


# ---------------------------------------------------------------------------
# rotation and lifting
# ---------------------------------------------------------------------------

def test_rotation_equal_phases_is_identity(rng):
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    rot = rotate_channels(ChannelSet(H), SymbolFrame([2, 2, 2], QPSK))
    assert np.array_equal(rot.H, H)


def test_rotation_half_turn(rng):
    H = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    rot = rotate_channels(ChannelSet(H), SymbolFrame([0, 1], BPSK))
    assert np.array_equal(rot.H[0], H[0])
    assert np.allclose(rot.H[1], -H[1], atol=1e-15)


def test_rotation_is_isometry(rng):
    rot, _ = _random_rot(rng, 5, 4)
    sc = Scenario.uniform(5, 4, 0.0, seed=0)
    for t in range(20):
        ch, sy = gen_channels(sc, t), gen_symbols(sc, t)
        r = rotate_channels(ch, sy)
        assert np.allclose(np.abs(r.H), np.abs(ch.H), rtol=0, atol=1e-15)
        assert np.array_equal(r.H[0], ch.H[0])


def test_lifting_structure(rng):
    rot, _ = _random_rot(rng, 3, 4)
    lift = lift_real(rot, QPSK, 10.0, 1.0)
    Pi = lift.Pi
    assert np.array_equal(Pi.T @ Pi, np.eye(6))
    assert np.array_equal(Pi.T, -Pi)
    assert np.allclose(np.einsum("ij,ij->i", lift.F, lift.G), 0.0, atol=1e-14)
    norms = np.linalg.norm(rot.H, axis=1)
    assert np.allclose(np.linalg.norm(lift.F, axis=1), norms)
    assert np.allclose(np.linalg.norm(lift.G, axis=1), norms)
    assert np.allclose(lift.G, lift.F @ Pi.T)
    assert lift.B.shape == (6, 8)
    assert np.allclose(lift.c, math.sqrt(10.0) * np.ones(8))


def test_lifting_single_antenna(rng):
    rot = rotate_channels(ChannelSet([[1.0 + 0j]]), SymbolFrame([0], QPSK))
    lift = lift_real(rot, QPSK, 1.0, 1.0)
    assert np.array_equal(lift.F[0], [1.0, 0.0])
    assert lift.F[0] @ lift.G[0] == 0.0
    for w in rng.standard_normal((100, 1)) + 1j * rng.standard_normal((100, 1)):
        z = (rot.H @ w)[0]
        assert lift.F[0] @ w_to_w2(w) == pytest.approx(z.real, abs=1e-14)
        assert lift.G[0] @ w_to_w2(w) == pytest.approx(z.imag, abs=1e-14)


def test_lifting_faithful_to_complex_arithmetic(rng):
    worst = 0.0
    for _ in range(1000):
        rot, _ = _random_rot(rng, 3, 2)
        lift = lift_real(rot, QPSK, 1.0, 1.0)
        w = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        w2 = w_to_w2(w)
        z = rot.H @ w
        worst = max(worst, np.max(np.abs(lift.F @ w2 - z.real)), np.max(np.abs(lift.G @ w2 - z.imag)))
    assert worst < 1e-12


def test_lifting_vector_conventions(rng):
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w2 = w_to_w2(w)
    assert np.allclose(w2_to_w(w2), w)
    assert np.allclose(w_to_w1(w), perm_matrix(4).T @ w2)


def test_lifting_rejects_bpsk(rng):
    rot, _ = _random_rot(rng, 2, 2, BPSK)
    with pytest.raises(ValueError):
        lift_real(rot, BPSK, 1.0, 1.0)


def test_qpsk_axis_set_equals_sector_set(rng):
    """Per-axis thresholds sqrt(Gamma N0 / 2) describe the rotated sector exactly."""
    gamma, n0 = 3.0, 0.7
    thr = math.sqrt(gamma * n0)
    for m in range(4):
        phi = QPSK.phases(m)
        d = np.exp(1j * phi)
        z = (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)) * 3 * thr
        axis = (np.sign(d.real) * z.real >= math.sqrt(gamma * n0 / 2)) & \
               (np.sign(d.imag) * z.imag >= math.sqrt(gamma * n0 / 2))
        sector = check_constructive(z, phi, gamma, n0, QPSK).slack >= 0
        assert np.array_equal(axis, sector)


# ---------------------------------------------------------------------------
# sector margins and power
# ---------------------------------------------------------------------------

def test_margins_at_apex():
    phi, g, n0 = QPSK.phases(1), 2.0, 0.5
    m = check_constructive(math.sqrt(g * n0) * np.exp(1j * phi), phi, g, n0, QPSK)
    assert m.slack == pytest.approx(0.0, abs=1e-15)
    assert m.alpha_i == pytest.approx(0.0, abs=1e-15)
    assert not m.defined


def test_margins_twice_the_threshold():
    phi, g, n0 = QPSK.phases(2), 4.0, 1.0
    thr = math.sqrt(g * n0)
    m = check_constructive(2 * thr * np.exp(1j * phi), phi, g, n0, QPSK)
    assert m.slack == pytest.approx(thr)
    assert math.tan(m.theta_eff) == pytest.approx(QPSK.tan_theta / 2)
    assert m.theta_eff <= QPSK.theta


def test_margins_on_decision_ray_negative():
    phi = QPSK.phases(0)
    z = 5.0 * np.exp(1j * (phi + math.pi / 4))
    assert check_constructive(z, phi, 1.0, 1.0, QPSK).slack < 0


def test_margins_bpsk_half_plane():
    m = check_constructive([2.0 + 5j, 0.5], 0.0, 1.0, 1.0, BPSK)
    assert np.allclose(m.slack, [1.0, -0.5])


def test_instantaneous_power_of_split_precoders(rng):
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    sy = SymbolFrame([0, 3, 1], QPSK)
    assert instantaneous_power(split_precoders(w, sy), sy) == pytest.approx(np.vdot(w, w).real)


def test_instantaneous_power_matched_filter():
    h = np.array([1.0 + 1j, 0.5 - 2j])
    g, n0 = 2.0, 1.0
    t = math.sqrt(g * n0) * h.conj() / np.vdot(h, h).real
    sy = SymbolFrame([0], QPSK)
    assert instantaneous_power(PrecoderSet(t[None]), sy) == pytest.approx(g * n0 / np.vdot(h, h).real)
    assert instantaneous_power(PrecoderSet(np.zeros((2, 2))), SymbolFrame([0, 1], QPSK)) == 0.0
