"""System model: channels, PSK symbols, symbol-phase rotation and real lifting.

Everything here is a pure function of immutable inputs. Random draws are
keyed on ``(seed, trial, stream)`` so any trial can be regenerated in
isolation, in any order, on any worker.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# independent random substreams of one trial
STREAM_CHANNEL = 0
STREAM_SYMBOL = 1
STREAM_CSI_ERROR = 2
STREAM_NOISE = 3


class Outcome(str, enum.Enum):
    """Verdict of a precoder design."""

    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    FAILED = "failed"  # solver stopped without a verdict


def _frozen(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ModulationSpec:
    """M-PSK constellation with points at ``2*pi*m/M + offset``.

    QPSK is rotated by ``pi/4`` so that its points sit at ``(+-1 +-1j)/sqrt(2)``
    and the decision boundaries are the real and imaginary axes.
    """

    order: int

    def __post_init__(self):
        m = self.order
        if m < 2 or m & (m - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {m}")

    @property
    def theta(self) -> float:
        """Half-width of the constructive sector."""
        return math.pi / self.order

    @property
    def tan_theta(self) -> float:
        if self.order == 2:
            return math.inf
        return math.tan(self.theta)

    @property
    def offset(self) -> float:
        return math.pi / 4 if self.order == 4 else 0.0

    @property
    def name(self) -> str:
        return {2: "bpsk", 4: "qpsk"}.get(self.order, f"{self.order}psk")

    @classmethod
    def from_name(cls, name: str) -> "ModulationSpec":
        table = {"bpsk": 2, "qpsk": 4, "8psk": 8, "16psk": 16}
        key = str(name).lower()
        if key not in table:
            raise ValueError(f"unsupported modulation {name!r}")
        return cls(table[key])

    def phases(self, indices) -> np.ndarray:
        return 2 * np.pi * np.asarray(indices) / self.order + self.offset

    def points(self) -> np.ndarray:
        return np.exp(1j * self.phases(np.arange(self.order)))


BPSK = ModulationSpec(2)
QPSK = ModulationSpec(4)
PSK8 = ModulationSpec(8)


@dataclass(frozen=True)
class Scenario:
    """Dimensions, noise level and per-user SINR targets (linear)."""

    n_tx: int
    n_users: int
    n0: float
    gamma: np.ndarray
    modulation: ModulationSpec = QPSK
    seed: int = 0

    def __post_init__(self):
        gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.n_users,))
        object.__setattr__(self, "gamma", _frozen(gamma))
        if self.n_tx < 1 or self.n_users < 1:
            raise ValueError("need at least one antenna and one user")
        if not self.n0 > 0:
            raise ValueError("noise power must be positive")
        if np.any(self.gamma <= 0):
            raise ValueError("SINR targets must be positive")

    @classmethod
    def uniform(cls, n_tx, n_users, gamma_db, n0=1.0, modulation=QPSK, seed=0):
        return cls(n_tx, n_users, n0, np.full(n_users, float(db_to_lin(gamma_db))),
                   modulation, seed)

    @property
    def thresholds(self) -> np.ndarray:
        """Per-user amplitude thresholds ``sqrt(Gamma_i * N0)``."""
        return np.sqrt(self.gamma * self.n0)

    def with_gamma(self, gamma) -> "Scenario":
        return Scenario(self.n_tx, self.n_users, self.n0, gamma, self.modulation, self.seed)


@dataclass(frozen=True)
class ChannelSet:
    """Downlink channels; row ``i`` is ``h_i^T``."""

    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        if not np.all(np.isfinite(H)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "H", _frozen(H))

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class SymbolFrame:
    indices: np.ndarray
    modulation: ModulationSpec

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if np.any((idx < 0) | (idx >= self.modulation.order)):
            raise ValueError("symbol index outside constellation")
        object.__setattr__(self, "indices", _frozen(idx))

    @property
    def phases(self) -> np.ndarray:
        return self.modulation.phases(self.indices)

    @property
    def symbols(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @classmethod
    def from_phases(cls, phases, modulation: ModulationSpec) -> "SymbolFrame":
        step = 2 * np.pi / modulation.order
        idx = np.rint((np.asarray(phases) - modulation.offset) / step).astype(int)
        return cls(np.mod(idx, modulation.order), modulation)


@dataclass(frozen=True)
class RotatedChannels:
    """``h~_i = h_i exp(j(phi_1 - phi_i))``, user 1 being the phase reference."""

    H: np.ndarray
    phases: np.ndarray

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class RealLifting:
    """Real-valued form of the sector constraints.

    With ``w2 = [Re w; -Im w]`` and ``w1 = [Im w; Re w] = Pi^T w2``:
    ``Re(h~_i^T w) = f_i^T w2`` and ``Im(h~_i^T w) = g_i^T w2`` where
    ``g_i = Pi f_i``. The 2K sector rows are ``B^T w2 + c <= 0``.
    """

    F: np.ndarray  # (K, 2N), row i = f_i
    G: np.ndarray  # (K, 2N), row i = g_i
    Pi: np.ndarray  # (2N, 2N)
    B: np.ndarray  # (2N, 2K)
    c: np.ndarray  # (2K,)
    thresholds: np.ndarray  # (K,) sqrt(Gamma_i N0)
    tan_theta: float
    n0: float

    @property
    def n_tx(self) -> int:
        return self.F.shape[1] // 2

    @property
    def n_users(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class SectorMargins:
    """Position of noiseless receive points relative to their constructive sectors.

    ``slack >= 0`` iff the relaxed sector constraint holds. ``theta_eff`` is
    the effective angle ``atan(tan(theta) * (1 - thr / alpha_r))``; it is NaN
    where ``alpha_r <= thr`` (``defined`` is False there).
    """

    alpha_r: np.ndarray
    alpha_i: np.ndarray
    slack: np.ndarray
    theta_eff: np.ndarray
    defined: np.ndarray
    thresholds: np.ndarray = field(repr=False)

    def satisfied(self, rtol: float = 1e-6) -> np.ndarray:
        return self.slack >= -rtol * self.thresholds

    @property
    def min_relative_slack(self) -> float:
        return float(np.min(self.slack / self.thresholds))


@dataclass(frozen=True)
class PrecoderSet:
    """Per-user precoders, row ``k`` is ``t_k``."""

    T: np.ndarray

    @property
    def n_users(self) -> int:
        return self.T.shape[0]


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    """Generator for one (seed, trial, stream) triple, independent of call order."""
    if trial < 0:
        raise ValueError("trial index must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    z = rng.standard_normal(shape + (2,))
    return math.sqrt(var / 2) * (z[..., 0] + 1j * z[..., 1])


def gen_channels(scenario: Scenario, trial: int) -> ChannelSet:
    rng = trial_rng(scenario.seed, trial, STREAM_CHANNEL)
    return ChannelSet(complex_gaussian(rng, (scenario.n_users, scenario.n_tx)))


def gen_symbols(scenario: Scenario, trial: int) -> SymbolFrame:
    rng = trial_rng(scenario.seed, trial, STREAM_SYMBOL)
    mod = scenario.modulation
    return SymbolFrame(rng.integers(0, mod.order, size=scenario.n_users), mod)


def rotate_channels(channels: ChannelSet, symbols: SymbolFrame) -> RotatedChannels:
    phi = symbols.phases
    if phi.shape[0] != channels.n_users:
        raise ValueError("one symbol per user required")
    rot = np.exp(1j * (phi[0] - phi))
    rot[0] = 1.0
    return RotatedChannels(_frozen(channels.H * rot[:, None]), _frozen(phi))


def perm_matrix(n_tx: int) -> np.ndarray:
    """``Pi = [[0, I], [-I, 0]]``."""
    eye = np.eye(n_tx)
    zero = np.zeros((n_tx, n_tx))
    return np.block([[zero, eye], [-eye, zero]])


def lift_vectors(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``f_i = [Re h_i; Im h_i]`` and ``g_i = Pi f_i = [Im h_i; -Re h_i]``."""
    F = np.hstack([H.real, H.imag])
    G = np.hstack([H.imag, -H.real])
    return F, G


def w_to_w2(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, -w.imag])


def w2_to_w(w2: np.ndarray) -> np.ndarray:
    n = w2.shape[0] // 2
    return w2[:n] - 1j * w2[n:]


def w_to_w1(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.imag, w.real])


def lift_real(rot: RotatedChannels, mod: ModulationSpec, gamma, n0: float) -> RealLifting:
    if mod.order < 4:
        raise ValueError("sector lifting needs M >= 4; BPSK uses the half-plane form")
    K, N = rot.H.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    F, G = lift_vectors(rot.H)
    t = mod.tan_theta
    thr = np.sqrt(gamma * n0)
    B = np.hstack([(G - t * F).T, (-G - t * F).T])
    c = t * np.concatenate([thr, thr])
    return RealLifting(_frozen(F), _frozen(G), _frozen(perm_matrix(N)), _frozen(B),
                       _frozen(c), _frozen(thr), t, float(n0))


def check_constructive(z, phi, gamma, n0: float, mod: ModulationSpec) -> SectorMargins:
    """Sector margins of noiseless receive points ``z`` for symbols of phase ``phi``.

    Inputs broadcast elementwise. For BPSK the sector is the half-plane
    ``alpha_r >= thr`` and the slack is ``alpha_r - thr``.
    """
    a = np.asarray(z, dtype=complex) * np.exp(-1j * np.asarray(phi, dtype=float))
    thr = np.sqrt(np.asarray(gamma, dtype=float) * n0)
    a, thr = np.broadcast_arrays(a, thr)
    ar, ai = a.real, a.imag
    defined = ar > thr
    with np.errstate(divide="ignore", invalid="ignore"):
        if mod.order == 2:
            slack = ar - thr
            teff = np.where(defined, np.pi / 2, np.nan)
        else:
            t = mod.tan_theta
            slack = (ar - thr) * t - np.abs(ai)
            teff = np.where(defined, np.arctan(t * (1 - thr / ar)), np.nan)
    return SectorMargins(ar, ai, slack, teff, defined, thr)


def receive_points(H: np.ndarray, T: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """Noiseless receive points ``h_i^T sum_k t_k d_k``."""
    return H @ (T.T @ symbols)


def instantaneous_power(precoders: PrecoderSet, symbols: SymbolFrame) -> float:
    phi = symbols.phases
    x = precoders.T.T @ np.exp(1j * (phi - phi[0]))
    return float(np.vdot(x, x).real)
