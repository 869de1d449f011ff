"""Stochastic trajectory engine for continuous measurement with feedback.

Each trajectory co-integrates two coupled pieces with a shared Wiener
increment per measurement channel:

* the conditioned density matrix, evolving under the diffusive stochastic
  master equation for weak monitoring of Hermitian operators A_k with
  strength lam (unitary drift, backaction dissipators, and the nonlinear
  innovation term), and
* the filtered signal vector of each channel, dG = M G dt + b z_k dt, where
  the record z_k dt = <A_k> dt + dW_k / sqrt(4 lam) reuses the same dW_k
  that drove the state update.

Integration is Euler-Maruyama on the density matrix with re-Hermitization
and trace renormalization after every step.  Feedback enters by recomputing
the Hamiltonian from the current signals at every step; for the trap-shift
rules used by the cooling protocols the engine exploits their linearity in
x and p so whole ensembles can be stepped as one batched array operation.

Ensembles are reproducible by construction: trajectory i draws its noise
from ``NoiseStream(base_seed, i)`` and statistics are reduced in trajectory
order, so results are independent of chunking or execution order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .filters import FilterModel, bandpass, lowpass_cascade
from .moment_systems import ProtocolKind, ProtocolParams
from .numerics import NoiseStream, NumericalError

#: Sum of the top two basis-state populations above which a run is flagged
#: as truncation limited.
EDGE_POPULATION_LIMIT = 1e-3

_HERMITICITY_TOL = 1e-12
_TRACE_TOL = 1e-10


class TrajectoryError(NumericalError):
    """A trajectory produced a non-finite state."""


# ---------------------------------------------------------------------------
# states and operators


@dataclass
class QuantumState:
    """Finite-dimensional density matrix (the conditioned state).

    Hermiticity (to 1e-12) and unit trace (to 1e-10) are enforced on
    construction; positivity is not, since the integrator can transiently
    produce slightly negative eigenvalues (see :meth:`min_eigenvalue`).
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got {rho.shape}")
        if not np.isfinite(rho.view(float)).all():
            raise ValueError("density matrix has non-finite entries")
        if np.abs(rho - rho.conj().T).max() > _HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > _TRACE_TOL or abs(np.trace(rho).imag) > _TRACE_TOL:
            raise ValueError("density matrix trace must be 1")
        self.rho = rho

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def ground_state(cls, dim: int) -> "QuantumState":
        """The lowest basis state |0><0|."""
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return cls(rho)

    @classmethod
    def ground_state_of(cls, hamiltonian: np.ndarray) -> "QuantumState":
        """Pure state built from the lowest eigenvector of a Hermitian matrix."""
        _, vecs = np.linalg.eigh(hamiltonian)
        v = vecs[:, 0]
        return cls(np.outer(v, v.conj()))

    def expectation(self, op: np.ndarray) -> float:
        """Real expectation value of a Hermitian operator."""
        return float(np.trace(self.rho @ op).real)

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def populations(self) -> np.ndarray:
        return np.diag(self.rho).real.copy()

    def min_eigenvalue(self) -> float:
        """Diagnostic: most negative eigenvalue (should stay above -1e-6)."""
        return float(np.linalg.eigvalsh(self.rho).min())


@dataclass
class TruncatedOscillator:
    """Dimensionless oscillator operators on a truncated number basis.

    x and p are built from ladder operators so that [x, p] = i holds exactly
    away from the last two basis states, and H0 = (omega/2)(p^2 + x^2).
    """

    omega: float
    dim: int
    H0: np.ndarray
    x: np.ndarray
    p: np.ndarray


def build_truncated_oscillator(n_fock: int, omega: float) -> TruncatedOscillator:
    """Construct (H0, x, p) on an n_fock-dimensional number basis.

    Requires n_fock >= 3 so that at least one commutator row is exact.
    """
    if n_fock < 3:
        raise ValueError(f"need at least 3 basis states, got {n_fock}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    n = np.arange(n_fock - 1)
    a = np.zeros((n_fock, n_fock), dtype=complex)
    a[n, n + 1] = np.sqrt(n + 1.0)
    ad = a.conj().T
    x = (a + ad) / np.sqrt(2.0)
    p = 1j * (ad - a) / np.sqrt(2.0)
    H0 = 0.5 * omega * (p @ p + x @ x)
    return TruncatedOscillator(float(omega), n_fock, H0, x, p)


@dataclass
class ShiftedTrapFeedback:
    """Trap-recentering feedback H(G) = (omega/2)[(p - g_p)^2 + (x - g_x)^2].

    g_x and g_p are the component ``tap_index`` of the x- and p-channel
    signal vectors.  Calling the instance with the stacked signals (one row
    per channel) returns the Hermitian feedback Hamiltonian.
    """

    oscillator: TruncatedOscillator
    tap_index: int

    def __post_init__(self):
        if self.tap_index < 0:
            raise ValueError("tap index must be nonnegative")

    def hamiltonian(self, signals: np.ndarray) -> np.ndarray:
        signals = np.asarray(signals, dtype=float)
        if signals.ndim != 2 or signals.shape[0] != 2:
            raise ValueError("expected signals with one row per (x, p) channel")
        if self.tap_index >= signals.shape[1]:
            raise ValueError(
                f"tap index {self.tap_index} out of range for "
                f"{signals.shape[1]}-component signals")
        osc = self.oscillator
        gx = signals[0, self.tap_index]
        gp = signals[1, self.tap_index]
        eye = np.eye(osc.dim)
        X = osc.x - gx * eye
        P = osc.p - gp * eye
        return 0.5 * osc.omega * (P @ P + X @ X)

    __call__ = hamiltonian


def shifted_trap_feedback(oscillator: TruncatedOscillator,
                          tap_index: int) -> ShiftedTrapFeedback:
    """Feedback rule recentering the trap on the tapped signal component."""
    return ShiftedTrapFeedback(oscillator, tap_index)


FeedbackRule = Union[ShiftedTrapFeedback, Callable[[np.ndarray], np.ndarray], None]


# ---------------------------------------------------------------------------
# system model


@dataclass
class SystemModel:
    """Everything the engine needs: operators, filter and feedback rule.

    Each measured operator defines one channel with its own record and its
    own copy of the filter.  ``feedback`` maps the stacked signal vectors of
    all channels to a Hermitian Hamiltonian; ``None`` means evolve under H0
    alone.
    """

    H0: np.ndarray
    measured_ops: tuple
    lam: float
    filter_model: Optional[FilterModel] = None
    feedback: FeedbackRule = None

    def __post_init__(self):
        self.H0 = np.asarray(self.H0, dtype=complex)
        d = self.H0.shape[0]
        if self.H0.shape != (d, d):
            raise ValueError("H0 must be square")
        ops = tuple(np.asarray(A, dtype=complex) for A in self.measured_ops)
        for A in (self.H0,) + ops:
            if A.shape != (d, d):
                raise ValueError("all operators must share the Hilbert dimension")
            if np.abs(A - A.conj().T).max() > _HERMITICITY_TOL:
                raise ValueError("operators must be Hermitian")
        if ops and not self.lam > 0:
            raise ValueError("measurement strength lam must be positive")
        if self.lam < 0:
            raise ValueError("measurement strength lam must be nonnegative")
        self.measured_ops = ops

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.measured_ops)

    @property
    def n_signal_components(self) -> int:
        return self.filter_model.n if self.filter_model is not None else 0


_CASCADE_TAP = {ProtocolKind.LOWPASS1: 0, ProtocolKind.LOWPASS2: 1,
                ProtocolKind.LOWPASS3: 2, ProtocolKind.BANDPASS: 0}


def protocol_filter(params: ProtocolParams) -> FilterModel:
    """The filter a protocol applies to each quadrature record."""
    g, Om = params.gamma, params.Omega
    if params.kind is ProtocolKind.LOWPASS1:
        return lowpass_cascade((g,))
    if params.kind is ProtocolKind.LOWPASS2:
        return lowpass_cascade((g, Om))
    if params.kind is ProtocolKind.LOWPASS3:
        return lowpass_cascade((g, Om, Om))
    return bandpass(g, Om)


def protocol_tap_index(kind: ProtocolKind) -> int:
    """Which filter component the protocol feeds back (0-based)."""
    return _CASCADE_TAP[kind]


def oscillator_cooling_model(params: ProtocolParams, n_fock: int) -> SystemModel:
    """Monitored oscillator with trap-shift feedback on filtered quadratures.

    Position and momentum are both measured with strength ``params.lam``;
    each record passes through the protocol's filter and the trap is
    recentered on the fed-back component.
    """
    osc = build_truncated_oscillator(n_fock, params.omega)
    fm = protocol_filter(params)
    fb = ShiftedTrapFeedback(osc, protocol_tap_index(params.kind))
    return SystemModel(osc.H0, (osc.x, osc.p), params.lam, fm, fb)


def measurement_only_model(n_fock: int, omega: float, lam: float,
                           filter_model: Optional[FilterModel] = None) -> SystemModel:
    """Monitored oscillator without feedback (pure measurement backaction)."""
    osc = build_truncated_oscillator(n_fock, omega)
    return SystemModel(osc.H0, (osc.x, osc.p), lam, filter_model, None)


def frozen_signal_model(filter_model: FilterModel, lam: float,
                        mean_A: float = 0.0) -> SystemModel:
    """Signal-only model: the record mean is frozen at ``mean_A``.

    Uses a trivial one-dimensional Hilbert space whose measured operator is
    the constant mean_A, so the quantum state is inert and the filter sees
    z dt = mean_A dt + dW / sqrt(4 lam).  Useful as an exact
    Ornstein-Uhlenbeck reference for the filter statistics.
    """
    H0 = np.zeros((1, 1), dtype=complex)
    A = np.array([[mean_A]], dtype=complex)
    return SystemModel(H0, (A,), lam, filter_model, None)


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class TrajectoryConfig:
    """Run configuration for :func:`run_ensemble`.

    ``record_stride`` must divide ``n_steps``; observables are recorded at
    step 0 and every stride-th step after.  ``chunk_size`` only bounds
    memory, results are bit-identical for any value.
    """

    dt: float
    n_steps: int
    n_traj: int
    base_seed: int
    record_stride: int = 1
    initial_state: Optional[QuantumState] = None
    initial_signals: Optional[np.ndarray] = None
    chunk_size: int = 256

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or self.n_traj < 1 or self.chunk_size < 1:
            raise ValueError("n_steps, n_traj and chunk_size must be at least 1")
        if self.record_stride < 1 or self.n_steps % self.record_stride:
            raise ValueError("record_stride must be positive and divide n_steps")


@dataclass
class TrajectoryRecord:
    """Ensemble observables on the recording grid.

    ``op_mean``/``op_stderr`` hold the ensemble statistics of each measured
    operator's conditional expectation (one row per channel);
    ``signal_mean``/``signal_var`` the per-component statistics of each
    channel's filtered signals, shape (channels, components, times).
    """

    times: np.ndarray
    energy_mean: np.ndarray
    energy_stderr: np.ndarray
    op_mean: np.ndarray
    op_stderr: np.ndarray
    signal_mean: np.ndarray
    signal_var: np.ndarray
    n_traj: int
    max_edge_population: float
    truncation_warning: bool


# ---------------------------------------------------------------------------
# stepping kernel


class _Engine:
    """Precomputed batched stepping kernel for one SystemModel."""

    def __init__(self, model: SystemModel):
        self.model = model
        self.d = model.dim
        self.n_ch = model.n_channels
        self.m = model.n_signal_components
        self.ops = model.measured_ops
        self.ops_sq = tuple(A @ A for A in self.ops)
        self.H0 = model.H0
        self.lam = model.lam
        self.sqrt_lam = np.sqrt(model.lam) if self.n_ch else 0.0
        self.noise_gain = 1.0 / np.sqrt(4.0 * model.lam) if self.n_ch else 0.0
        self.M_T = model.filter_model.M.T.copy() if self.m else None
        self.b = model.filter_model.b if self.m else None
        fb = model.feedback
        if fb is None:
            self.mode = "free"
        elif isinstance(fb, ShiftedTrapFeedback):
            if self.n_ch != 2:
                raise ValueError("trap-shift feedback needs the (x, p) channel pair")
            if self.m == 0:
                raise ValueError("trap-shift feedback needs a filter model")
            if fb.tap_index >= self.m:
                raise ValueError(f"tap index {fb.tap_index} out of range for "
                                 f"{self.m}-component filter")
            self.mode = "trap"
            self.osc = fb.oscillator
            self.tap = fb.tap_index
        else:
            self.mode = "generic"
            self.fb = fb

    def op_means(self, rho: np.ndarray) -> np.ndarray:
        """Conditional <A_k> for the whole batch, shape (n, channels)."""
        if not self.n_ch:
            return np.zeros((rho.shape[0], 0))
        return np.stack([np.einsum('nij,ji->n', rho, A).real for A in self.ops],
                        axis=1)

    def _commutator(self, rho: np.ndarray, G: np.ndarray) -> np.ndarray:
        if self.mode == "trap":
            # H(G) = H0 - w(gx x + gp p) + const; the constant drops out.
            w = self.osc.omega
            gx = (w * G[:, 0, self.tap])[:, None, None]
            gp = (w * G[:, 1, self.tap])[:, None, None]
            return (self.H0 @ rho - rho @ self.H0
                    - gx * (self.osc.x @ rho - rho @ self.osc.x)
                    - gp * (self.osc.p @ rho - rho @ self.osc.p))
        if self.mode == "generic":
            H = np.stack([np.asarray(self.fb(Gi), dtype=complex) for Gi in G])
            return H @ rho - rho @ H
        return self.H0 @ rho - rho @ self.H0

    def step_batch(self, rho: np.ndarray, G: np.ndarray, xi: np.ndarray,
                   dt: float):
        """One Euler-Maruyama step of the whole batch; returns (rho, G)."""
        dW = xi * np.sqrt(dt)
        a = self.op_means(rho)
        drho = (-1j * dt) * self._commutator(rho, G)
        for k in range(self.n_ch):
            A, A2 = self.ops[k], self.ops_sq[k]
            Ar = A @ rho
            rA = rho @ A
            drho += (self.lam * dt) * (Ar @ A - 0.5 * (A2 @ rho + rho @ A2))
            drho += (self.sqrt_lam * dW[:, k])[:, None, None] * (
                Ar + rA - 2.0 * a[:, k][:, None, None] * rho)
        rho = rho + drho
        rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
        trace = np.einsum('nii->n', rho).real
        rho = rho / trace[:, None, None]
        if self.m and self.n_ch:
            z_dt = a * dt + dW * self.noise_gain
            G = G + dt * (G @ self.M_T) + self.b[None, None, :] * z_dt[:, :, None]
        return rho, G

    def energies(self, rho: np.ndarray, G: np.ndarray) -> np.ndarray:
        """<H(G)> for the whole batch (H0 when there is no feedback)."""
        eH0 = np.einsum('nij,ji->n', rho, self.H0).real
        if self.mode == "trap":
            w = self.osc.omega
            gx = G[:, 0, self.tap]
            gp = G[:, 1, self.tap]
            ex = np.einsum('nij,ji->n', rho, self.osc.x).real
            ep = np.einsum('nij,ji->n', rho, self.osc.p).real
            return eH0 - w * (gx * ex + gp * ep) + 0.5 * w * (gx**2 + gp**2)
        if self.mode == "generic":
            H = np.stack([np.asarray(self.fb(Gi), dtype=complex) for Gi in G])
            return np.einsum('nij,nji->n', H, rho).real
        return eH0


def step(state: QuantumState, signals: np.ndarray, model: SystemModel,
         dt: float, noise) -> tuple:
    """Advance one trajectory by a single Euler-Maruyama step.

    ``noise`` is either a numpy Generator (one standard normal is drawn per
    channel) or an array of per-channel standard-normal draws; internally
    they are scaled to Wiener increments dW_k ~ N(0, dt).  The same dW_k
    drives both the state update and that channel's record
    z_k dt = <A_k> dt + dW_k / sqrt(4 lam).

    Returns the new ``(state, signals)`` pair; the state is re-Hermitized
    and trace-normalized, so its trace is exactly 1.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    engine = _Engine(model)
    signals = np.asarray(signals, dtype=float)
    if signals.shape != (engine.n_ch, engine.m):
        raise ValueError(f"signals must have shape {(engine.n_ch, engine.m)}, "
                         f"got {signals.shape}")
    if isinstance(noise, np.random.Generator):
        xi = noise.standard_normal(engine.n_ch)
    else:
        xi = np.asarray(noise, dtype=float)
        if xi.shape != (engine.n_ch,):
            raise ValueError(f"need one noise draw per channel, got shape {xi.shape}")
    rho, G = engine.step_batch(state.rho[None], signals[None], xi[None], dt)
    if not np.isfinite(rho.view(float)).all() or not np.isfinite(G).all():
        raise TrajectoryError("state became non-finite during the step")
    return QuantumState(rho[0]), G[0]


def _initial_batch(model: SystemModel, config: TrajectoryConfig, n: int):
    if config.initial_state is not None:
        state = config.initial_state
        if state.dim != model.dim:
            raise ValueError("initial state dimension does not match the model")
    else:
        state = QuantumState.ground_state_of(model.H0)
    rho = np.broadcast_to(state.rho, (n, model.dim, model.dim)).copy()
    shape = (model.n_channels, model.n_signal_components)
    if config.initial_signals is not None:
        G0 = np.asarray(config.initial_signals, dtype=float)
        if G0.shape != shape:
            raise ValueError(f"initial signals must have shape {shape}, got {G0.shape}")
    else:
        G0 = np.zeros(shape)
    G = np.broadcast_to(G0, (n,) + shape).copy()
    return rho, G


def run_ensemble(model: SystemModel, config: TrajectoryConfig) -> TrajectoryRecord:
    """Simulate ``config.n_traj`` independent trajectories and average them.

    Trajectory i is driven by ``NoiseStream(config.base_seed, i)``; the
    default initial condition is the ground state of H0 with zero signals.
    The output is deterministic for fixed configuration, independent of
    chunking.  A run whose top-two basis populations ever exceed
    ``EDGE_POPULATION_LIMIT`` is flagged (and a warning is emitted), since
    its energies are no longer trustworthy.

    Raises
    ------
    TrajectoryError
        If any trajectory produces a non-finite state; the message names
        the trajectory index and step.
    """
    engine = _Engine(model)
    n_rec = config.n_steps // config.record_stride + 1
    n_traj = config.n_traj
    ch, m = engine.n_ch, engine.m

    energy = np.empty((n_traj, n_rec))
    opmeans = np.empty((n_traj, n_rec, ch))
    signals = np.empty((n_traj, n_rec, ch, m))
    edge = np.zeros(n_traj)

    track_edge = model.dim >= 3
    for start in range(0, n_traj, config.chunk_size):
        stop = min(start + config.chunk_size, n_traj)
        n = stop - start
        rho, G = _initial_batch(model, config, n)
        xi = np.empty((n, config.n_steps, ch))
        for i in range(n):
            xi[i] = NoiseStream(config.base_seed, start + i).normal(
                (config.n_steps, ch))

        def record(slot, rho=None, G=None, sl=slice(start, stop)):
            energy[sl, slot] = engine.energies(rho, G)
            opmeans[sl, slot] = engine.op_means(rho)
            signals[sl, slot] = G
            if track_edge:
                pops = np.einsum('nii->ni', rho).real[:, -2:].sum(axis=1)
                np.maximum(edge[sl], pops, out=edge[sl])

        record(0, rho, G)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for s in range(config.n_steps):
                rho, G = engine.step_batch(rho, G, xi[:, s, :], config.dt)
                ok = np.isfinite(rho.view(float)).all(axis=(1, 2)) & \
                    np.isfinite(G.reshape(n, -1)).all(axis=1)
                if not ok.all():
                    bad = int(np.nonzero(~ok)[0][0]) + start
                    raise TrajectoryError(
                        f"trajectory {bad} became non-finite at step {s + 1}")
                if (s + 1) % config.record_stride == 0:
                    record((s + 1) // config.record_stride, rho, G)

    times = np.arange(n_rec) * (config.record_stride * config.dt)
    max_edge = float(edge.max()) if track_edge else 0.0
    warn = track_edge and max_edge > EDGE_POPULATION_LIMIT
    if warn:
        warnings.warn(
            f"top-two basis populations reached {max_edge:.2e}; "
            "results are truncation limited", RuntimeWarning, stacklevel=2)

    def _stderr(arr):
        if n_traj < 2:
            return np.zeros(arr.shape[1:])
        return arr.std(axis=0, ddof=1) / np.sqrt(n_traj)

    return TrajectoryRecord(
        times=times,
        energy_mean=energy.mean(axis=0),
        energy_stderr=_stderr(energy),
        op_mean=opmeans.mean(axis=0).T,
        op_stderr=_stderr(opmeans).T,
        signal_mean=np.moveaxis(signals.mean(axis=0), 0, -1),
        signal_var=(np.moveaxis(signals.var(axis=0, ddof=1), 0, -1)
                    if n_traj > 1 else np.zeros((ch, m, n_rec))),
        n_traj=n_traj,
        max_edge_population=max_edge,
        truncation_warning=bool(warn),
    )
