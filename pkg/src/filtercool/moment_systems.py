"""Exact ensemble moment dynamics for the oscillator cooling protocols.

For quadratic trap-shifting feedback the ensemble expectation values close
into a finite affine ODE system d x/dt = A x + c.  The four protocols are:

* single low-pass stage, feedback on D1 (scalar energy equation),
* two-stage cascade, feedback on D2 (4 coupled moments),
* three-stage cascade with equal second and third bandwidths, feedback on
  D3 (9 coupled moments),
* band-pass quadratures, feedback on E1 (9 coupled moments).

Each builder returns the transcribed system with labeled components; the
first component is always the ensemble energy in units of hbar*omega.
Energies at or above 1/2 are physical (1/2 is the ground state); a formal
steady state below that signals a non-cooling parameter region.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import eigenvalues, integrate_affine, solve_linear

#: Relative slack used for the stability and physicality classifications.
STABILITY_TOL = 1e-9
PHYSICAL_MIN = 0.5


class ProtocolKind(enum.Enum):
    LOWPASS1 = "lowpass1"
    LOWPASS2 = "lowpass2"
    LOWPASS3 = "lowpass3"
    BANDPASS = "bandpass"

    @property
    def n_layers(self) -> int:
        """Number of filter stages the protocol hardware needs."""
        return {"lowpass1": 1, "lowpass2": 2, "lowpass3": 3, "bandpass": 2}[self.value]


_NEEDS_OMEGA = (ProtocolKind.LOWPASS2, ProtocolKind.LOWPASS3, ProtocolKind.BANDPASS)


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol parameters, all rates in units of inverse time.

    lam is the measurement strength, omega the oscillator frequency, gamma
    the first-stage bandwidth and Omega the second bandwidth (cascades) or
    the band-pass center frequency.  The three-stage cascade uses Omega for
    both of its later stages.
    """

    lam: float
    omega: float
    gamma: float
    Omega: Optional[float] = None
    kind: ProtocolKind = ProtocolKind.LOWPASS1

    def __post_init__(self):
        for name in ("lam", "omega", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.kind in _NEEDS_OMEGA:
            if self.Omega is None or not (np.isfinite(self.Omega) and self.Omega > 0):
                raise ValueError(f"{self.kind.value} requires Omega > 0, got {self.Omega}")

    @property
    def effective_gamma(self) -> float:
        """Series combination of the two cascade bandwidths: 1/g = 1/gamma + 1/Omega."""
        if self.Omega is None:
            return self.gamma
        return 1.0 / (1.0 / self.gamma + 1.0 / self.Omega)


@dataclass
class MomentSystem:
    """Affine ODE system d x/dt = A x + c with labeled expectation values."""

    A: np.ndarray
    c: np.ndarray
    labels: tuple
    energy_index: int = 0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if len(self.labels) != self.dim:
            raise ValueError("need one label per component")

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass
class SteadyState:
    """Fixed point of a moment system together with its classification."""

    values: np.ndarray
    energy_over_hw: float
    eigenvalues: np.ndarray
    stable: bool
    physical: bool


def _require_kind(p: ProtocolParams, kind: ProtocolKind):
    if p.kind is not kind:
        raise ValueError(f"expected {kind.value} parameters, got {p.kind.value}")


def build_single_layer(p: ProtocolParams) -> MomentSystem:
    """Scalar energy equation for feedback on a single low-pass stage.

    The ensemble energy U relaxes at rate 2*gamma towards
    U_inf = (lam/gamma + gamma/(4 lam)) / 2, so A = (-2 gamma) and
    c = 2 gamma U_inf = lam + gamma^2/(4 lam).
    """
    _require_kind(p, ProtocolKind.LOWPASS1)
    g, lam = p.gamma, p.lam
    A = np.array([[-2.0 * g]])
    c = np.array([lam + g * g / (4.0 * lam)])
    return MomentSystem(A, c, ("<H>/hw",))


def build_two_layer(p: ProtocolParams) -> MomentSystem:
    """Four-moment system for feedback on the second cascade component."""
    _require_kind(p, ProtocolKind.LOWPASS2)
    lam, w, g, Om = p.lam, p.omega, p.gamma, p.Omega
    A = np.array([
        [0.0,     -Om,      0.0,             0.0],
        [2.0 * g, -(Om + g), -Om,            -w],
        [0.0,     2.0 * g,  -2.0 * (Om + g), 0.0],
        [0.0,     w,        0.0,             -(Om + g)],
    ])
    c = np.array([lam, 0.0, g * g / (2.0 * lam), 0.0])
    labels = (
        "<H>/hw",
        "<(x-Dx2)(Dx1-Dx2)>+<(p-Dp2)(Dp1-Dp2)>",
        "<(Dx1-Dx2)^2>+<(Dp1-Dp2)^2>",
        "<(x-Dx2)(Dp1-Dp2)>-<(p-Dp2)(Dx1-Dx2)>",
    )
    return MomentSystem(A, c, labels)


def build_three_layer(p: ProtocolParams) -> MomentSystem:
    """Nine-moment system for feedback on the third cascade component.

    The second and third stage share the bandwidth Omega; an unequal third
    bandwidth is not supported.
    """
    _require_kind(p, ProtocolKind.LOWPASS3)
    lam, w, g, Om = p.lam, p.omega, p.gamma, p.Omega
    A = np.array([
        [0,       -Om, 0,   0,        0,         0,         0,              0,              0],
        [0,       -Om, w,   -Om,      Om,        0,         0,              0,              0],
        [0,       -w,  -Om, 0,        0,         Om,        0,              0,              0],
        [0,       0,   0,   -2 * Om,  0,         0,         2 * Om,         0,              0],
        [2 * g,   -g,  0,   0,        -(g + Om), w,         -Om,            0,              0],
        [0,       0,   -g,  0,        -w,        -(g + Om), 0,              -Om,            0],
        [0,       g,   0,   -g,       0,         0,         -(2 * Om + g),  0,              Om],
        [0,       0,   -g,  0,        0,         0,         0,              -(2 * Om + g),  0],
        [0,       0,   0,   0,        2 * g,     0,         -2 * g,         0,              -2 * (Om + g)],
    ], dtype=float)
    c = np.zeros(9)
    c[0] = lam
    c[8] = g * g / (2.0 * lam)
    labels = (
        "<H>/hw",
        "<(x-Dx3)(Dx2-Dx3)>+<(p-Dp3)(Dp2-Dp3)>",
        "<(p-Dp3)(Dx2-Dx3)>-<(x-Dx3)(Dp2-Dp3)>",
        "<(Dx2-Dx3)^2>+<(Dp2-Dp3)^2>",
        "<(x-Dx3)(Dx1-Dx2)>+<(p-Dp3)(Dp1-Dp2)>",
        "<(p-Dp3)(Dx1-Dx2)>-<(x-Dx3)(Dp1-Dp2)>",
        "<(Dx1-Dx2)(Dx2-Dx3)>+<(Dp1-Dp2)(Dp2-Dp3)>",
        "<(Dp2-Dp3)(Dx1-Dx2)>-<(Dx2-Dx3)(Dp1-Dp2)>",
        "<(Dx1-Dx2)^2>+<(Dp1-Dp2)^2>",
    )
    return MomentSystem(A, c, labels)


def build_bandpass_moments(p: ProtocolParams) -> MomentSystem:
    """Nine-moment system for feedback on the first band-pass quadrature."""
    _require_kind(p, ProtocolKind.BANDPASS)
    lam, w, g, Om = p.lam, p.omega, p.gamma, p.Omega
    A = np.array([
        [-2 * g, Om,     0,      0,      0,   0,   0,   0,  0],
        [0,      -2 * g, -w,     Om,     Om,  0,   0,   0,  0],
        [0,      w,      -2 * g, 0,      0,   Om,  0,   0,  0],
        [0,      0,      0,      -2 * g, 0,   0,   2 * Om, 0, 0],
        [2 * g,  -Om,    0,      0,      -g,  -w,  Om,  0,  0],
        [0,      0,      -Om,    0,      w,   -g,  0,   Om, 0],
        [0,      g,      0,      -Om,    0,   0,   -g,  0,  Om],
        [0,      0,      -g,     0,      0,   0,   0,   -g, 0],
        [0,      0,      0,      0,      2 * g, 0, -2 * Om, 0, 0],
    ], dtype=float)
    c = np.zeros(9)
    # Energy pump: dissipator heating (lam) plus the white-noise variance the
    # tapped quadrature injects directly into the trap center (gamma^2/4lam).
    c[0] = lam + g * g / (4.0 * lam)
    c[4] = -g * g / (2.0 * lam)
    c[8] = g * g / (2.0 * lam)
    labels = (
        "<H>/hw",
        "<(x-Ex1)Ex2>+<(p-Ep1)Ep2>",
        "<(x-Ex1)Ep2>-<(p-Ep1)Ex2>",
        "<Ex2^2+Ep2^2>",
        "<(x-Ex1)Ex1>+<(p-Ep1)Ep1>",
        "<(x-Ex1)Ep1>-<(p-Ep1)Ex1>",
        "<Ex1*Ex2+Ep1*Ep2>",
        "<Ex2*Ep1-Ep2*Ex1>",
        "<Ex1^2+Ep1^2>",
    )
    return MomentSystem(A, c, labels)


_BUILDERS = {
    ProtocolKind.LOWPASS1: build_single_layer,
    ProtocolKind.LOWPASS2: build_two_layer,
    ProtocolKind.LOWPASS3: build_three_layer,
    ProtocolKind.BANDPASS: build_bandpass_moments,
}


def build_moment_system(p: ProtocolParams) -> MomentSystem:
    """Dispatch to the builder matching ``p.kind``."""
    return _BUILDERS[p.kind](p)


def steady_state(sys: MomentSystem) -> SteadyState:
    """Solve A x = -c and classify the fixed point.

    ``stable`` requires every eigenvalue of A to satisfy
    Re < -STABILITY_TOL * ||A||_inf; points failing this are reported as
    non-converging even though the linear solve still produces a formal
    value.  ``physical`` requires the energy component to be at least 1/2
    (ground state) up to slack.

    Raises
    ------
    SingularMatrixError
        If A is singular ("no unique steady state").
    """
    values = solve_linear(sys.A, -sys.c)
    eig = eigenvalues(sys.A)
    scale = np.linalg.norm(sys.A, np.inf)
    stable = bool(eig.real.max() < -STABILITY_TOL * scale)
    energy = float(values[sys.energy_index])
    physical = bool(energy >= PHYSICAL_MIN - STABILITY_TOL)
    return SteadyState(values, energy, eig, stable, physical)


def evolve(sys: MomentSystem, x0: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    """RK4 path of the moment system from x0; shape (n_steps + 1, dim)."""
    return integrate_affine(sys.A, sys.c, x0, dt, n_steps)


def characteristic_polynomial(a: np.ndarray) -> np.ndarray:
    """Coefficients of det(sI - a), monic, in descending powers of s."""
    a = np.asarray(a, dtype=float)
    coeffs = np.poly(eigenvalues(a))
    return np.real(coeffs)
