"""Polarization qubit states on the H/V basis.

States are stored as complex amplitudes ``(amp_h, amp_v)``; global phase is
never constrained, and every function here is invariant under it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePostselectionError,
    InvalidObservableError,
    InvalidParameterError,
)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class PolarizationState:
    amp_h: complex
    amp_v: complex

    def __post_init__(self):
        norm = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidParameterError(f"state not normalized: |a|^2 = {norm!r}")
        object.__setattr__(self, "amp_h", complex(self.amp_h))
        object.__setattr__(self, "amp_v", complex(self.amp_v))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    @classmethod
    def from_vector(cls, vec) -> "PolarizationState":
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(vec[0], vec[1])

    @property
    def p_h(self) -> float:
        """Probability weight on H, ``|amp_h|**2``."""
        return abs(self.amp_h) ** 2

    @property
    def p_v(self) -> float:
        return abs(self.amp_v) ** 2


@dataclass(frozen=True)
class PolarizationObservable:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidObservableError(f"observable must be 2x2, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise InvalidObservableError("observable is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def linear_hv(cls) -> "PolarizationObservable":
        """``|H><H| - |V><V|``, the observable read out by the DGD pointer."""
        return cls(PAULI_Z)


def make_state(theta: float, phi: float = 0.0) -> PolarizationState:
    """``cos(theta)|H> + sin(theta) exp(i phi)|V>``."""
    return PolarizationState(np.cos(theta), np.sin(theta) * np.exp(1j * phi))


def expectation_and_uncertainty(
    state: PolarizationState, obs: PolarizationObservable
) -> tuple[float, float]:
    v = state.vector
    m = obs.matrix
    mean = float(np.real(np.vdot(v, m @ v)))
    second = float(np.real(np.vdot(v, m @ (m @ v))))
    return mean, float(np.sqrt(max(0.0, second - mean * mean)))


def weak_value(
    pre_state: PolarizationState,
    post_state: PolarizationState,
    obs: PolarizationObservable,
) -> complex:
    """``<post|O|pre> / <post|pre>``."""
    overlap = np.vdot(post_state.vector, pre_state.vector)
    if abs(overlap) < 1e-12:
        raise DegeneratePostselectionError("pre- and postselected states are orthogonal")
    return complex(np.vdot(post_state.vector, obs.matrix @ pre_state.vector) / overlap)


def fidelity(a: PolarizationState, b: PolarizationState) -> float:
    return float(min(1.0, abs(np.vdot(a.vector, b.vector)) ** 2))


def bloch_vector(state: PolarizationState) -> np.ndarray:
    """Bloch (Stokes) unit vector with +z along H."""
    v = state.vector
    return np.array(
        [np.real(np.vdot(v, P @ v)) for P in (PAULI_X, PAULI_Y, PAULI_Z)]
    )


def rotate_about(state: PolarizationState, axis, angle: float) -> PolarizationState:
    """Rotate the Bloch vector of ``state`` by ``angle`` about the unit ``axis``."""
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    gen = ax[0] * PAULI_X + ax[1] * PAULI_Y + ax[2] * PAULI_Z
    u = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen
    return PolarizationState.from_vector(u @ state.vector)


def perturb_state(
    state: PolarizationState, sigma_angle: float, rng: np.random.Generator
) -> PolarizationState:
    """Tilt the Bloch vector away from its original direction by a random angle.

    The polar tilt is ``|N(0, sigma_angle)|``; the direction of the tilt is
    uniform around the original axis.
    """
    if sigma_angle < 0:
        raise InvalidParameterError(f"sigma_angle must be >= 0, got {sigma_angle}")
    if sigma_angle == 0:
        return state
    delta = abs(rng.normal(0.0, sigma_angle))
    azimuth = rng.uniform(0.0, 2 * np.pi)
    # the antipodal state; mixing it in at angle delta/2 tilts the Bloch vector by delta
    # and the relative phase sets the direction of the tilt
    a, b = state.amp_h, state.amp_v
    c, s = np.cos(delta / 2), np.sin(delta / 2) * np.exp(1j * azimuth)
    return PolarizationState(c * a - s * b.conjugate(), c * b + s * a.conjugate())
