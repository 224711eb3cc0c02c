"""Single-atom density-matrix dynamics for the driven lambda system.

The rotating-frame Hamiltonian (class detunings Delta, delta; both optical
fields under the RWA) is

    H = [[0,      0,           -conj(Op)/2],
         [0,      -delta,      -conj(Oc)/2],
         [-Op/2,  -Oc/2,       -Delta     ]]

with the Rabi convention that the off-diagonal element is -Omega/2, so a
resonant drive of constant Omega transfers population fully at t = pi/Omega.
The dissipator applies Gamma3 with branching (b1, b2) to the populations,
gamma_opt to rho13/rho23 and gamma_spin to rho12.

These 3x3 routines are the readable reference implementation; the ensemble
propagation uses the structurally identical unrolled kernels in
`eitstore.kernels` (cross-checked by tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import DetuningClass, LevelScheme
from .errors import ConfigurationError, StepSizeError

# stability guard: max phase advance per step, in radians
STEP_GUARD = 0.1


@dataclass(frozen=True)
class DriveFields:
    """Probe and coupling Rabi frequencies at one (z, t), rad/s, complex."""

    omega_p: complex = 0.0
    omega_c: complex = 0.0


@dataclass(frozen=True)
class RFPulse:
    """A rephasing pulse on the |1>-|2> spin transition."""

    area: float = np.pi
    phase: float = 0.0
    duration: float = 22e-6
    instantaneous: bool = True

    def __post_init__(self):
        if not 0.0 < self.area <= 2.0 * np.pi:
            raise ConfigurationError(f"RF area {self.area} outside (0, 2*pi]")
        if self.duration < 0:
            raise ConfigurationError("RF duration must be >= 0")


def ground_state() -> np.ndarray:
    """All population in |1>."""
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def density_matrix_defects(rho: np.ndarray) -> tuple[float, float, float]:
    """(hermiticity defect, trace error, most negative eigenvalue)."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace = float(abs(np.trace(rho).real - 1.0))
    eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return herm, trace, float(eigs.min())


def hamiltonian(fields: DriveFields, cls: DetuningClass) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = -cls.delta_spin
    h[2, 2] = -cls.delta_opt
    h[2, 0] = -0.5 * fields.omega_p
    h[2, 1] = -0.5 * fields.omega_c
    h[0, 2] = np.conj(h[2, 0])
    h[1, 2] = np.conj(h[2, 1])
    return h


def _dissipator(rho: np.ndarray, scheme: LevelScheme) -> np.ndarray:
    d = np.zeros((3, 3), dtype=complex)
    p3 = rho[2, 2]
    d[0, 0] = scheme.b1 * scheme.gamma3 * p3
    d[1, 1] = scheme.b2 * scheme.gamma3 * p3
    d[2, 2] = -scheme.gamma3 * p3
    d[0, 1] = -scheme.gamma_spin * rho[0, 1]
    d[0, 2] = -scheme.gamma_opt * rho[0, 2]
    d[1, 2] = -scheme.gamma_opt * rho[1, 2]
    d[1, 0] = np.conj(d[0, 1])
    d[2, 0] = np.conj(d[0, 2])
    d[2, 1] = np.conj(d[1, 2])
    return d


def bloch_rhs(
    rho: np.ndarray, fields: DriveFields, cls: DetuningClass, scheme: LevelScheme
) -> np.ndarray:
    """d(rho)/dt = -i[H, rho] + dissipator; traceless and Hermitian."""
    h = hamiltonian(fields, cls)
    return -1j * (h @ rho - rho @ h) + _dissipator(rho, scheme)


def step_guard_dt(fields: DriveFields, cls: DetuningClass, scheme: LevelScheme) -> float:
    """Largest dt the stability guard allows for these rates."""
    fastest = max(
        abs(fields.omega_p),
        abs(fields.omega_c),
        abs(cls.delta_opt),
        abs(cls.delta_spin),
        scheme.gamma3,
    )
    return STEP_GUARD / fastest if fastest > 0 else np.inf


def step_rk4(
    rho: np.ndarray,
    fields: DriveFields,
    cls: DetuningClass,
    scheme: LevelScheme,
    dt: float,
) -> np.ndarray:
    """One classical RK4 step with fields frozen over dt.

    The result is re-symmetrized; the trace is deliberately not renormalized
    so that trace drift stays visible as a diagnostic.
    """
    if dt > step_guard_dt(fields, cls, scheme) * (1.0 + 1e-12):
        raise StepSizeError(
            f"dt={dt:.3e} s violates the stability guard "
            f"({step_guard_dt(fields, cls, scheme):.3e} s) for these rates"
        )
    k1 = bloch_rhs(rho, fields, cls, scheme)
    k2 = bloch_rhs(rho + 0.5 * dt * k1, fields, cls, scheme)
    k3 = bloch_rhs(rho + 0.5 * dt * k2, fields, cls, scheme)
    k4 = bloch_rhs(rho + dt * k3, fields, cls, scheme)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return 0.5 * (out + out.conj().T)


def rf_unitary(pulse: RFPulse) -> np.ndarray:
    """Rotation by (area, phase) in the |1>,|2> subspace, identity on |3>."""
    c = np.cos(pulse.area / 2.0)
    s = np.sin(pulse.area / 2.0)
    u = np.eye(3, dtype=complex)
    u[0, 0] = c
    u[1, 1] = c
    u[0, 1] = -1j * np.exp(-1j * pulse.phase) * s
    u[1, 0] = -1j * np.exp(1j * pulse.phase) * s
    return u


def apply_rf_pulse(
    rho: np.ndarray,
    pulse: RFPulse,
    cls: DetuningClass | None = None,
    scheme: LevelScheme | None = None,
) -> np.ndarray:
    """Apply a rephasing pulse to one atom.

    Instantaneous mode is the unitary rotation; finite-duration mode
    integrates a constant RF Rabi drive (all optical fields off) including
    decay and the class spin detuning, so pulse errors from detuning during
    the 22 us drive are physical.
    """
    if pulse.instantaneous or pulse.duration == 0.0:
        u = rf_unitary(pulse)
        return u @ rho @ u.conj().T
    if cls is None or scheme is None:
        raise ConfigurationError("finite-duration RF needs the detuning class and scheme")
    omega_rf = pulse.area / pulse.duration
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = -cls.delta_spin
    h[2, 2] = -cls.delta_opt
    h[1, 0] = -0.5 * omega_rf * np.exp(1j * pulse.phase)
    h[0, 1] = np.conj(h[1, 0])
    fastest = max(omega_rf, abs(cls.delta_spin), abs(cls.delta_opt), scheme.gamma3)
    n = max(1, int(np.ceil(pulse.duration * fastest / STEP_GUARD)))
    dt = pulse.duration / n
    out = rho
    for _ in range(n):
        k1 = -1j * (h @ out - out @ h) + _dissipator(out, scheme)
        y2 = out + 0.5 * dt * k1
        k2 = -1j * (h @ y2 - y2 @ h) + _dissipator(y2, scheme)
        y3 = out + 0.5 * dt * k2
        k3 = -1j * (h @ y3 - y3 @ h) + _dissipator(y3, scheme)
        y4 = out + dt * k3
        k4 = -1j * (h @ y4 - y4 @ h) + _dissipator(y4, scheme)
        out = out + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out = 0.5 * (out + out.conj().T)
    return out
