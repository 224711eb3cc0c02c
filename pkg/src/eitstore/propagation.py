"""1D slowly-varying-envelope propagation of the probe through the ensemble.

The probe field is quasi-static over one atomic time step (medium transit
~13 ps versus kHz-MHz dynamics), so each step integrates

    d(Omega_p)/dz = i * eta * sum_classes w * rho31(z)

across the grid (first-order upwind) and then advances every (z, class)
density matrix by RK4 with its local field. The coupling constant eta is
normalized so the cw weak-probe, coupling-off, on-resonance intensity
transmission of the configured ensemble equals exp(-depth).

Intervals with all optical fields off evolve analytically (exact free
propagator), so storage times of seconds cost nothing; RF rephasing pulses
act as unitaries (or short integrations in finite-duration mode) and flip
the tracked spin-wave wavevector sign. Phase mismatch at retrieval is an
analytic |sinc| overlap applied to the recalled field amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import write_csv, write_summary
from .bloch import STEP_GUARD, RFPulse, rf_unitary
from .ensemble import Ensemble, LevelScheme, as_ensemble, weak_probe_susceptibility
from .errors import ConfigurationError, SequenceValidationError
from .noise import NoiseModel, decay_envelope
from .sequence import (
    CouplingSet,
    ProbePulse,
    ProbeSweep,
    RecallAt,
    RFPulseAt,
    Sequence,
    validate,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Spatial discretization of the sample along the propagation axis."""

    length: float = 4e-3
    n_z: int = 64

    def __post_init__(self):
        if self.n_z < 8:
            raise ConfigurationError("n_z must be >= 8")
        if self.length <= 0:
            raise ConfigurationError("grid length must be > 0")

    @property
    def dz(self) -> float:
        return self.length / self.n_z


@dataclass(frozen=True)
class Geometry:
    """Beam geometry; wavelengths are nominal for the target transition."""

    mode: str = "counter"  # "counter" | "co"
    lambda_p: float = 605.977e-9
    lambda_c: float = 605.977e-9
    residual_mismatch_co: float = 100.0  # 1/m, i.e. 1 cm^-1

    def __post_init__(self):
        if self.mode not in ("counter", "co"):
            raise ConfigurationError(f"geometry mode {self.mode!r} not in ('counter', 'co')")
        if self.lambda_p <= 0 or self.lambda_c <= 0:
            raise ConfigurationError("wavelengths must be > 0")


def phase_matching_factor(geometry: Geometry, flip_count: int, grid: Grid) -> float:
    """Amplitude overlap |sinc(dk*L/2)| of the spin wave with the retrieval
    geometry: 1 for an even number of flips; for odd flips the residual
    mismatch is dk = 2*(k_p + k_c) counter-propagating, or twice the
    configured residual for co-propagating beams."""
    if flip_count % 2 == 0:
        return 1.0
    if geometry.mode == "counter":
        k_s = TWO_PI / geometry.lambda_p + TWO_PI / geometry.lambda_c
        dk = 2.0 * k_s
    else:
        dk = 2.0 * geometry.residual_mismatch_co
    x = dk * grid.length / 2.0
    return float(abs(np.sinc(x / np.pi)))


def coupling_constant(ensemble: Ensemble, scheme: LevelScheme, depth: float,
                      length: float) -> float:
    """Field-equation prefactor eta, calibrated so that the configured
    ensemble's on-resonance cw weak-probe transmission is exp(-depth)."""
    k0 = weak_probe_susceptibility(ensemble, scheme, 0.0, 0.0).real
    return depth / (length * k0)


@dataclass
class MediumState:
    """Density matrices of every (z, class) plus spin-wave bookkeeping.

    pops (n_z, n_cls, 3) float64 and cohs (n_z, n_cls, 3) complex128 hold
    [rho11, rho22, rho33] and [rho12, rho13, rho23]; the lower triangle is
    implied by Hermiticity.
    """

    pops: np.ndarray
    cohs: np.ndarray
    flip_count: int = 0

    @property
    def spinwave_sign(self) -> int:
        return -1 if self.flip_count % 2 else 1

    @classmethod
    def ground(cls, grid: Grid, ensemble: Ensemble) -> "MediumState":
        pops = np.zeros((grid.n_z, ensemble.n_classes, 3))
        pops[:, :, 0] = 1.0
        cohs = np.zeros((grid.n_z, ensemble.n_classes, 3), dtype=np.complex128)
        return cls(pops, cohs)

    def density_matrices(self) -> np.ndarray:
        """Full Hermitian (n_z, n_cls, 3, 3) view of the packed state."""
        rho = np.zeros(self.pops.shape[:2] + (3, 3), dtype=np.complex128)
        for i in range(3):
            rho[..., i, i] = self.pops[..., i]
        rho[..., 0, 1] = self.cohs[..., 0]
        rho[..., 0, 2] = self.cohs[..., 1]
        rho[..., 1, 2] = self.cohs[..., 2]
        rho[..., 1, 0] = np.conj(self.cohs[..., 0])
        rho[..., 2, 0] = np.conj(self.cohs[..., 1])
        rho[..., 2, 1] = np.conj(self.cohs[..., 2])
        return rho

    def set_density_matrices(self, rho: np.ndarray) -> None:
        for i in range(3):
            self.pops[..., i] = rho[..., i, i].real
        self.cohs[..., 0] = rho[..., 0, 1]
        self.cohs[..., 1] = rho[..., 0, 2]
        self.cohs[..., 2] = rho[..., 1, 2]

    def spin_wave(self, ensemble: Ensemble) -> np.ndarray:
        """S(z) = sum_c w_c rho12(z, c)."""
        return self.cohs[:, :, 0] @ ensemble.weight

    def trace_error(self) -> float:
        return float(np.max(np.abs(self.pops.sum(axis=2) - 1.0)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.density_matrices()).min())


def evolve_free(medium: MediumState, ensemble: Ensemble, scheme: LevelScheme,
                duration: float) -> None:
    """Exact field-free propagator: coherences rotate at their detunings and
    decay; excited population relaxes with branching."""
    if duration <= 0:
        return
    d_opt = ensemble.delta_opt[None, :]
    d_spin = ensemble.delta_spin[None, :]
    decay3 = np.exp(-scheme.gamma3 * duration)
    n3 = medium.pops[:, :, 2].copy()
    medium.pops[:, :, 0] += scheme.b1 * (1.0 - decay3) * n3
    medium.pops[:, :, 1] += scheme.b2 * (1.0 - decay3) * n3
    medium.pops[:, :, 2] = n3 * decay3
    medium.cohs[:, :, 0] *= np.exp(-(scheme.gamma_spin + 1j * d_spin) * duration)
    medium.cohs[:, :, 1] *= np.exp(-(scheme.gamma_opt + 1j * d_opt) * duration)
    medium.cohs[:, :, 2] *= np.exp(-(scheme.gamma_opt + 1j * (d_opt - d_spin)) * duration)


def apply_rf_ensemble(medium: MediumState, ensemble: Ensemble, scheme: LevelScheme,
                      pulse: RFPulse) -> None:
    """Apply one rephasing pulse to every (z, class) and flip the spin wave."""
    if pulse.instantaneous or pulse.duration == 0.0:
        u = rf_unitary(pulse)
        rho = medium.density_matrices()
        rho = np.einsum("ab,zcbd,ed->zcae", u, rho, u.conj())
        medium.set_density_matrices(rho)
    else:
        _apply_rf_finite(medium, ensemble, scheme, pulse)
    medium.flip_count += 1


def _apply_rf_finite(medium: MediumState, ensemble: Ensemble, scheme: LevelScheme,
                     pulse: RFPulse) -> None:
    omega_rf = pulse.area / pulse.duration
    n_cls = ensemble.n_classes
    h = np.zeros((n_cls, 3, 3), dtype=np.complex128)
    h[:, 1, 1] = -ensemble.delta_spin
    h[:, 2, 2] = -ensemble.delta_opt
    h[:, 1, 0] = -0.5 * omega_rf * np.exp(1j * pulse.phase)
    h[:, 0, 1] = np.conj(h[:, 1, 0])
    fastest = max(
        omega_rf,
        float(np.max(np.abs(ensemble.delta_spin), initial=0.0)),
        float(np.max(np.abs(ensemble.delta_opt), initial=0.0)),
        scheme.gamma3,
    )
    n_steps = max(1, int(np.ceil(pulse.duration * fastest / STEP_GUARD)))
    dt = pulse.duration / n_steps
    rho = medium.density_matrices()
    gam = np.array(
        [
            [0.0, scheme.gamma_spin, scheme.gamma_opt],
            [scheme.gamma_spin, 0.0, scheme.gamma_opt],
            [scheme.gamma_opt, scheme.gamma_opt, 0.0],
        ]
    )

    def rhs(r):
        comm = -1j * (h[None] @ r - r @ h[None])
        comm -= gam[None, None] * r
        p3 = r[..., 2, 2]
        comm[..., 0, 0] += scheme.b1 * scheme.gamma3 * p3
        comm[..., 1, 1] += scheme.b2 * scheme.gamma3 * p3
        comm[..., 2, 2] -= scheme.gamma3 * p3
        return comm

    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
    medium.set_density_matrices(rho)


def propagate_step(boundary: complex, medium: MediumState, ensemble: Ensemble,
                   scheme: LevelScheme, depth: float, grid: Grid) -> np.ndarray:
    """One spatial integration of the field equation for the current
    coherences: returns the field at the n_z cell entries plus the exit value
    (length n_z + 1). All rho31 = 0 leaves the field uniform."""
    eta = coupling_constant(ensemble, scheme, depth, grid.length)
    src = np.conj(medium.cohs[:, :, 1]) @ ensemble.weight
    incr = 1j * eta * grid.dz * src
    out = np.empty(grid.n_z + 1, dtype=np.complex128)
    out[0] = boundary
    out[1:] = boundary + np.cumsum(incr)
    return out


@dataclass
class SimulationRecord:
    """Time-resolved envelopes plus snapshots and run bookkeeping."""

    times: np.ndarray
    input_env: np.ndarray
    output_env: np.ndarray
    snapshots: list = dc_field(default_factory=list)  # (t, label, S(z) array)
    events: list = dc_field(default_factory=list)
    diagnostics: dict = dc_field(default_factory=dict)
    summary: dict = dc_field(default_factory=dict)
    input_window: tuple[float, float] | None = None
    output_window: tuple[float, float] | None = None

    def to_csv(self, path: str | Path) -> None:
        write_csv(
            path,
            ["t_s", "re_input_rabi", "im_input_rabi", "re_output_rabi", "im_output_rabi"],
            [self.times, self.input_env.real, self.input_env.imag,
             self.output_env.real, self.output_env.imag],
        )

    def write_summary(self, path: str | Path) -> None:
        write_summary(path, {
            "summary": self.summary,
            "diagnostics": self.diagnostics,
            "events": self.events,
        })


@dataclass
class RunSetup:
    """Everything a scenario needs besides its sequence."""

    grid: Grid
    geometry: Geometry
    ensemble: Ensemble
    scheme: LevelScheme
    depth: float
    dt_safety: float = 1.0
    readout_duration: float = 150e-6
    n_traj: int = 10_000
    check_positivity: bool = True

    def run(self, sequence: Sequence, noise: NoiseModel | None = None,
            **kwargs) -> SimulationRecord:
        return run_sequence(sequence, self, noise, **kwargs)

    def refined(self, factor: int = 2) -> "RunSetup":
        """Doubled spatial resolution and halved time step, for convergence checks."""
        grid = Grid(self.grid.length, self.grid.n_z * factor)
        return RunSetup(grid, self.geometry, self.ensemble, self.scheme, self.depth,
                        self.dt_safety / factor, self.readout_duration,
                        self.n_traj, self.check_positivity)


def _probe_envelope(events, t: np.ndarray) -> np.ndarray:
    env = np.zeros(t.size, dtype=np.complex128)
    for e in events:
        if isinstance(e, (ProbePulse, ProbeSweep)):
            env = env + e.envelope(t)
    return env


def _max_probe_rate(events, a: float, b: float) -> float:
    """Stability-guard rate contribution of the probe events inside [a, b]."""
    rate = 0.0
    for e in events:
        if isinstance(e, ProbePulse) and e.t0 < b and e.t_end > a:
            rate = max(rate, e.peak_rabi)
        elif isinstance(e, ProbeSweep) and e.t0 < b and e.t_end > a:
            chirp = max(abs(e.instantaneous_detuning(np.array([max(a, e.t0)]))[0]),
                        abs(e.instantaneous_detuning(np.array([min(b, e.t_end)]))[0]))
            rate = max(rate, TWO_PI * e.rabi_hz, chirp)
    return rate


def run_sequence(
    sequence: Sequence,
    setup: RunSetup,
    noise: NoiseModel | None = None,
    override_findings: bool = False,
) -> SimulationRecord:
    """Execute a full timeline and record input/output envelopes.

    Validation errors raise SequenceValidationError unless
    `override_findings` (deliberate parity experiments). Decoherence enters
    as a multiplicative envelope on rho12 at recall, evaluated by seeded
    Monte Carlo over the sequence's flip times.
    """
    findings = validate(sequence, setup.geometry)
    errors = [f for f in findings if f.level == "error"]
    if errors and not override_findings:
        raise SequenceValidationError(
            "; ".join(f"{f.code}: {f.message}" for f in errors)
        )

    grid, geometry, ens, scheme = setup.grid, setup.geometry, setup.ensemble, setup.scheme
    eta = coupling_constant(ens, scheme, setup.depth, grid.length)
    medium = MediumState.ground(grid, ens)

    recall_t = sequence.recall_time
    t_end = sequence.total_duration
    if recall_t is not None:
        t_end = max(t_end, recall_t + setup.readout_duration)

    coupling_sets = sorted(
        (e for e in sequence.events if isinstance(e, CouplingSet)), key=lambda e: e.t
    )
    rf_at = {e.t: e.pulse for e in sequence.events if isinstance(e, RFPulseAt)}
    probe_events = [e for e in sequence.events if isinstance(e, (ProbePulse, ProbeSweep))]

    bounds = {0.0, t_end}
    for e in sequence.events:
        if isinstance(e, (ProbePulse, ProbeSweep)):
            bounds.update((e.t0, min(e.t_end, t_end)))
        else:
            bounds.add(e.t)
    bounds = sorted(b for b in bounds if 0.0 <= b <= t_end)

    def coupling_at(t: float) -> float:
        level = 0.0
        for cs in coupling_sets:
            if cs.t <= t:
                level = cs.rabi
        return level

    def probe_active(a: float, b: float) -> bool:
        return any(e.t0 < b and e.t_end > a for e in probe_events)

    max_detuning = max(
        float(np.max(np.abs(ens.delta_opt), initial=0.0)),
        float(np.max(np.abs(ens.delta_spin), initial=0.0)),
    )

    times_parts, in_parts, out_parts = [], [], []
    event_log = [{"level": f.level, "code": f.code, "message": f.message} for f in findings]
    snapshots = []
    trace_err = 0.0
    min_eig = np.inf
    n_steps_total = 0
    envelope_factor = 1.0
    recall_applied = False

    def checkpoint(t: float, label: str) -> None:
        nonlocal trace_err, min_eig
        trace_err = max(trace_err, medium.trace_error())
        if setup.check_positivity:
            min_eig = min(min_eig, medium.min_eigenvalue())
        snapshots.append((t, label, medium.spin_wave(ens)))

    checkpoint(0.0, "start")

    for a, b in zip(bounds[:-1], bounds[1:]):
        if a in rf_at:
            apply_rf_ensemble(medium, ens, scheme, rf_at[a])
            event_log.append({"t": a, "event": "rf_pulse", "flip_count": medium.flip_count})
            checkpoint(a, f"rf{medium.flip_count}")
        if recall_t is not None and a == recall_t and not recall_applied:
            envelope_factor = decay_envelope(sequence, noise, setup.n_traj)
            medium.cohs[:, :, 0] *= envelope_factor
            recall_applied = True
            event_log.append({"t": a, "event": "recall", "envelope": envelope_factor})
            checkpoint(a, "recall")
        if b <= a:
            continue

        omega_c = coupling_at(a)
        if omega_c == 0.0 and not probe_active(a, b):
            evolve_free(medium, ens, scheme, b - a)
            continue

        rate = max(abs(omega_c), max_detuning, scheme.gamma3,
                   _max_probe_rate(probe_events, a, b))
        dt_max = setup.dt_safety * STEP_GUARD / rate if rate > 0 else (b - a)
        n = max(1, int(np.ceil((b - a) / dt_max)))
        dt = (b - a) / n
        ts = a + (np.arange(n) + 0.5) * dt
        probe_series = _probe_envelope(probe_events, ts)
        out_series = kernels.propagate_segment(
            medium.pops, medium.cohs, ens.weight, ens.delta_opt, ens.delta_spin,
            probe_series, omega_c, eta, grid.dz, dt,
            scheme.gamma3, scheme.b1, scheme.gamma_opt, scheme.gamma_spin,
        )
        n_steps_total += n
        times_parts.append(ts)
        in_parts.append(probe_series)
        out_parts.append(out_series)
        checkpoint(b, "segment")

    times = np.concatenate(times_parts) if times_parts else np.empty(0)
    input_env = np.concatenate(in_parts) if in_parts else np.empty(0, dtype=complex)
    output_env = np.concatenate(out_parts) if out_parts else np.empty(0, dtype=complex)

    pm = 1.0
    if recall_t is not None:
        pm = phase_matching_factor(geometry, medium.flip_count, grid)
        output_env = output_env.copy()
        output_env[times >= recall_t] *= pm

    record = SimulationRecord(
        times=times, input_env=input_env, output_env=output_env,
        snapshots=snapshots, events=event_log,
        diagnostics={
            "trace_drift": trace_err,
            "hermiticity_defect": 0.0,  # packed upper-triangle storage
            "min_eigenvalue": None if min_eig is np.inf else min_eig,
            "n_steps": n_steps_total,
            "backend": kernels.active_backend(),
        },
    )

    summary: dict = {
        "flip_count": medium.flip_count,
        "spinwave_sign": medium.spinwave_sign,
        "phase_matching_factor": pm,
        "decoherence_envelope": envelope_factor,
        "storage_time": sequence.storage_time,
        "label": sequence.label,
    }
    probe_windows = [(e.t0, min(e.t_end, t_end)) for e in probe_events]
    if probe_windows:
        record.input_window = probe_windows[0]
        e_in = float(np.trapezoid(
            np.abs(input_env[(times >= probe_windows[0][0]) & (times <= probe_windows[0][1])]) ** 2,
            times[(times >= probe_windows[0][0]) & (times <= probe_windows[0][1])],
        ))
        summary["input_energy"] = e_in
    if recall_t is not None:
        record.output_window = (recall_t, t_end)
        sel = (times >= recall_t) & (times <= t_end)
        e_out = float(np.trapezoid(np.abs(output_env[sel]) ** 2, times[sel]))
        summary["output_energy"] = e_out
        if summary.get("input_energy"):
            summary["efficiency"] = e_out / summary["input_energy"]
    record.summary = summary
    return record
