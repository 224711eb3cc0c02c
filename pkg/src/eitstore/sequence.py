"""Experiment timelines: construction, validation, and serialization.

Timelines use absolute times >= 0. Store/recall sequences place the probe
pulse first, so "storage time T" is measured from the coupling switch-off
(the sequence's `t_store`); the published pulse placements (quarter points,
2 ms / 4 ms DDC spacing) are relative to that instant.

Events are file-boundary objects and carry frequencies in Hz (fields
suffixed `_hz`), matching the sequence file format; the rad/s conversion for
the dynamics happens in their accessor methods and nowhere else. Sequence
files are JSON with an `events` array; times in seconds, Rabi values in Hz.
See docs/file-formats.md for the schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bloch import RFPulse
from .errors import ConfigurationError, SequenceValidationError

TWO_PI = 2.0 * np.pi

PROBE_SHAPES = ("square", "gaussian")


@dataclass(frozen=True)
class ProbePulse:
    """Probe envelope starting at t0: square (optional raised-cosine ramps
    covering ramp_fraction of the duration at each edge) or gaussian
    (duration = 4 sigma, truncated)."""

    t0: float
    duration: float
    peak_rabi_hz: float
    shape: str = "square"
    ramp_fraction: float = 0.0

    def __post_init__(self):
        if self.t0 < 0 or self.duration <= 0:
            raise ConfigurationError("probe pulse needs t0 >= 0 and duration > 0")
        if self.shape not in PROBE_SHAPES:
            raise ConfigurationError(f"unknown probe shape {self.shape!r}")
        if not 0.0 <= self.ramp_fraction <= 0.5:
            raise ConfigurationError("ramp_fraction outside [0, 0.5]")

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def peak_rabi(self) -> float:
        """Peak Rabi frequency, rad/s."""
        return TWO_PI * self.peak_rabi_hz

    @property
    def area(self) -> float:
        """Pulse area (integral of the Rabi envelope), rad."""
        if self.shape == "gaussian":
            sigma = self.duration / 4.0
            return float(self.peak_rabi * sigma * np.sqrt(TWO_PI))
        flat = 1.0 - self.ramp_fraction  # each cosine ramp integrates to half
        return self.peak_rabi * self.duration * flat

    def envelope(self, t: np.ndarray) -> np.ndarray:
        """Rabi envelope (rad/s) on absolute times t."""
        x = t - self.t0
        if self.shape == "gaussian":
            sigma = self.duration / 4.0
            env = np.exp(-0.5 * ((x - self.duration / 2.0) / sigma) ** 2)
        else:
            env = np.ones_like(x)
            r = self.ramp_fraction * self.duration
            if r > 0:
                up = x < r
                down = x > self.duration - r
                env[up] = 0.5 * (1.0 - np.cos(np.pi * x[up] / r))
                env[down] = 0.5 * (1.0 - np.cos(np.pi * (self.duration - x[down]) / r))
        env[(x < 0) | (x > self.duration)] = 0.0
        return self.peak_rabi * env


def pulse_for_area(
    t0: float,
    duration: float,
    area: float,
    shape: str = "square",
    ramp_fraction: float = 0.0,
) -> ProbePulse:
    """Probe pulse with a requested area (rad) instead of a peak Rabi."""
    if shape == "gaussian":
        sigma = duration / 4.0
        peak = area / (sigma * np.sqrt(TWO_PI))
    else:
        peak = area / (duration * (1.0 - ramp_fraction))
    return ProbePulse(t0, duration, peak / TWO_PI, shape, ramp_fraction)


@dataclass(frozen=True)
class ProbeSweep:
    """Weak cw probe chirped linearly across `span_hz` centered on resonance."""

    t0: float
    duration: float
    span_hz: float
    rabi_hz: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigurationError("sweep duration must be > 0")
        if self.span_hz <= 0:
            raise ConfigurationError("degenerate sweep: span must be > 0")

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def span(self) -> float:
        """Swept span, rad/s."""
        return TWO_PI * self.span_hz

    @property
    def rate(self) -> float:
        """Chirp rate, (rad/s) per second."""
        return self.span / self.duration

    def instantaneous_detuning(self, t: np.ndarray) -> np.ndarray:
        """Probe detuning (rad/s) at absolute times t."""
        return -self.span / 2.0 + self.rate * (t - self.t0)

    def envelope(self, t: np.ndarray) -> np.ndarray:
        """Complex Rabi envelope (rad/s); the chirp lives in the phase."""
        x = np.asarray(t) - self.t0
        phase = -self.span / 2.0 * x + 0.5 * self.rate * x**2
        env = TWO_PI * self.rabi_hz * np.exp(-1j * phase)
        return np.where((x >= 0) & (x <= self.duration), env, 0.0)


@dataclass(frozen=True)
class CouplingSet:
    """Step change of the coupling Rabi frequency at time t."""

    t: float
    rabi_hz: float

    @property
    def rabi(self) -> float:
        return TWO_PI * self.rabi_hz


@dataclass(frozen=True)
class RFPulseAt:
    t: float
    pulse: RFPulse


@dataclass(frozen=True)
class RecallAt:
    t: float


Event = ProbePulse | ProbeSweep | CouplingSet | RFPulseAt | RecallAt


@dataclass(frozen=True)
class Finding:
    level: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class Sequence:
    events: tuple[Event, ...]
    t_store: float | None = None  # coupling-off instant (storage starts here)
    label: str = ""

    @property
    def rf_pulse_count(self) -> int:
        return sum(isinstance(e, RFPulseAt) for e in self.events)

    @property
    def rf_times(self) -> list[float]:
        return [e.t for e in self.events if isinstance(e, RFPulseAt)]

    @property
    def recall_time(self) -> float | None:
        for e in self.events:
            if isinstance(e, RecallAt):
                return e.t
        return None

    @property
    def storage_time(self) -> float | None:
        if self.recall_time is None or self.t_store is None:
            return None
        return self.recall_time - self.t_store

    @property
    def total_duration(self) -> float:
        t = 0.0
        for e in self.events:
            t = max(t, e.t_end if isinstance(e, (ProbePulse, ProbeSweep)) else e.t)
        return t


def make_eit_sweep(
    span_hz: float = 300e3,
    duration: float = 4e-3,
    coupling_rabi_hz: float = 0.0,
    probe_rabi_hz: float = 100.0,
) -> Sequence:
    """Swept-probe transmission scan with the coupling held constant.

    coupling_rabi_hz = 0 gives the absorption-only reference trace.
    """
    if span_hz <= 0 or duration <= 0:
        raise ConfigurationError("sweep needs span > 0 and duration > 0")
    events: tuple[Event, ...] = (
        CouplingSet(0.0, coupling_rabi_hz),
        ProbeSweep(0.0, duration, span_hz, probe_rabi_hz),
    )
    return Sequence(events, label="eit-sweep")


def make_store_recall_simple(
    storage_time: float,
    probe_duration: float = 20e-6,
    probe_peak_rabi_hz: float = 1e3,
    probe_shape: str = "square",
    ramp_fraction: float = 0.0,
    coupling_rabi_hz: float = 126e3,
    recall_rabi_hz: float | None = None,
    coupling_off_lag: float = 0.0,
    rf: RFPulse = RFPulse(),
) -> Sequence:
    """Store/recall with two rephasing pulses at the storage quarter points."""
    T = storage_time
    guard = 2.0 * (0.0 if rf.instantaneous else rf.duration)
    if T <= 0 or T / 4.0 <= guard:
        raise SequenceValidationError(
            f"storage time {T} too short to place rephasing pulses"
        )
    t_store = probe_duration + coupling_off_lag
    if recall_rabi_hz is None:
        recall_rabi_hz = coupling_rabi_hz
    events: tuple[Event, ...] = (
        CouplingSet(0.0, coupling_rabi_hz),
        ProbePulse(0.0, probe_duration, probe_peak_rabi_hz, probe_shape, ramp_fraction),
        CouplingSet(t_store, 0.0),
        RFPulseAt(t_store + T / 4.0, rf),
        RFPulseAt(t_store + 3.0 * T / 4.0, rf),
        CouplingSet(t_store + T, recall_rabi_hz),
        RecallAt(t_store + T),
    )
    return Sequence(events, t_store=t_store, label="store-simple")


DDC_FIRST_PULSE = 2e-3
DDC_SPACING = 4e-3


def make_store_recall_ddc(
    n_pulses: int,
    probe_duration: float = 20e-6,
    probe_peak_rabi_hz: float = 1e3,
    probe_shape: str = "square",
    ramp_fraction: float = 0.0,
    coupling_rabi_hz: float = 126e3,
    recall_rabi_hz: float | None = None,
    coupling_off_lag: float = 0.0,
    rf: RFPulse = RFPulse(),
    allow_odd: bool = False,
) -> Sequence:
    """Bang-bang decoherence control: first pulse 2 ms after storage, 4 ms
    spacing, last pulse 2 ms before recall; storage time is 4*N ms."""
    if n_pulses < 1:
        raise SequenceValidationError("DDC needs at least one rephasing pulse")
    if n_pulses % 2 == 1 and not allow_odd:
        raise SequenceValidationError(
            "odd rephasing count flips the spin-wave direction; pass "
            "allow_odd=True only for parity experiments"
        )
    t_store = probe_duration + coupling_off_lag
    if recall_rabi_hz is None:
        recall_rabi_hz = coupling_rabi_hz
    T = DDC_SPACING * n_pulses
    events: list[Event] = [
        CouplingSet(0.0, coupling_rabi_hz),
        ProbePulse(0.0, probe_duration, probe_peak_rabi_hz, probe_shape, ramp_fraction),
        CouplingSet(t_store, 0.0),
    ]
    for k in range(n_pulses):
        events.append(RFPulseAt(t_store + DDC_FIRST_PULSE + DDC_SPACING * k, rf))
    events.append(CouplingSet(t_store + T, recall_rabi_hz))
    events.append(RecallAt(t_store + T))
    return Sequence(tuple(events), t_store=t_store, label=f"store-ddc-{n_pulses}")


def validate(sequence: Sequence, geometry=None) -> list[Finding]:
    """Check ordering, overlaps, and rephasing parity against the geometry.

    Problems are returned as findings, never raised. `geometry` is any object
    with a `mode` attribute ("counter" or "co"); None skips parity checks.
    """
    findings: list[Finding] = []
    times = [e.t0 if isinstance(e, (ProbePulse, ProbeSweep)) else e.t for e in sequence.events]
    if any(t < 0 for t in times):
        findings.append(Finding("error", "negative-time", "event times must be >= 0"))
    if times != sorted(times):
        findings.append(Finding("error", "unordered", "events are not time-ordered"))

    rf_events = [e for e in sequence.events if isinstance(e, RFPulseAt)]
    recall = sequence.recall_time
    if recall is not None:
        late = [e.t for e in rf_events if e.t >= recall]
        if late:
            findings.append(
                Finding("error", "rf-after-recall",
                        f"rephasing pulses at {late} not before recall at {recall}")
            )

    # finite-duration RF excludes optical drive
    optical = [
        (e.t0, e.t_end) for e in sequence.events if isinstance(e, (ProbePulse, ProbeSweep))
    ]
    for e in rf_events:
        if e.pulse.instantaneous:
            continue
        a, b = e.t, e.t + e.pulse.duration
        for (oa, ob) in optical:
            if a < ob and oa < b:
                findings.append(
                    Finding("error", "rf-optical-overlap",
                            f"finite RF pulse at {e.t} overlaps optical drive")
                )
    if geometry is not None and rf_events:
        n = len(rf_events)
        if n % 2 == 1:
            mode = str(getattr(geometry, "mode", geometry)).lower()
            if mode.startswith("counter"):
                findings.append(
                    Finding("error", "parity",
                            "odd rephasing count with counter-propagating geometry "
                            "leaves the spin wave phase-mismatched")
                )
            else:
                findings.append(
                    Finding("warning", "parity",
                            "odd rephasing count; retrieval pays the residual "
                            "co-propagating mismatch penalty")
                )
    return findings


# --- serialization ---------------------------------------------------------


def _event_to_json(e: Event) -> dict:
    if isinstance(e, ProbePulse):
        return {
            "type": "probe_pulse", "t0_s": e.t0, "duration_s": e.duration,
            "peak_rabi_hz": e.peak_rabi_hz, "shape": e.shape,
            "ramp_fraction": e.ramp_fraction,
        }
    if isinstance(e, ProbeSweep):
        return {
            "type": "probe_sweep", "t0_s": e.t0, "duration_s": e.duration,
            "span_hz": e.span_hz, "rabi_hz": e.rabi_hz,
        }
    if isinstance(e, CouplingSet):
        return {"type": "coupling_set", "t_s": e.t, "rabi_hz": e.rabi_hz}
    if isinstance(e, RFPulseAt):
        return {
            "type": "rf_pulse", "t_s": e.t, "area_rad": e.pulse.area,
            "phase_rad": e.pulse.phase, "duration_s": e.pulse.duration,
            "instantaneous": e.pulse.instantaneous,
        }
    if isinstance(e, RecallAt):
        return {"type": "recall", "t_s": e.t}
    raise TypeError(f"unknown event {e!r}")


def _event_from_json(d: dict) -> Event:
    kind = d["type"]
    if kind == "probe_pulse":
        return ProbePulse(d["t0_s"], d["duration_s"], d["peak_rabi_hz"],
                          d["shape"], d.get("ramp_fraction", 0.0))
    if kind == "probe_sweep":
        return ProbeSweep(d["t0_s"], d["duration_s"], d["span_hz"], d["rabi_hz"])
    if kind == "coupling_set":
        return CouplingSet(d["t_s"], d["rabi_hz"])
    if kind == "rf_pulse":
        return RFPulseAt(d["t_s"], RFPulse(d["area_rad"], d["phase_rad"],
                                           d["duration_s"], d["instantaneous"]))
    if kind == "recall":
        return RecallAt(d["t_s"])
    raise ConfigurationError(f"unknown event type {kind!r} in sequence file")


def to_json(sequence: Sequence) -> str:
    doc = {
        "label": sequence.label,
        "t_store_s": sequence.t_store,
        "events": [_event_to_json(e) for e in sequence.events],
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> Sequence:
    doc = json.loads(text)
    return Sequence(
        tuple(_event_from_json(d) for d in doc["events"]),
        t_store=doc.get("t_store_s"),
        label=doc.get("label", ""),
    )


def save(sequence: Sequence, path: str | Path) -> None:
    Path(path).write_text(to_json(sequence))


def load(path: str | Path) -> Sequence:
    return from_json(Path(path).read_text())
