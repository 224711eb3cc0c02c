"""Estimators, detection model, and file output for simulation results.

Energies are dimensionless (Rabi^2 * seconds); absolute optical power needs
the rabi_per_sqrt_watt config scale and is never required by the estimators.
CSV output uses full-precision repr of each float so write -> read -> write
is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnalysisError, ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Spectrum:
    """Transmission vs probe frequency (Hz, strictly increasing axis)."""

    frequency_hz: np.ndarray
    transmission: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.frequency_hz) <= 0):
            raise ConfigurationError("spectrum frequency axis must be strictly increasing")
        if self.frequency_hz.size != self.transmission.size:
            raise ConfigurationError("spectrum axis/value size mismatch")


@dataclass(frozen=True)
class DecayCurve:
    """Recalled pulse energy vs storage time."""

    times: np.ndarray
    energies: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times)
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("decay curve times must be strictly increasing")
        if np.any(np.asarray(self.energies) < 0):
            raise ConfigurationError("decay curve energies must be >= 0")


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    tau: float
    residual_norm: float
    converged: bool
    iterations: int = 0


def pulse_energy(record, window: tuple[float, float], channel: str = "output",
                 normalize: bool = False) -> float:
    """Integral of |Omega|^2 dt over `window` on one channel of a record.

    `record` needs `times`, `input_env`, `output_env` attributes. With
    normalize=True the result is divided by the same integral of the input
    channel over the record's input window (stored efficiency convention).
    """
    t = np.asarray(record.times)
    env = np.asarray(record.output_env if channel == "output" else record.input_env)
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if mask.sum() < 2:
        raise AnalysisError(f"window {window} selects fewer than 2 samples")
    energy = float(np.trapezoid(np.abs(env[mask]) ** 2, t[mask]))
    if normalize:
        ref_window = getattr(record, "input_window", None)
        if ref_window is None:
            raise AnalysisError("record carries no input window to normalize against")
        ref = pulse_energy(record, ref_window, channel="input", normalize=False)
        if ref == 0.0:
            raise AnalysisError("input energy is zero; cannot normalize")
        return energy / ref
    return energy


def fit_exponential(curve: DecayCurve, max_iter: int = 100) -> FitResult:
    """Least-squares fit of A*exp(-t/tau), Gauss-Newton from a log-linear
    warm start. Deterministic; non-convergence is flagged, not raised."""
    t = np.asarray(curve.times, dtype=float)
    y = np.asarray(curve.energies, dtype=float)
    if t.size < 2:
        raise AnalysisError("need at least two points to fit a decay")
    if np.any(y <= 0):
        raise AnalysisError("decay fit requires positive energies")

    # warm start: ln y = ln A - t/tau
    coef = np.polyfit(t, np.log(y), 1)
    slope, intercept = coef[0], coef[1]
    a = float(np.exp(intercept))
    tau = float(-1.0 / slope) if slope < 0 else float(t[-1] - t[0]) * 10.0

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        e = np.exp(-t / tau)
        model = a * e
        r = model - y
        j_a = e
        j_tau = a * e * t / tau**2
        g = np.array([j_a @ r, j_tau @ r])
        h = np.array([[j_a @ j_a, j_a @ j_tau], [j_a @ j_tau, j_tau @ j_tau]])
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        while tau + scale * step[1] <= 0 or a + scale * step[0] <= 0:
            scale /= 2.0
            if scale < 1e-12:
                break
        a_new, tau_new = a + scale * step[0], tau + scale * step[1]
        if abs(a_new - a) <= 1e-14 * abs(a) and abs(tau_new - tau) <= 1e-14 * abs(tau):
            a, tau = a_new, tau_new
            converged = True
            break
        a, tau = a_new, tau_new
    resid = float(np.linalg.norm(a * np.exp(-t / tau) - y))
    if not converged:
        # accept answers whose gradient has flattened out
        converged = resid <= 1e-10 * max(1.0, float(np.linalg.norm(y)))
    return FitResult(a, tau, resid, converged, it)


def eit_fwhm(spectrum: Spectrum) -> float:
    """Width (Hz) of the transparency feature at half its dip-to-peak contrast.

    The transparency peak is the transmission maximum between the two
    absorption-floor minima that flank it; the half level sits midway
    between the mean floor and the peak, crossings linearly interpolated.
    """
    f = np.asarray(spectrum.frequency_hz, dtype=float)
    t = np.asarray(spectrum.transmission, dtype=float)
    n = t.size
    if n < 5:
        raise AnalysisError("spectrum too short for a width estimate")

    span = float(t.max() - t.min())
    if span < 1e-9:
        raise AnalysisError("flat spectrum: no transparency feature")

    # transparency candidate: highest interior local maximum strictly below
    # the spectrum edges' absorption shoulders
    interior = slice(1, n - 1)
    local_max = np.where(
        (t[1:-1] >= t[:-2]) & (t[1:-1] >= t[2:])
    )[0] + 1
    if local_max.size == 0:
        raise AnalysisError("no transparency feature inside the absorption dip")
    peak = int(local_max[np.argmax(t[local_max])])

    left = t[: peak + 1]
    right = t[peak:]
    floor_left = float(left.min())
    floor_right = float(right.min())
    peak_val = float(t[peak])
    contrast = peak_val - 0.5 * (floor_left + floor_right)
    if contrast < 1e-6 * max(1.0, peak_val) or floor_left >= peak_val or floor_right >= peak_val:
        raise AnalysisError("no transparency feature inside the absorption dip")
    half = peak_val - contrast / 2.0

    def cross(direction: int) -> float:
        i = peak
        while 0 <= i + direction < n:
            j = i + direction
            if t[j] < half:
                frac = (t[i] - half) / (t[i] - t[j])
                return f[i] + frac * (f[j] - f[i])
            i = j
        raise AnalysisError("transparency feature is not enclosed by the spectrum")

    return cross(+1) - cross(-1)


@dataclass
class LinearityReport:
    areas: np.ndarray
    input_energies: np.ndarray
    output_energies: np.ndarray
    slope: float
    r_squared: float
    linear_region_max_area: float
    deviation_area: float | None  # first area whose output misses the line by >10%

    def to_json(self) -> str:
        return json.dumps(
            {
                "areas_rad": self.areas.tolist(),
                "input_energies": self.input_energies.tolist(),
                "output_energies": self.output_energies.tolist(),
                "slope": self.slope,
                "r_squared_linear_region": self.r_squared,
                "linear_region_max_area_rad": self.linear_region_max_area,
                "deviation_area_rad": self.deviation_area,
            },
            indent=2,
        )


def linearity_report(
    areas: np.ndarray,
    input_energies: np.ndarray,
    output_energies: np.ndarray,
    linear_max_area: float = 0.1 * np.pi,
    deviation_threshold: float = 0.10,
) -> LinearityReport:
    """Least-squares line through the low-area points plus saturation onset."""
    areas = np.asarray(areas, dtype=float)
    e_in = np.asarray(input_energies, dtype=float)
    e_out = np.asarray(output_energies, dtype=float)
    if np.any(np.diff(areas) <= 0):
        raise ConfigurationError("areas must be sorted increasing")
    low = areas <= linear_max_area * (1.0 + 1e-12)
    if low.sum() < 2:
        raise AnalysisError("need at least two areas at or below the linear region cap")
    slope = float(e_out[low] @ e_in[low] / (e_in[low] @ e_in[low]))
    resid = e_out[low] - slope * e_in[low]
    ss_tot = float(((e_out[low] - e_out[low].mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    deviation_area = None
    for k in range(areas.size):
        expect = slope * e_in[k]
        if expect > 0 and abs(e_out[k] - expect) / expect > deviation_threshold:
            deviation_area = float(areas[k])
            break
    return LinearityReport(
        areas, e_in, e_out, slope, r2, linear_max_area, deviation_area
    )


def linearity_scan(setup, areas, storage_time: float = 0.1, probe_duration: float = 20e-6,
                   **seq_kwargs) -> LinearityReport:
    """Run the store/recall scenario once per probe area and report linearity.

    `setup` is a propagation.RunSetup; extra kwargs go to the sequence
    builder. Areas must be sorted ascending (rad).
    """
    from .propagation import run_sequence
    from .sequence import make_store_recall_simple, pulse_for_area

    areas = np.asarray(areas, dtype=float)
    if np.any(areas <= 0):
        raise ConfigurationError("probe areas must be > 0")
    e_in, e_out = [], []
    for area in areas:
        peak_hz = pulse_for_area(0.0, probe_duration, float(area)).peak_rabi_hz
        seq = make_store_recall_simple(
            storage_time, probe_duration=probe_duration,
            probe_peak_rabi_hz=peak_hz, **seq_kwargs,
        )
        rec = run_sequence(seq, setup)
        e_in.append(rec.summary["input_energy"])
        e_out.append(rec.summary["output_energy"])
    return linearity_report(areas, np.array(e_in), np.array(e_out))


# --- heterodyne detection model ---------------------------------------------


def heterodyne_trace(times: np.ndarray, envelope: np.ndarray, f_lo: float,
                     lo_amplitude: float) -> np.ndarray:
    """Ideal square-law detector signal |E_LO + E(t)|^2 with the local
    oscillator offset by f_lo from the signal carrier."""
    t = np.asarray(times)
    e = np.asarray(envelope)
    lo = lo_amplitude * np.exp(-1j * TWO_PI * f_lo * t)
    return np.abs(lo + e) ** 2


def demodulate(times: np.ndarray, trace: np.ndarray, f_lo: float,
               lo_amplitude: float, bandwidth_hz: float | None = None) -> np.ndarray:
    """Recover |E(t)| from a heterodyne trace by product demodulation.

    Brick-wall low-pass at f_lo/2 after mixing down; an optional single-pole
    detector response of the given bandwidth is applied in the same pass.
    Exact (to spectral leakage) for signals band-limited below f_lo/2.
    """
    t = np.asarray(times)
    dt = t[1] - t[0]
    if f_lo <= 0 or f_lo >= 0.5 / dt:
        raise ConfigurationError("need 0 < f_lo < Nyquist/... sampling too coarse")
    mixed = np.asarray(trace) * np.exp(1j * TWO_PI * f_lo * t)
    spec = np.fft.fft(mixed)
    freqs = np.fft.fftfreq(t.size, dt)
    mask = np.abs(freqs) <= f_lo / 2.0
    resp = mask.astype(float)
    if bandwidth_hz is not None:
        resp = resp / np.sqrt(1.0 + (freqs / bandwidth_hz) ** 2)
    return np.abs(np.fft.ifft(spec * resp)) / lo_amplitude


# --- file output -------------------------------------------------------------


def write_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> None:
    """Comma-separated, '.' decimal, full double precision via repr."""
    if len(header) != len(columns):
        raise ConfigurationError("header/column count mismatch")
    n = len(columns[0])
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(repr(float(col[i])) for col in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[np.ndarray]]:
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    rows = [[float(x) for x in line.split(",")] for line in text[1:]]
    cols = [np.array([row[j] for row in rows]) for j in range(len(header))]
    return header, cols


def write_summary(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def spectrum_from_record(record, sweep) -> Spectrum:
    """Transmission spectrum from a swept-probe record.

    Maps sample times to instantaneous probe frequency through the chirp and
    takes |out/in|^2 where the input envelope is nonzero.
    """
    t = np.asarray(record.times)
    e_in = np.asarray(record.input_env)
    e_out = np.asarray(record.output_env)
    live = np.abs(e_in) > 0
    if live.sum() < 8:
        raise AnalysisError("record contains no swept-probe samples")
    f_hz = sweep.instantaneous_detuning(t[live]) / TWO_PI
    trans = np.abs(e_out[live]) ** 2 / np.abs(e_in[live]) ** 2
    order = np.argsort(f_hz)
    return Spectrum(f_hz[order], trans[order])
