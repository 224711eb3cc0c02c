"""Stochastic spin-frequency noise and coherence decay under rephasing.

The fluctuating part of the spin transition frequency is modeled as a
stationary Ornstein-Uhlenbeck process delta_omega(t) with RMS `sigma`
(rad/s) and correlation time `tau_c`. Under a train of pi pulses the
accumulated phase is phi(T) = int_0^T s(t) delta_omega(t) dt with s(t) the
toggling sign, and the surviving coherence fraction is
C(T) = |< exp(i phi) >|.

Because the process is Gaussian, C(T) = exp(-Var(phi)/2) exactly; the
variance obeys a closed two-variable recursion across constant-sign
segments, which `toggled_phase_variance` evaluates in O(n_flips). The
Monte-Carlo estimator (`coherence_decay`) is the independent cross-check
and the route the propagation module uses (`decay_envelope`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence as Seq

import numpy as np

from . import kernels
from .errors import CalibrationError, ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class NoiseModel:
    """Effective spin-frequency noise: RMS sigma (rad/s), correlation time
    tau_c (s), and the base seed for trajectory generation."""

    sigma: float
    tau_c: float
    seed: int = 1234

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if self.tau_c <= 0:
            raise ConfigurationError("tau_c must be > 0")


@dataclass(frozen=True)
class TogglingFrame:
    """Sign function s(t) starting at +1 and flipping at each pulse time."""

    flips: tuple[float, ...]

    def __post_init__(self):
        if list(self.flips) != sorted(self.flips):
            raise ConfigurationError("flip times must be sorted")

    def sign(self, t: float) -> int:
        return -1 if np.searchsorted(np.asarray(self.flips), t, side="right") % 2 else 1

    def signs(self, t: np.ndarray) -> np.ndarray:
        k = np.searchsorted(np.asarray(self.flips), t, side="right")
        return np.where(k % 2 == 0, 1, -1)


def sample_ou(model: NoiseModel, dt: float, n_steps: int) -> np.ndarray:
    """One stationary OU trajectory of n_steps+1 samples (exact update).

    Deterministic given the model seed; uses the same seeded legacy stream as
    the Monte-Carlo kernels. Requires dt <= tau_c/10 so callers cannot
    under-resolve the correlation time.
    """
    if dt > model.tau_c / 10.0:
        raise ConfigurationError(
            f"dt={dt:.3e} too coarse for tau_c={model.tau_c:.3e} (need dt <= tau_c/10)"
        )
    draws = np.random.RandomState(model.seed & 0x7FFFFFFF).standard_normal(n_steps + 1)
    if model.sigma == 0.0:
        return np.zeros(n_steps + 1)
    a = np.exp(-dt / model.tau_c)
    b = model.sigma * np.sqrt(1.0 - a * a)
    xi = b * draws[1:]
    out = np.empty(n_steps + 1)
    out[0] = model.sigma * draws[0]
    # chunked rescaled-scan evaluation of x_k = a x_{k-1} + xi_k
    chunk = max(1, min(4096, int(30.0 * model.tau_c / dt)))
    x_in = out[0]
    for lo in range(0, n_steps, chunk):
        hi = min(lo + chunk, n_steps)
        j = np.arange(1, hi - lo + 1)
        decay = a**j
        c = np.cumsum(xi[lo:hi] / decay)
        out[lo + 1 : hi + 1] = decay * (x_in + c)
        x_in = out[hi]
    return out


def toggled_phase_variance(
    flips: Seq[float], total_time: float, sigma: float, tau_c: float
) -> float:
    """Exact Var(phi) for phi = int_0^T s(t) x(t) dt, x stationary OU.

    Propagates (Var(phi), Cov(phi, x)) across constant-sign segments using
    the closed-form segment update; no discretization error.
    """
    bounds = [0.0] + [t for t in flips if 0.0 < t < total_time] + [total_time]
    v = 0.0
    cov = 0.0
    s = 1.0
    s2t = sigma * sigma * tau_c
    for i in range(len(bounds) - 1):
        dt = bounds[i + 1] - bounds[i]
        if dt > 0:
            e = np.exp(-dt / tau_c)
            integral = s * s2t * dt + tau_c * (cov - s * s2t) * (1.0 - e)
            v += 2.0 * s * integral
            cov = s * s2t + (cov - s * s2t) * e
        s = -s
    return v


def coherence_envelope_analytic(
    flips: Seq[float], times: np.ndarray, sigma: float, tau_c: float
) -> np.ndarray:
    """C(t) = exp(-Var(phi(t))/2) at each requested time (flips fixed)."""
    return np.exp(
        -0.5 * np.array([toggled_phase_variance(flips, t, sigma, tau_c) for t in times])
    )


def fid_envelope_analytic(times: np.ndarray, sigma: float, tau_c: float) -> np.ndarray:
    """Free-induction-decay closed form, the no-flip special case."""
    x = np.asarray(times) / tau_c
    return np.exp(-(sigma * tau_c) ** 2 * (x - 1.0 + np.exp(-x)))


def _step_plan(
    flips: Seq[float], report_times: np.ndarray, total_time: float, tau_c: float
):
    """Uniform substeps per constant-sign segment, boundaries snapped to both
    flip and report times. Returns (a, b_unit, half_dt_sign, record_after)."""
    cuts = np.unique(
        np.concatenate(
            [[0.0, total_time], np.asarray(flips, dtype=float), np.asarray(report_times)]
        )
    )
    cuts = cuts[(cuts >= 0.0) & (cuts <= total_time)]
    frame = TogglingFrame(tuple(sorted(flips)))
    dt_max = tau_c / 10.0
    a_list, hds_list, rec = [], [], []
    flip_arr = np.asarray(flips, dtype=float)
    report = set(np.asarray(report_times).tolist())
    step = 0
    for i in range(cuts.size - 1):
        seg = cuts[i + 1] - cuts[i]
        if seg <= 0:
            continue
        n = max(1, int(np.ceil(seg / dt_max)))
        dt = seg / n
        mid_sign = frame.sign(cuts[i] + 0.5 * dt)
        a_list.append(np.full(n, np.exp(-dt / tau_c)))
        hds_list.append(np.full(n, 0.5 * dt * mid_sign))
        step += n
        if cuts[i + 1] in report:
            rec.append(step - 1)
    a = np.concatenate(a_list) if a_list else np.empty(0)
    hds = np.concatenate(hds_list) if hds_list else np.empty(0)
    return a, np.sqrt(1.0 - a * a), hds, np.array(rec, dtype=np.int64)


def coherence_decay(
    flips: Seq[float],
    model: NoiseModel,
    total_time: float,
    n_traj: int = 10_000,
    report_times: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monte-Carlo C(t) curve with standard errors.

    Returns (times, C, SE). times always starts at 0 where C = 1 exactly.
    Trajectories are independent with counter-derived seeds; the reduction
    over trajectories is a fixed-order numpy mean, so results are
    reproducible bit-for-bit for a given seed and backend.
    """
    if n_traj < 100:
        raise ConfigurationError("n_traj must be >= 100")
    if report_times is None:
        report_times = np.linspace(0.0, total_time, 65)[1:]
    report_times = np.unique(np.asarray(report_times, dtype=float))
    report_times = report_times[(report_times > 0) & (report_times <= total_time)]
    if model.sigma == 0.0:
        n = report_times.size + 1
        return (np.concatenate([[0.0], report_times]), np.ones(n), np.zeros(n))
    a, b_unit, hds, rec = _step_plan(flips, report_times, total_time, model.tau_c)
    vals = kernels.ou_phase_mc(
        model.sigma, a, model.sigma * b_unit, hds, rec, model.seed, n_traj
    )
    mean = vals.mean(axis=0)
    c = np.abs(mean)
    # spread of the per-trajectory projection onto the mean direction
    unit = mean / np.where(c == 0, 1.0, c)
    proj = (vals * np.conj(unit)).real
    se = proj.std(axis=0, ddof=1) / np.sqrt(n_traj)
    times = np.concatenate([[0.0], report_times])
    return times, np.concatenate([[1.0], c]), np.concatenate([[0.0], se])


def decay_envelope(sequence, model: NoiseModel | None, n_traj: int = 10_000) -> float:
    """Multiplicative factor for rho12 at the recall time of `sequence`.

    Flip times are measured from the storage start (coupling off); the spin
    wave only exists over that window.
    """
    if model is None or model.sigma == 0.0:
        return 1.0
    t0 = sequence.t_store or 0.0
    recall = sequence.recall_time
    if recall is None:
        return 1.0
    total = recall - t0
    flips = [t - t0 for t in sequence.rf_times]
    _, c, _ = coherence_decay(flips, model, total, n_traj, report_times=np.array([total]))
    return float(c[-1])


# --- calibration -----------------------------------------------------------


def _simple_flips(t: float) -> list[float]:
    return [t / 4.0, 3.0 * t / 4.0]


def _ddc_flips(t: float, first: float = 2e-3, spacing: float = 4e-3) -> list[float]:
    n = max(1, int(round(t / spacing)))
    return [first + spacing * k for k in range(n)]


DECAY_SCAN_TIMES = (0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.0)


@dataclass
class CalibrationResult:
    model: NoiseModel
    fitted_t2_simple: float
    fitted_t2_ddc: float
    target_t2_simple: float
    target_t2_ddc: float
    loss: float
    grid_best: tuple[float, float]
    n_evaluations: int

    @property
    def rel_errors(self) -> tuple[float, float]:
        return (
            abs(self.fitted_t2_simple - self.target_t2_simple) / self.target_t2_simple,
            abs(self.fitted_t2_ddc - self.target_t2_ddc) / self.target_t2_ddc,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "sigma_rad_s": self.model.sigma,
                "sigma_hz": self.model.sigma / TWO_PI,
                "tau_c_s": self.model.tau_c,
                "seed": self.model.seed,
                "fitted_t2_simple_s": self.fitted_t2_simple,
                "fitted_t2_ddc_s": self.fitted_t2_ddc,
                "target_t2_simple_s": self.target_t2_simple,
                "target_t2_ddc_s": self.target_t2_ddc,
                "rel_error_simple": self.rel_errors[0],
                "rel_error_ddc": self.rel_errors[1],
                "loss": self.loss,
                "coarse_grid_best": list(self.grid_best),
                "n_evaluations": self.n_evaluations,
            },
            indent=2,
        )


def _fitted_decay_constants(
    sigma: float, tau_c: float, times: Seq[float]
) -> tuple[float, float]:
    """Energy-decay constants for the simple and DDC protocols.

    The stored-pulse energy scales as C(T)^2; fitting the same estimator the
    analysis pipeline uses keeps calibration and measurement consistent.
    """
    from .analysis import DecayCurve, fit_exponential

    t = np.asarray(times, dtype=float)
    c2_simple = np.array(
        [np.exp(-toggled_phase_variance(_simple_flips(T), T, sigma, tau_c)) for T in t]
    )
    c2_ddc = np.array(
        [np.exp(-toggled_phase_variance(_ddc_flips(T), T, sigma, tau_c)) for T in t]
    )
    fit_s = fit_exponential(DecayCurve(t, c2_simple))
    fit_d = fit_exponential(DecayCurve(t, c2_ddc))
    return fit_s.tau, fit_d.tau


def calibrate(
    t2_simple: float = 0.35,
    t2_ddc: float = 2.3,
    times: Seq[float] = DECAY_SCAN_TIMES,
    seed: int = 1234,
    tolerance: float = 0.30,
    grid_size: int = 41,
) -> CalibrationResult:
    """Find (sigma, tau_c) reproducing both measured energy-decay constants.

    Coarse log grid over sigma in [1e-1, 1e4] rad/s and tau_c in [1e-4, 1e2]
    s, then coordinate descent in log space. Raises CalibrationError when the
    best point misses either target by more than `tolerance`.
    """
    if t2_simple <= 0 or t2_ddc <= t2_simple:
        raise ConfigurationError("need 0 < t2_simple < t2_ddc")

    n_eval = 0

    def loss_fn(log_sigma: float, log_tau: float) -> tuple[float, float, float]:
        nonlocal n_eval
        n_eval += 1
        ts, td = _fitted_decay_constants(10.0**log_sigma, 10.0**log_tau, times)
        if not (np.isfinite(ts) and np.isfinite(td)) or ts <= 0 or td <= 0:
            return np.inf, ts, td
        loss = np.log(ts / t2_simple) ** 2 + np.log(td / t2_ddc) ** 2
        return loss, ts, td

    ls_grid = np.linspace(-1.0, 4.0, grid_size)
    lt_grid = np.linspace(-4.0, 2.0, grid_size)
    best = (np.inf, 0.0, 0.0, 0.0, 0.0)
    for ls in ls_grid:
        for lt in lt_grid:
            loss, ts, td = loss_fn(ls, lt)
            if loss < best[0]:
                best = (loss, ls, lt, ts, td)
    grid_best = (10.0 ** best[1], 10.0 ** best[2])

    # coordinate descent with shrinking log-space steps
    loss, ls, lt, ts, td = best
    step = (ls_grid[1] - ls_grid[0])
    while step > 1e-4:
        improved = False
        for dls, dlt in ((step, 0), (-step, 0), (0, step), (0, -step)):
            cand_ls = np.clip(ls + dls, ls_grid[0], ls_grid[-1])
            cand_lt = np.clip(lt + dlt, lt_grid[0], lt_grid[-1])
            cand_loss, cand_ts, cand_td = loss_fn(cand_ls, cand_lt)
            if cand_loss < loss:
                loss, ls, lt, ts, td = cand_loss, cand_ls, cand_lt, cand_ts, cand_td
                improved = True
        if not improved:
            step /= 2.0

    result = CalibrationResult(
        model=NoiseModel(sigma=10.0**ls, tau_c=10.0**lt, seed=seed),
        fitted_t2_simple=ts,
        fitted_t2_ddc=td,
        target_t2_simple=t2_simple,
        target_t2_ddc=t2_ddc,
        loss=loss,
        grid_best=grid_best,
        n_evaluations=n_eval,
    )
    err_s, err_d = result.rel_errors
    if err_s > tolerance or err_d > tolerance:
        raise CalibrationError(
            "calibration failed: fitted decay constants "
            f"({ts:.3g} s, {td:.3g} s) miss targets ({t2_simple}, {t2_ddc}) "
            f"by ({err_s:.0%}, {err_d:.0%}); report: {result.to_json()}"
        )
    return result
