"""Lambda level scheme, inhomogeneous ensemble, and analytic weak-probe response.

Conventions used throughout the package:

* Internal frequencies and rates are angular (rad/s). Config and file I/O
  use Hz; the conversion happens at the boundary only.
* Level order is |1> (ground, probe-coupled), |2> (ground, storage),
  |3> (excited). A detuning class (Delta, delta) places the rotating-frame
  Hamiltonian diagonal at (0, -delta, -Delta), so a free spin coherence
  rho12 advances as exp(-i*delta*t).
* The weak-probe response of one class at probe detuning Dp is

      D(Dp) = 1 / (gamma_opt - i*(Dp + Delta) + (|Oc|^2/4) / (gamma_spin - i*(Dp + delta)))

  whose real part is the absorption quadrature. Transmission through peak
  optical depth d is exp(-d * Re D / Re D0) with D0 the coupling-off
  on-resonance response of the same ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, ConfigurationError

TWO_PI = 2.0 * np.pi

# FWHM of a unit-sigma Gaussian
GAUSSIAN_FWHM = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class LevelScheme:
    """Decay and branching structure of the three-level system.

    Rates are angular (rad/s). `gamma_opt` is the total optical coherence
    decay rate on rho13/rho23 (for a 2500 Hz homogeneous linewidth,
    gamma_opt = pi * 2500). Branching b1 + b2 = 1 exactly.
    """

    gamma3: float
    gamma_opt: float
    gamma_spin: float
    b1: float = 0.5
    labels: tuple[str, str, str] = ("g1", "g2", "e")

    def __post_init__(self):
        if min(self.gamma3, self.gamma_opt, self.gamma_spin) < 0:
            raise ConfigurationError("decay rates must be >= 0")
        if not 0.0 <= self.b1 <= 1.0:
            raise ConfigurationError(f"branching b1={self.b1} outside [0, 1]")
        if self.gamma_opt < self.gamma3 / 2:
            raise ConfigurationError(
                "gamma_opt must be >= gamma3/2 (coherence cannot outlive population)"
            )

    @property
    def b2(self) -> float:
        return 1.0 - self.b1


@dataclass(frozen=True)
class InhomogeneousProfile:
    """Gaussian optical and spin inhomogeneous lines, in Hz (FWHM).

    Class counts must be odd so that a zero-detuning class exists.
    """

    optical_fwhm_hz: float = 100e3
    spin_fwhm_hz: float = 10e3
    n_opt: int = 41
    n_spin: int = 41
    span_sigmas: float = 3.0

    def __post_init__(self):
        for n, name in ((self.n_opt, "n_opt"), (self.n_spin, "n_spin")):
            if n < 1 or n % 2 == 0:
                raise ConfigurationError(f"{name}={n} must be odd and >= 1")
        if self.n_opt > 1 and self.optical_fwhm_hz <= 0:
            raise ConfigurationError("optical_fwhm_hz must be > 0")
        if self.n_spin > 1 and self.spin_fwhm_hz <= 0:
            raise ConfigurationError("spin_fwhm_hz must be > 0")


@dataclass(frozen=True)
class DetuningClass:
    """One member of the discretized ensemble (angular detunings, rad/s)."""

    delta_opt: float
    delta_spin: float
    weight: float


@dataclass(frozen=True)
class Ensemble:
    """Array view of a class list, the form the propagation kernels consume."""

    delta_opt: np.ndarray
    delta_spin: np.ndarray
    weight: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.weight.size


def _axis(n: int, fwhm_hz: float, span_sigmas: float) -> tuple[np.ndarray, np.ndarray]:
    """Detuning grid (rad/s) and unnormalized Gaussian weights for one axis."""
    if n == 1:
        return np.zeros(1), np.ones(1)
    sigma = TWO_PI * fwhm_hz / GAUSSIAN_FWHM
    x = np.linspace(-span_sigmas * sigma, span_sigmas * sigma, n)
    return x, np.exp(-0.5 * (x / sigma) ** 2)


def discretize_profile(profile: InhomogeneousProfile) -> list[DetuningClass]:
    """Tensor-product (Delta, delta) grid with Gaussian weights summing to 1.

    The grid spans +-span_sigmas standard deviations per axis and is
    symmetric: for every class at (Delta, delta) the class at
    (-Delta, -delta) exists with equal weight.
    """
    d_opt, w_opt = _axis(profile.n_opt, profile.optical_fwhm_hz, profile.span_sigmas)
    d_spin, w_spin = _axis(profile.n_spin, profile.spin_fwhm_hz, profile.span_sigmas)
    w = np.outer(w_opt, w_spin)
    w /= w.sum()
    classes = []
    for i in range(profile.n_opt):
        for j in range(profile.n_spin):
            classes.append(DetuningClass(d_opt[i], d_spin[j], w[i, j]))
    return classes


def as_ensemble(classes: list[DetuningClass]) -> Ensemble:
    return Ensemble(
        delta_opt=np.array([c.delta_opt for c in classes]),
        delta_spin=np.array([c.delta_spin for c in classes]),
        weight=np.array([c.weight for c in classes]),
    )


def weak_probe_susceptibility(
    classes: list[DetuningClass] | Ensemble,
    scheme: LevelScheme,
    omega_c: float,
    probe_detuning: float,
) -> complex:
    """Steady-state weak-probe response summed over the ensemble.

    Returns the complex sum_k w_k * D_k(probe_detuning); Re is the absorption
    quadrature, Im the dispersive one. A class whose two-photon denominator
    vanishes exactly (gamma_spin = 0 on two-photon resonance with coupling on)
    is perfectly dark and contributes 0.
    """
    ens = classes if isinstance(classes, Ensemble) else as_ensemble(classes)
    opt_den = scheme.gamma_opt - 1j * (probe_detuning + ens.delta_opt)
    if omega_c == 0.0:
        return complex(np.sum(ens.weight / opt_den))
    spin_den = scheme.gamma_spin - 1j * (probe_detuning + ens.delta_spin)
    dark = spin_den == 0.0
    safe = np.where(dark, 1.0, spin_den)
    resp = ens.weight / (opt_den + (abs(omega_c) ** 2 / 4.0) / safe)
    return complex(np.sum(np.where(dark, 0.0, resp)))


def absorption_profile(
    classes: list[DetuningClass] | Ensemble,
    scheme: LevelScheme,
    omega_c: float,
    probe_detunings: np.ndarray,
    _chunk: int = 256,
) -> np.ndarray:
    """Absorption quadrature Re D normalized to the coupling-off peak.

    A value of 1 means full single-photon absorption; through depth d the
    transmission is exp(-d * value).
    """
    ens = classes if isinstance(classes, Ensemble) else as_ensemble(classes)
    ref = weak_probe_susceptibility(ens, scheme, 0.0, 0.0).real
    dps = np.asarray(probe_detunings, dtype=float)
    out = np.empty(dps.size)
    oc2 = abs(omega_c) ** 2 / 4.0
    for lo in range(0, dps.size, _chunk):
        dp = dps[lo : lo + _chunk, None]
        opt_den = scheme.gamma_opt - 1j * (dp + ens.delta_opt[None, :])
        if omega_c == 0.0:
            resp = ens.weight[None, :] / opt_den
        else:
            spin_den = scheme.gamma_spin - 1j * (dp + ens.delta_spin[None, :])
            dark = spin_den == 0.0
            resp = ens.weight[None, :] / (opt_den + oc2 / np.where(dark, 1.0, spin_den))
            resp = np.where(dark, 0.0, resp)
        out[lo : lo + _chunk] = resp.sum(axis=1).real / ref
    return out


def weak_probe_transmission(
    classes: list[DetuningClass] | Ensemble,
    scheme: LevelScheme,
    omega_c: float,
    probe_detuning: float,
    depth: float,
) -> float:
    """Beer-Lambert transmission through peak optical depth `depth`."""
    a = absorption_profile(classes, scheme, omega_c, np.array([probe_detuning]))[0]
    return float(np.exp(-depth * a))


def eit_width_analytic(
    classes: list[DetuningClass] | Ensemble,
    scheme: LevelScheme,
    omega_c: float,
    n_points: int = 4001,
) -> float:
    """FWHM (Hz) of the analytic transparency window.

    Measured the way a transmission trace is read: the absorption valley
    around two-photon resonance is bounded by its flanking absorption maxima
    (the carved feature shoulders at low coupling, the Autler-Townes peaks at
    high coupling); the width is taken at half the valley-to-flank contrast
    with linear interpolation. A second pass zooms onto narrow windows.

    The class grid must be dense enough that neighboring transparency
    resonances overlap, otherwise the discretization comb is the feature.
    Raises AnalysisError when no transparency opens above the numerical floor.
    """
    if omega_c <= 0:
        raise AnalysisError("coupling must be > 0 to open a transparency window")
    ens = classes if isinstance(classes, Ensemble) else as_ensemble(classes)
    spin_spread = float(np.max(np.abs(ens.delta_spin))) if ens.n_classes else 0.0
    opt_spread = float(np.max(np.abs(ens.delta_opt))) if ens.n_classes else 0.0
    half_span = 1.5 * max(omega_c, spin_spread + opt_spread, scheme.gamma_opt)

    def measure(span: float) -> float:
        dp = np.linspace(-span, span, n_points)
        a = absorption_profile(ens, scheme, omega_c, dp)
        # walk downhill from two-photon resonance to the window floor
        valley = int(np.argmin(np.abs(dp)))
        while True:
            if valley > 0 and a[valley - 1] < a[valley]:
                valley -= 1
            elif valley < n_points - 1 and a[valley + 1] < a[valley]:
                valley += 1
            else:
                break
        left_flank = float(a[:valley].max(initial=a[valley]))
        right_flank = float(a[valley + 1 :].max(initial=a[valley]))
        flank = 0.5 * (left_flank + right_flank)
        contrast = flank - a[valley]
        if contrast < 1e-9:
            raise AnalysisError("no transparency window found (coupling too weak)")
        half = a[valley] + contrast / 2.0

        def cross(idx_range) -> float:
            prev = valley
            for i in idx_range:
                if a[i] > half:
                    f = (half - a[prev]) / (a[i] - a[prev])
                    return dp[prev] + f * (dp[i] - dp[prev])
                prev = i
            raise AnalysisError("transparency window is not enclosed by the span")

        left = cross(range(valley - 1, -1, -1))
        right = cross(range(valley + 1, n_points))
        return right - left

    width = measure(half_span)
    zoom = 3.0 * max(width, scheme.gamma_spin, TWO_PI)
    if zoom < half_span / 4.0:
        width = measure(zoom)
    return width / TWO_PI
