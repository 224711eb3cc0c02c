"""Hot numeric kernels: ensemble Maxwell-Bloch stepping and OU phase Monte Carlo.

Two interchangeable implementations live here: numba @njit kernels (default
when numba imports) and a pure-numpy fallback. Selection is by environment
variable at import time:

    EITSTORE_BACKEND=numba   require numba (raise if unavailable)
    EITSTORE_BACKEND=numpy   force the numpy fallback
    unset / auto             numba when importable, else numpy

Both backends consume per-trajectory seeded legacy-MT19937 streams and write
per-atom / per-trajectory results without cross-iteration reductions, so
results are deterministic; numba and numpy RNG streams are bit-identical.

State layout shared with `eitstore.propagation`:
    pops  float64   (n_z, n_classes, 3)   populations rho11, rho22, rho33
    cohs  complex128(n_z, n_classes, 3)   coherences  rho12, rho13, rho23
The lower triangle is implied by Hermiticity.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigurationError

_ENV = os.environ.get("EITSTORE_BACKEND", "auto").lower()
if _ENV not in ("auto", "numba", "numpy"):
    raise ConfigurationError(f"EITSTORE_BACKEND={_ENV!r} (use auto, numba or numpy)")

try:
    import numba
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via EITSTORE_BACKEND=numpy
    _HAVE_NUMBA = False
    if _ENV == "numba":
        raise ConfigurationError("EITSTORE_BACKEND=numba but numba is not importable")

USE_NUMBA = _HAVE_NUMBA and _ENV != "numpy"


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Maxwell-Bloch segment propagation
# ---------------------------------------------------------------------------
#
# Per time step, with the field quasi-static over dt:
#   1. integrate d(Omega_p)/dz = i * eta * sum_c w_c rho31(z, c)  (first-order
#      upwind: the atom at cell z sees the field entering that cell)
#   2. RK4-advance every (z, class) density matrix with its local field.
# The class sum runs in fixed index order.


def propagate_segment(
    pops: np.ndarray,
    cohs: np.ndarray,
    weight: np.ndarray,
    d_opt: np.ndarray,
    d_spin: np.ndarray,
    probe_in: np.ndarray,
    omega_c: complex,
    eta: float,
    dz: float,
    dt: float,
    gamma3: float,
    b1: float,
    gamma_opt: float,
    gamma_spin: float,
) -> np.ndarray:
    """Advance the medium through len(probe_in) steps; return the exit field.

    `probe_in[k]` is the complex probe Rabi envelope at z=0 during step k
    (chirps are folded into its phase). Mutates pops/cohs in place.
    """
    out_field = np.empty(probe_in.size, dtype=np.complex128)
    args = (
        pops, cohs, weight, d_opt, d_spin,
        np.ascontiguousarray(probe_in, dtype=np.complex128),
        complex(omega_c), float(eta), float(dz), float(dt),
        float(gamma3), float(b1), float(gamma_opt), float(gamma_spin),
        out_field,
    )
    if USE_NUMBA:
        _propagate_segment_numba(*args)
    else:
        _propagate_segment_numpy(*args)
    return out_field


def _propagate_segment_numpy(
    pops, cohs, weight, d_opt, d_spin, probe_in, omega_c, eta, dz, dt,
    gamma3, b1, gamma_opt, gamma_spin, out_field,
):
    b2 = 1.0 - b1
    e2 = -d_spin[None, :]
    e3 = -d_opt[None, :]
    bconj = np.conj(-0.5 * omega_c)
    bc = -0.5 * omega_c

    def rhs(n1, n2, n3, r12, r13, r23, a, aconj):
        ar13 = a * r13
        br23 = bc * r23
        im_a = ar13.imag
        im_b = br23.imag
        dn1 = -2.0 * im_a + b1 * gamma3 * n3
        dn2 = -2.0 * im_b + b2 * gamma3 * n3
        dn3 = 2.0 * (im_a + im_b) - gamma3 * n3
        dr12 = -1j * (aconj * np.conj(r23) - e2 * r12 - bc * r13) - gamma_spin * r12
        dr13 = -1j * (aconj * (n3 - n1) - bconj * r12 - e3 * r13) - gamma_opt * r13
        dr23 = (
            -1j * (bconj * (n3 - n2) + (e2 - e3) * r23 - aconj * np.conj(r12))
            - gamma_opt * r23
        )
        return dn1, dn2, dn3, dr12, dr13, dr23

    for k in range(probe_in.size):
        incr = 1j * eta * dz * (np.conj(cohs[:, :, 1]) * weight[None, :]).sum(axis=1)
        cum = np.cumsum(incr)
        field = np.empty(pops.shape[0], dtype=np.complex128)
        field[0] = probe_in[k]
        field[1:] = probe_in[k] + cum[:-1]
        out_field[k] = probe_in[k] + cum[-1]

        a = -0.5 * field[:, None]
        aconj = np.conj(a)
        n1, n2, n3 = pops[:, :, 0], pops[:, :, 1], pops[:, :, 2]
        r12, r13, r23 = cohs[:, :, 0], cohs[:, :, 1], cohs[:, :, 2]
        k1 = rhs(n1, n2, n3, r12, r13, r23, a, aconj)
        h = 0.5 * dt
        k2 = rhs(
            n1 + h * k1[0], n2 + h * k1[1], n3 + h * k1[2],
            r12 + h * k1[3], r13 + h * k1[4], r23 + h * k1[5], a, aconj,
        )
        k3 = rhs(
            n1 + h * k2[0], n2 + h * k2[1], n3 + h * k2[2],
            r12 + h * k2[3], r13 + h * k2[4], r23 + h * k2[5], a, aconj,
        )
        k4 = rhs(
            n1 + dt * k3[0], n2 + dt * k3[1], n3 + dt * k3[2],
            r12 + dt * k3[3], r13 + dt * k3[4], r23 + dt * k3[5], a, aconj,
        )
        w6 = dt / 6.0
        pops[:, :, 0] = n1 + w6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        pops[:, :, 1] = n2 + w6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        pops[:, :, 2] = n3 + w6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        cohs[:, :, 0] = r12 + w6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        cohs[:, :, 1] = r13 + w6 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        cohs[:, :, 2] = r23 + w6 * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])


if _HAVE_NUMBA:

    @njit(inline="always")
    def _rhs_scalar(n1, n2, n3, r12, r13, r23, a, b, e2, e3, g3, b1f, go, gs):
        ar13 = a * r13
        br23 = b * r23
        im_a = ar13.imag
        im_b = br23.imag
        dn1 = -2.0 * im_a + b1f * g3 * n3
        dn2 = -2.0 * im_b + (1.0 - b1f) * g3 * n3
        dn3 = 2.0 * (im_a + im_b) - g3 * n3
        dr12 = -1j * (np.conj(a) * np.conj(r23) - e2 * r12 - b * r13) - gs * r12
        dr13 = -1j * (np.conj(a) * (n3 - n1) - np.conj(b) * r12 - e3 * r13) - go * r13
        dr23 = (
            -1j * (np.conj(b) * (n3 - n2) + (e2 - e3) * r23 - np.conj(a) * np.conj(r12))
            - go * r23
        )
        return dn1, dn2, dn3, dr12, dr13, dr23

    @njit(parallel=True, cache=True)
    def _propagate_segment_numba(
        pops, cohs, weight, d_opt, d_spin, probe_in, omega_c, eta, dz, dt,
        gamma3, b1, gamma_opt, gamma_spin, out_field,
    ):
        n_z, n_cls = pops.shape[0], pops.shape[1]
        b = -0.5 * omega_c
        field = np.empty(n_z, dtype=np.complex128)
        h = 0.5 * dt
        w6 = dt / 6.0
        for k in range(probe_in.size):
            fz = probe_in[k]
            for z in range(n_z):
                field[z] = fz
                src = 0.0 + 0.0j
                for c in range(n_cls):
                    src += weight[c] * np.conj(cohs[z, c, 1])
                fz = fz + 1j * eta * dz * src
            out_field[k] = fz

            for z in prange(n_z):
                a = -0.5 * field[z]
                for c in range(n_cls):
                    e2 = -d_spin[c]
                    e3 = -d_opt[c]
                    n1 = pops[z, c, 0]
                    n2 = pops[z, c, 1]
                    n3 = pops[z, c, 2]
                    r12 = cohs[z, c, 0]
                    r13 = cohs[z, c, 1]
                    r23 = cohs[z, c, 2]
                    a1, a2, a3, c1, c2, c3 = _rhs_scalar(
                        n1, n2, n3, r12, r13, r23, a, b, e2, e3,
                        gamma3, b1, gamma_opt, gamma_spin,
                    )
                    b1_, b2_, b3_, d1, d2, d3 = _rhs_scalar(
                        n1 + h * a1, n2 + h * a2, n3 + h * a3,
                        r12 + h * c1, r13 + h * c2, r23 + h * c3,
                        a, b, e2, e3, gamma3, b1, gamma_opt, gamma_spin,
                    )
                    c1_, c2_, c3_, e1, e2_, e3_ = _rhs_scalar(
                        n1 + h * b1_, n2 + h * b2_, n3 + h * b3_,
                        r12 + h * d1, r13 + h * d2, r23 + h * d3,
                        a, b, e2, e3, gamma3, b1, gamma_opt, gamma_spin,
                    )
                    d1_, d2_, d3_, f1, f2, f3 = _rhs_scalar(
                        n1 + dt * c1_, n2 + dt * c2_, n3 + dt * c3_,
                        r12 + dt * e1, r13 + dt * e2_, r23 + dt * e3_,
                        a, b, e2, e3, gamma3, b1, gamma_opt, gamma_spin,
                    )
                    pops[z, c, 0] = n1 + w6 * (a1 + 2.0 * b1_ + 2.0 * c1_ + d1_)
                    pops[z, c, 1] = n2 + w6 * (a2 + 2.0 * b2_ + 2.0 * c2_ + d2_)
                    pops[z, c, 2] = n3 + w6 * (a3 + 2.0 * b3_ + 2.0 * c3_ + d3_)
                    cohs[z, c, 0] = r12 + w6 * (c1 + 2.0 * d1 + 2.0 * e1 + f1)
                    cohs[z, c, 1] = r13 + w6 * (c2 + 2.0 * d2 + 2.0 * e2_ + f2)
                    cohs[z, c, 2] = r23 + w6 * (c3 + 2.0 * d3 + 2.0 * e3_ + f3)


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck toggled-phase Monte Carlo
# ---------------------------------------------------------------------------
#
# Each trajectory integrates phi = int s(t) x(t) dt with x the exact-
# discretization OU update x' = a_k x + b_k N(0,1) (trapezoid accumulation),
# starting from the stationary distribution x0 = sigma N(0,1). Trajectory t
# consumes the stream seeded with (seed + t): one draw for x0, one per step.


def ou_phase_mc(
    sigma: float,
    a_step: np.ndarray,
    b_step: np.ndarray,
    half_dt_sign: np.ndarray,
    record_after: np.ndarray,
    seed: int,
    n_traj: int,
) -> np.ndarray:
    """Per-trajectory exp(i*phi) at the recorded steps, shape (n_traj, n_rec)."""
    out = np.empty((n_traj, record_after.size), dtype=np.complex128)
    a_step = np.ascontiguousarray(a_step, dtype=np.float64)
    b_step = np.ascontiguousarray(b_step, dtype=np.float64)
    half_dt_sign = np.ascontiguousarray(half_dt_sign, dtype=np.float64)
    record_after = np.ascontiguousarray(record_after, dtype=np.int64)
    if USE_NUMBA:
        _ou_phase_mc_numba(
            float(sigma), a_step, b_step, half_dt_sign, record_after,
            np.int64(seed), np.int64(n_traj), out,
        )
    else:
        _ou_phase_mc_numpy(
            float(sigma), a_step, b_step, half_dt_sign, record_after,
            int(seed), int(n_traj), out,
        )
    return out


def _ou_phase_mc_numpy(
    sigma, a_step, b_step, half_dt_sign, record_after, seed, n_traj, out,
    chunk: int = 512,
):
    n_steps = a_step.size
    for lo in range(0, n_traj, chunk):
        hi = min(lo + chunk, n_traj)
        draws = np.empty((hi - lo, n_steps + 1))
        for t in range(lo, hi):
            traj_seed = (seed + t) & 0x7FFFFFFF
            draws[t - lo] = np.random.RandomState(traj_seed).standard_normal(n_steps + 1)
        x = sigma * draws[:, 0]
        phi = np.zeros(hi - lo)
        rec = 0
        for k in range(n_steps):
            xn = a_step[k] * x + b_step[k] * draws[:, k + 1]
            phi += half_dt_sign[k] * (x + xn)
            x = xn
            while rec < record_after.size and record_after[rec] == k:
                out[lo:hi, rec] = np.exp(1j * phi)
                rec += 1


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _ou_phase_mc_numba(
        sigma, a_step, b_step, half_dt_sign, record_after, seed, n_traj, out
    ):
        n_steps = a_step.size
        n_rec = record_after.size
        for t in prange(n_traj):
            np.random.seed((seed + t) & 0x7FFFFFFF)
            x = sigma * np.random.standard_normal()
            phi = 0.0
            rec = 0
            for k in range(n_steps):
                xn = a_step[k] * x + b_step[k] * np.random.standard_normal()
                phi += half_dt_sign[k] * (x + xn)
                x = xn
                while rec < n_rec and record_after[rec] == k:
                    out[t, rec] = complex(np.cos(phi), np.sin(phi))
                    rec += 1
