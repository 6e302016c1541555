"""Coulomb-gauge electromagnetic state and the oscillatory wave integrator.

The vector potential solves  eps^2 d_tt A - Lap A = eps P(j)  per Fourier
mode, an oscillator of frequency |k|/eps.  Steps advance (A_hat, eps*dA_hat)
by the exact rotation of that oscillator composed with a
variation-of-constants source term, so the homogeneous dynamics is exact for
any dt.  The k=0 mode has no restoring force: d/dt <eps dA/dt> = <j>, while
<A> itself is pinned to zero (a pure gauge choice; no observable reads it).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .spectral import (
    SpectralField,
    curl,
    divergence,
    gradient,
    l2_norm,
    leray_project,
    mean,
    mode_norms,
    solve_poisson,
)


@lru_cache(maxsize=32)
def _wave_knorm(dim: int, cutoff: int) -> np.ndarray:
    """|k| per mode with the zero mode masked to 1 (callers mask separately)."""
    kn = mode_norms(dim, cutoff).copy()
    kn[kn == 0] = 1.0
    kn.flags.writeable = False
    return kn


@lru_cache(maxsize=32)
def _center_mask(dim: int, cutoff: int) -> np.ndarray:
    m = np.zeros((2 * cutoff + 1,) * dim, dtype=bool)
    m[(cutoff,) * dim] = True
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class EMState:
    """Value-type electromagnetic state (phi, A, eps*dA/dt) in Coulomb gauge.

    A is divergence-free with zero mean; the k=0 momentum of eps*dA/dt lives
    in eps_adot's zero mode and is exposed as mean_eps_adot.  mean_b0 carries
    the conserved spatial mean of B.
    """

    eps: float
    phi: SpectralField
    a: SpectralField
    eps_adot: SpectralField
    mean_b0: np.ndarray
    mean_eps_adot0: np.ndarray

    @property
    def dim(self) -> int:
        return self.a.dim

    @property
    def cutoff(self) -> int:
        return self.a.cutoff

    @property
    def mean_eps_adot(self) -> np.ndarray:
        return mean(self.eps_adot)


def init_em_state(
    rho0: SpectralField,
    j0_mean: np.ndarray,
    e0: SpectralField,
    b0: SpectralField,
    eps: float,
    tol: float = 1e-9,
) -> EMState:
    """Build the potential-formulation state from normalized field data.

    Validates the normalization conditions (Gauss constraint, solenoidal B,
    zero-mean E and current), then sets phi from the Poisson equation, A from
    the vector-potential reconstruction of B, and eps*dA/dt = -(E + grad phi),
    which is the transverse part of -E (divergence-free and mean-zero once
    the preconditions hold, and the unique choice reproducing E exactly from
    E = -grad phi - eps dA/dt).
    """
    if not (0.0 < eps <= 1.0):
        raise ValidationError("eps must lie in (0, 1]")
    scale = max(np.abs(e0.coeffs).max(), np.abs(rho0.coeffs).max(), 1.0)
    gauss = divergence(e0).coeffs - (rho0.coeffs - SpectralField.constant(rho0.dim, rho0.cutoff, 1.0).coeffs)
    if np.abs(gauss).max() > tol * scale:
        raise ValidationError(
            f"Gauss constraint div E0 = rho0 - 1 violated (residual {np.abs(gauss).max():.3e})"
        )
    if b0.dim == 3 and b0.components == 3:
        divb = np.abs(divergence(b0).coeffs).max()
        if divb > tol * max(np.abs(b0.coeffs).max(), 1.0):
            raise ValidationError(f"div B0 = 0 violated (residual {divb:.3e})")
    if np.abs(mean(e0)).max() > tol:
        raise ValidationError(f"mean of E0 must vanish (got {mean(e0)})")
    j0_mean = np.asarray(j0_mean, dtype=float)
    if np.abs(j0_mean).max() > tol:
        raise ValidationError(f"mean initial current must vanish (got {j0_mean})")

    phi = solve_poisson(rho0)
    a = biot_from_b(b0)
    eps_adot = -1.0 * (e0 + gradient(phi))
    return EMState(
        eps=eps,
        phi=phi,
        a=a,
        eps_adot=eps_adot,
        mean_b0=mean(b0),
        mean_eps_adot0=mean(eps_adot),
    )


def biot_from_b(b0: SpectralField) -> SpectralField:
    from .spectral import biot_savart

    return biot_savart(b0)


def wave_step(state: EMState, source_j: SpectralField, dt: float) -> EMState:
    """Advance (A, eps*dA/dt) by dt with the source frozen over the step.

    Exact for the homogeneous dynamics and for constant sources; order 2 in a
    time-varying source when the caller supplies the midpoint value.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    s = leray_project(source_j).coeffs
    kn = _wave_knorm(state.dim, state.cutoff)
    mask0 = _center_mask(state.dim, state.cutoff)
    theta = kn / state.eps * dt
    c, sn = np.cos(theta), np.sin(theta)
    sp = state.eps * s / kn ** 2  # particular solution of the frozen-source oscillator

    a, w = state.a.coeffs, state.eps_adot.coeffs
    a_new = c * a + sn * w / kn + sp * (1.0 - c)
    w_new = -kn * sn * a + c * w + sn * kn * sp
    # k=0: no restoring force; d/dt <eps dA/dt> = <j> and <A> stays pinned
    a_new[:, mask0] = a[:, mask0]
    w_new[:, mask0] = w[:, mask0] + dt * s[:, mask0]
    return replace(
        state,
        a=SpectralField(state.dim, state.cutoff, a_new),
        eps_adot=SpectralField(state.dim, state.cutoff, w_new),
    )


def assemble_e(state: EMState) -> SpectralField:
    """E = -grad phi - eps dA/dt, including the k=0 momentum."""
    return -1.0 * gradient(state.phi) - state.eps_adot


def assemble_b(state: EMState) -> SpectralField:
    """B = curl A + <B0>; a scalar (planar curl) for d=2, a vector for d=3."""
    if state.dim == 1:
        raise ValidationError("no magnetic field in one dimension")
    cb = curl(state.a)
    return cb + SpectralField.constant(state.dim, state.cutoff, state.mean_b0)


def field_energy(state: EMState) -> float:
    """(1/2)(||E||_L2^2 + ||B||_L2^2) by Parseval over the cutoff box."""
    e = assemble_e(state)
    b = assemble_b(state)
    return 0.5 * (l2_norm(e) ** 2 + l2_norm(b) ** 2)


def mean_momentum_ledger(state: EMState, integrated_mean_j: np.ndarray) -> float:
    """Residual of <eps dA/dt>(t) = int_0^t <j> ds + <eps dA/dt>(0)."""
    resid = state.mean_eps_adot - np.asarray(integrated_mean_j, dtype=float) - state.mean_eps_adot0
    return float(np.abs(resid).max())


def gauge_residuals(state: EMState) -> dict:
    """Coulomb-gauge health: relative mode-wise div A and |<A>|."""
    scale = max(np.abs(state.a.coeffs).max(), 1e-30)
    div_a = float(np.abs(divergence(state.a).coeffs).max() / scale)
    mean_a = float(np.abs(mean(state.a)).max())
    return {"div_a": div_a, "mean_a": mean_a}


def mode_oscillation_energy(state: EMState) -> np.ndarray:
    """Per-mode invariant |A_hat|^2 + |eps dA_hat|^2 / |k|^2 of the free dynamics."""
    kn = _wave_knorm(state.dim, state.cutoff)
    return (np.abs(state.a.coeffs) ** 2 + np.abs(state.eps_adot.coeffs) ** 2 / kn ** 2).sum(axis=0)
