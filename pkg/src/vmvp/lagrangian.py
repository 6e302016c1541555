"""Characteristic flows of both systems launched from shared initial samples.

A cloud carries one set of initial phase-space samples and two trajectory
families: the electrostatic flow (Xdot = Xi, Xidot = -grad phi(X)) and the
relativistic flow (Xdot = v(Xi), Xidot = E + eps v x B).  The index pairing
between the two families is never reshuffled; it realizes the coupling whose
mean squared gap the transport module turns into a Wasserstein bound.

Forces are evaluated by exact trigonometric summation at particle positions
(no grid interpolation).  Steppers take either a single frozen field or the
four stage fields returned by the fluid step, in which case the combined
fluid+particle update is one classical 4-stage step of the joint system
(particles are passive and do not feed back currents).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .multifluid import PhaseEnsemble
from .spectral import SpectralField, gradient, stack
from .transport import TWO_PI, rejection_sample_positions, torus_distance_sq

_RK4_NODES = (0.0, 0.5, 0.5, 1.0)
_RK4_WEIGHTS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted samples with paired trajectories for the two flows."""

    x0: np.ndarray
    xi0: np.ndarray
    weights: np.ndarray
    phase_idx: np.ndarray
    x_vp: np.ndarray
    xi_vp: np.ndarray
    x_vm: np.ndarray
    xi_vm: np.ndarray
    seed: int
    t: float = 0.0

    @property
    def size(self) -> int:
        return self.x0.shape[0]

    @property
    def dim(self) -> int:
        return self.x0.shape[1]


def sample_cloud(ens0: PhaseEnsemble, n: int, seed: int) -> ParticleCloud:
    """Draw n samples from the ensemble's phase-space measure at t = 0.

    Phase labels are drawn proportionally to mu_theta <rho_theta>, positions
    by rejection against sup_grid rho_theta, and momenta are read off the
    phase's momentum field at the accepted positions.  Deterministic for a
    given seed.
    """
    rng = np.random.default_rng(seed)
    masses = np.array([ph.mu for ph in ens0.phases]) * ens0.phase_masses()
    probs = masses / masses.sum()
    labels = rng.choice(len(ens0.phases), size=n, p=probs)
    x = np.empty((n, ens0.dim))
    xi = np.empty((n, ens0.dim))
    for p, ph in enumerate(ens0.phases):
        idx = np.flatnonzero(labels == p)
        if idx.size == 0:
            continue
        pts = rejection_sample_positions(ph.rho, idx.size, rng)
        x[idx] = pts
        xi[idx] = ph.xi.evaluate_at(pts)
    w = np.full(n, 1.0 / n)
    return ParticleCloud(
        x0=x, xi0=xi, weights=w, phase_idx=labels,
        x_vp=x.copy(), xi_vp=xi.copy(), x_vm=x.copy(), xi_vm=xi.copy(),
        seed=seed, t=0.0,
    )


def _as_stages(field_or_stages, n_stages: int = 4):
    if isinstance(field_or_stages, SpectralField) or field_or_stages is None:
        return (field_or_stages,) * n_stages
    seq = tuple(field_or_stages)
    if len(seq) != n_stages:
        raise ValidationError(f"expected {n_stages} stage fields, got {len(seq)}")
    return seq


def _relativistic_v(xi: np.ndarray, eps: float) -> np.ndarray:
    if eps == 0:
        return xi
    return xi / np.sqrt(1.0 + eps ** 2 * (xi ** 2).sum(axis=1, keepdims=True))


def flow_vp_step(cloud: ParticleCloud, phi, dt: float) -> ParticleCloud:
    """Advance the electrostatic trajectories by one 4-stage step.

    phi is a scalar potential field (frozen over the step) or the four stage
    potentials/forces from the fluid step.  A sequence may contain scalar
    fields (potentials) or d-component fields (already-assembled -grad phi).
    """
    stages = _as_stages(phi)
    forces = []
    for f in stages:
        if f is None:
            forces.append(None)
        elif f.is_scalar:
            forces.append(-1.0 * gradient(f))
        else:
            forces.append(f)
    x, xi = cloud.x_vp, cloud.xi_vp
    kx = [None] * 4
    kxi = [None] * 4
    for i, ci in enumerate(_RK4_NODES):
        xs = x if i == 0 else x + dt * ci * kx[i - 1]
        xis = xi if i == 0 else xi + dt * ci * kxi[i - 1]
        kx[i] = xis
        kxi[i] = forces[i].evaluate_at(xs) if forces[i] is not None else np.zeros_like(xis)
    x_new = x + dt * sum(w * k for w, k in zip(_RK4_WEIGHTS, kx))
    xi_new = xi + dt * sum(w * k for w, k in zip(_RK4_WEIGHTS, kxi))
    return replace(cloud, x_vp=x_new % TWO_PI, xi_vp=xi_new, t=cloud.t + dt)


def flow_vm_step(cloud: ParticleCloud, e, b, eps: float, dt: float) -> ParticleCloud:
    """Advance the relativistic trajectories by one 4-stage step.

    e and b are fields frozen over the step or 4-sequences of stage fields
    (b entries may be None when there is no magnetic field).  The magnetic
    term uses the planar form eps*(v2 B, -v1 B) in d=2 and the full cross
    product in d=3; |v| <= 1/eps holds pointwise by construction.
    """
    e_stages = _as_stages(e)
    b_stages = _as_stages(b)
    x, xi = cloud.x_vm, cloud.xi_vm
    d = cloud.dim
    kx = [None] * 4
    kxi = [None] * 4
    for i in range(4):
        ci = _RK4_NODES[i]
        xs = x if i == 0 else x + dt * ci * kx[i - 1]
        xis = xi if i == 0 else xi + dt * ci * kxi[i - 1]
        v = _relativistic_v(xis, eps)
        kx[i] = v
        e_f, b_f = e_stages[i], b_stages[i]
        if e_f is None:
            force = np.zeros_like(xis)
            vals_b = None
        elif b_f is not None and eps > 0:
            bundle = stack([e_f, b_f]).evaluate_at(xs)
            force = bundle[:, :d]
            vals_b = bundle[:, d:]
        else:
            force = e_f.evaluate_at(xs)
            vals_b = None
        if vals_b is not None:
            if d == 2:
                force = force + eps * np.column_stack([v[:, 1] * vals_b[:, 0], -v[:, 0] * vals_b[:, 0]])
            elif d == 3:
                force = force + eps * np.cross(v, vals_b)
            else:
                raise ValidationError("magnetic force needs d in {2,3}")
        kxi[i] = force
    x_new = x + dt * sum(w * k for w, k in zip(_RK4_WEIGHTS, kx))
    xi_new = xi + dt * sum(w * k for w, k in zip(_RK4_WEIGHTS, kxi))
    return replace(cloud, x_vm=x_new % TWO_PI, xi_vm=xi_new)


@dataclass(frozen=True)
class ConsistencyReport:
    density_rms: float
    residual_max: float
    residual_rms: float


def consistency_check(cloud: ParticleCloud, ens: PhaseEnsemble, system: str = "vm", bins: int = 16) -> ConsistencyReport:
    """Compare particle statistics against the fluid state at the same time.

    density_rms: RMS over cells of (histogram density - exact cell-averaged
    fluid density).  residual_*: per-sample monokinetic residual
    |Xi - xi_theta(X)| for the phase each sample was drawn from.
    """
    if system == "vm":
        x, xi = cloud.x_vm, cloud.xi_vm
    elif system == "vp":
        x, xi = cloud.x_vp, cloud.xi_vp
    else:
        raise ValidationError("system must be 'vm' or 'vp'")
    d = cloud.dim

    rho = ens.rho_total()
    h = TWO_PI / bins
    # exact cell averages: damp each mode by prod_a sinc(k_a h / 2)
    from .spectral import mode_vectors

    k = mode_vectors(d, rho.cutoff)
    damp = np.ones(k.shape[1:])
    for a in range(d):
        damp = damp * np.sinc(k[a] * h / TWO_PI)
    cell_avg = SpectralField(d, rho.cutoff, rho.coeffs * damp)
    centers_1d = (np.arange(bins) + 0.5) * h
    mesh = np.meshgrid(*([centers_1d] * d), indexing="ij")
    centers = np.column_stack([m.ravel() for m in mesh])
    fluid = cell_avg.evaluate_at(centers)[:, 0]

    cells = np.floor(x / h).astype(int) % bins
    flat = np.ravel_multi_index(tuple(cells.T), (bins,) * d)
    counts = np.bincount(flat, weights=cloud.weights, minlength=bins ** d)
    emp = counts * bins ** d  # cell fraction -> density w.r.t. normalized measure
    density_rms = float(np.sqrt(((emp - fluid) ** 2).mean()))

    resid = np.empty(cloud.size)
    for p, ph in enumerate(ens.phases):
        idx = np.flatnonzero(cloud.phase_idx == p)
        if idx.size == 0:
            continue
        target = ph.xi.evaluate_at(x[idx])
        resid[idx] = np.sqrt(((xi[idx] - target) ** 2).sum(axis=1))
    return ConsistencyReport(
        density_rms=density_rms,
        residual_max=float(resid.max()),
        residual_rms=float(np.sqrt((resid ** 2).mean())),
    )


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------

_BLOCKS = ("x0", "xi0", "weights", "x_vp", "xi_vp", "x_vm", "xi_vm")


def save_cloud(cloud: ParticleCloud, path) -> None:
    """Columnar binary checkpoint: JSON header, then float64/int64 blocks."""
    header = {
        "format": "vmvp-cloud-v1",
        "n": cloud.size,
        "dim": cloud.dim,
        "seed": cloud.seed,
        "t": cloud.t,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for name in _BLOCKS:
            fh.write(np.ascontiguousarray(getattr(cloud, name), dtype=np.float64).tobytes())
        fh.write(np.ascontiguousarray(cloud.phase_idx, dtype=np.int64).tobytes())


def load_cloud(path) -> ParticleCloud:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "vmvp-cloud-v1":
            raise ValidationError(f"unrecognized cloud file format in {path}")
        n, d = header["n"], header["dim"]
        arrays = {}
        for name in _BLOCKS:
            cols = 1 if name == "weights" else d
            raw = np.frombuffer(fh.read(8 * n * cols), dtype=np.float64)
            arrays[name] = raw.copy() if cols == 1 else raw.reshape(n, d).copy()
        phase_idx = np.frombuffer(fh.read(8 * n), dtype=np.int64).copy()
    return ParticleCloud(seed=header["seed"], t=header["t"], phase_idx=phase_idx, **arrays)


def replay_coupling(paths) -> list[tuple[float, float]]:
    """Rebuild the (t, Q) series from saved cloud checkpoints."""
    from .transport import coupling_Q

    out = []
    for p in paths:
        cloud = load_cloud(p)
        out.append((cloud.t, coupling_Q(cloud)))
    return sorted(out)
