"""Wasserstein-2 machinery on (torus x velocity) phase space.

The metric is the product of the per-axis geodesic torus distance on
positions and the Euclidean distance on velocities.  The exact solver is a
Jonker-Volgenant style optimal assignment for equal-size uniform-weight
clouds and a small LP (HiGHS) otherwise; the sliced estimator combines a
deterministic per-axis circular rule for the periodic coordinates with
random orthonormal frames on the velocity factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .errors import ValidationError
from .spectral import SpectralField, gradient, l2_norm, mean, padded_grid_size, solve_poisson

TWO_PI = 2.0 * np.pi
N_EXACT_DEFAULT = 2048
N_LP_DEFAULT = 512


def torus_wrap(delta: np.ndarray) -> np.ndarray:
    """Signed geodesic representative of a coordinate difference, in (-pi, pi]."""
    return delta - TWO_PI * np.round(delta / TWO_PI)


def torus_distance_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared geodesic distance on the torus, summed over axes."""
    return (torus_wrap(np.asarray(x) - np.asarray(y)) ** 2).sum(axis=-1)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted samples on torus x R^d; xi=None means a position-only measure."""

    x: np.ndarray
    xi: np.ndarray | None
    weights: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != x.shape[0]:
            raise ValidationError("weights must be one per sample")
        if (w < 0).any():
            raise ValidationError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1 (got {w.sum()})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weights", w)
        if self.xi is not None:
            xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
            if xi.shape[0] != x.shape[0]:
                raise ValidationError("xi must have one row per sample")
            object.__setattr__(self, "xi", xi)

    @classmethod
    def uniform(cls, x, xi=None) -> "EmpiricalMeasure":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        return cls(x, xi, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.x.shape[0]

    def is_uniform(self) -> bool:
        return np.allclose(self.weights, 1.0 / self.size, rtol=0, atol=1e-12 / self.size * self.size)


def cost_matrix_sq(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
    """Pairwise squared product-metric distances, shape (len(mu), len(nu))."""
    if mu.x.shape[1] != nu.x.shape[1]:
        raise ValidationError("position dimensions differ")
    if (mu.xi is None) != (nu.xi is None):
        raise ValidationError("one measure has velocities, the other does not")
    n, m = mu.size, nu.size
    d = np.zeros((n, m))
    for a in range(mu.x.shape[1]):
        # inputs live in [0, 2pi): min(|dx|, 2pi - |dx|) avoids the round call
        diff = np.abs((mu.x[:, a] % TWO_PI)[:, None] - (nu.x[:, a] % TWO_PI)[None, :])
        np.minimum(diff, TWO_PI - diff, out=diff)
        d += diff * diff
    if mu.xi is not None:
        if mu.xi.shape[1] != nu.xi.shape[1]:
            raise ValidationError("velocity dimensions differ")
        for a in range(mu.xi.shape[1]):
            diff = mu.xi[:, a, None] - nu.xi[None, :, a]
            d += diff * diff
    return d


def w2_exact(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    n_exact: int = N_EXACT_DEFAULT,
    n_lp: int = N_LP_DEFAULT,
) -> float:
    """Exact W2 between empirical measures.

    Equal-size uniform clouds route to the optimal-assignment solver (up to
    n_exact points); general weights go through a transportation LP (up to
    n_lp points each).  Tie-breaking is deterministic for a given input.
    """
    uniform_case = mu.is_uniform() and nu.is_uniform() and mu.size == nu.size
    if uniform_case:
        if mu.size > n_exact:
            raise ValidationError(f"assignment path limited to {n_exact} points (got {mu.size})")
        cost = cost_matrix_sq(mu, nu)
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(cost[rows, cols].mean()))
    if mu.size > n_lp or nu.size > n_lp:
        raise ValidationError(
            f"general-weight LP path limited to {n_lp} points per side (got {mu.size}, {nu.size})"
        )
    cost = cost_matrix_sq(mu, nu)
    n, m = cost.shape
    # transportation polytope: row marginals mu.weights, column marginals nu.weights
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        a_eq.append(row)
        b_eq.append(mu.weights[i])
    for j in range(m - 1):  # drop one redundant constraint
        col = np.zeros(n * m)
        col[j::m] = 1.0
        a_eq.append(col)
        b_eq.append(nu.weights[j])
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(np.sqrt(max(res.fun, 0.0)))


def w2_exact_brute(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Factorial-time oracle over all permutations (tests only, N <= 9)."""
    from itertools import permutations

    if not (mu.is_uniform() and nu.is_uniform() and mu.size == nu.size):
        raise ValidationError("brute-force oracle needs equal-size uniform clouds")
    cost = cost_matrix_sq(mu, nu)
    n = mu.size
    idx = np.arange(n)
    best = np.inf
    for perm in permutations(range(n)):
        best = min(best, cost[idx, list(perm)].sum())
    return float(np.sqrt(best / n))


# ----------------------------------------------------------------------
# circular 1-D optimal transport (uniform equal-size clouds)
# ----------------------------------------------------------------------

def circular_w2_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Squared W2 between uniform empirical measures on the circle [0, 2pi).

    The optimal assignment between cyclically sorted sequences is one of the
    n cyclic shifts; each candidate pairs by geodesic displacement.
    """
    a = np.sort(np.asarray(a, dtype=float) % TWO_PI)
    b = np.sort(np.asarray(b, dtype=float) % TWO_PI)
    n = a.size
    if b.size != n:
        raise ValidationError("circular rule needs equal-size clouds")
    bb = np.concatenate([b, b])
    windows = np.lib.stride_tricks.sliding_window_view(bb, n)[:n]  # row k: b shifted by k
    diff = torus_wrap(a[None, :] - windows)
    return float((diff ** 2).mean(axis=1).min())


def circular_w2_sq_brute(a: np.ndarray, b: np.ndarray) -> float:
    from itertools import permutations

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    best = np.inf
    for perm in permutations(range(n)):
        d = torus_wrap(a - b[list(perm)])
        best = min(best, float((d ** 2).mean()))
    return best


def _haar_directions(dim: int, n_dirs: int, rng: np.random.Generator) -> np.ndarray:
    """n_dirs unit vectors drawn as rows of Haar-random orthonormal frames.

    Full frames make the estimator exact for pure translations whenever
    n_dirs is a multiple of dim.
    """
    frames = []
    remaining = n_dirs
    while remaining > 0:
        g = rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        frames.append(q.T[: min(dim, remaining)])
        remaining -= dim
    return np.concatenate(frames, axis=0)[:n_dirs]


def w2_sliced(mu: EmpiricalMeasure, nu: EmpiricalMeasure, n_proj: int, seed: int) -> float:
    """Sliced estimator of the product-metric W2 (not the exact distance).

    Velocity factor: root-mean of 1-D squared W2 over n_proj random
    directions (Haar frames), scaled by the velocity dimension so pure
    translations are recovered exactly.  Periodic factor: the circular 1-D
    rule applied per axis (the axis slices are the projections that remain
    circles), which keeps the estimate invariant under common shifts.
    """
    if n_proj < 1:
        raise ValidationError("n_proj must be at least 1")
    if not (mu.is_uniform() and nu.is_uniform() and mu.size == nu.size):
        raise ValidationError("sliced estimator needs equal-size uniform clouds")
    total = 0.0
    for a in range(mu.x.shape[1]):
        total += circular_w2_sq(mu.x[:, a], nu.x[:, a])
    if mu.xi is not None:
        dv = mu.xi.shape[1]
        rng = np.random.default_rng(seed)
        dirs = _haar_directions(dv, n_proj, rng)
        p1 = np.sort(mu.xi @ dirs.T, axis=0)
        p2 = np.sort(nu.xi @ dirs.T, axis=0)
        total += dv * ((p1 - p2) ** 2).mean()
    return float(np.sqrt(total))


# ----------------------------------------------------------------------
# the coupling functional and its bound
# ----------------------------------------------------------------------

def coupling_Q(cloud) -> float:
    """Half the weighted mean squared phase-space gap between the paired flows."""
    dx2 = torus_distance_sq(cloud.x_vp, cloud.x_vm)
    dxi2 = ((cloud.xi_vp - cloud.xi_vm) ** 2).sum(axis=-1)
    return float(0.5 * (cloud.weights * (dx2 + dxi2)).sum())


def pairing_cost_sq(cloud) -> float:
    """Transport cost of the index pairing itself; an upper bound for W2^2."""
    return 2.0 * coupling_Q(cloud)


# ----------------------------------------------------------------------
# density sampling and the H^-1 vs W2 inequality
# ----------------------------------------------------------------------

def rejection_sample_positions(
    rho: SpectralField,
    n: int,
    rng: np.random.Generator,
    efficiency_floor: float = 1e-3,
) -> np.ndarray:
    """Draw n positions from a probability density on the torus.

    Uniform proposals accepted against sup_grid rho; aborts if the observed
    acceptance rate collapses below efficiency_floor.
    """
    if not rho.is_scalar:
        raise ValidationError("sampling expects a scalar density")
    dim = rho.dim
    sup = rho.to_grid().max() * (1.0 + 1e-9)
    if sup <= 0:
        raise ValidationError("density has non-positive supremum")
    out = np.empty((n, dim))
    filled = 0
    proposed = 0
    while filled < n:
        batch = max(1024, int((n - filled) * sup * 1.3))
        pts = rng.uniform(0.0, TWO_PI, (batch, dim))
        vals = rho.evaluate_at(pts)[:, 0]
        accept = rng.uniform(0.0, sup, batch) < vals
        take = min(accept.sum(), n - filled)
        out[filled : filled + take] = pts[accept][:take]
        filled += take
        proposed += batch
        if proposed > 10_000 and filled / proposed < efficiency_floor:
            raise ValidationError(
                f"rejection sampling efficiency {filled / proposed:.2e} below {efficiency_floor}"
            )
    return out


def loeper_check(
    rho1: SpectralField,
    rho2: SpectralField,
    n_samples: int,
    seed: int,
    slack: float = 0.10,
) -> tuple[float, float, bool]:
    """Monte-Carlo check of ||grad psi1 - grad psi2||_L2 <= max ||rho_i||_inf^(1/2) W2(rho1, rho2).

    The left side is exact (Poisson solve + Parseval); W2 is estimated by
    exact assignment between n_samples draws from each density, and the
    stated slack covers the sampling error.  Returns (lhs, rhs, pass).
    """
    n_grid = padded_grid_size(rho1.cutoff)
    g1, g2 = rho1.to_grid(n_grid), rho2.to_grid(n_grid)
    if g1.min() <= 0 or g2.min() <= 0:
        raise ValidationError("densities must be positive for the inequality check")
    psi1, psi2 = solve_poisson(rho1), solve_poisson(rho2)
    lhs = l2_norm(gradient(psi1) - gradient(psi2))
    rng = np.random.default_rng(seed)
    x1 = rejection_sample_positions(rho1, n_samples, rng)
    x2 = rejection_sample_positions(rho2, n_samples, rng)
    w2 = w2_exact(EmpiricalMeasure.uniform(x1), EmpiricalMeasure.uniform(x2), n_exact=max(n_samples, N_EXACT_DEFAULT))
    rhs = float(np.sqrt(max(g1.max(), g2.max())) * w2)
    return lhs, rhs, bool(lhs <= rhs * (1.0 + slack))
