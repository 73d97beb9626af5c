"""Discrete preimage measures, reference measures, and pairings <mu, phi>.

Pairings use fixed-order compensated summation (double-double on request or
when n log d is large) so results are bitwise reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ddfloat
from .errors import BackorbitError, PairingError, QuadratureError
from .polysolve import DEFAULT_TREE_BUDGET, preimage_tree, preimages_batch
from .ratmap import RationalMap, chebyshev_map, power_map
from .sphere import (POINT_IDENTITY_TOL, SpherePoint, from_affine_arrays,
                     normalize_arrays, unpack_points)

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point multiset with weights summing to 1."""

    z0: np.ndarray
    z1: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        z0, z1 = normalize_arrays(self.z0, self.z1)
        w = np.asarray(self.w, dtype=np.float64)
        if np.any(w <= 0.0):
            raise BackorbitError("measure weights must be positive")
        total = ddfloat.chunked_sum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise BackorbitError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "w", w)

    @property
    def size(self) -> int:
        return len(self.w)

    def atoms(self):
        """(SpherePoint, weight) pairs; intended for small measures."""
        return list(zip(unpack_points(self.z0, self.z1), self.w))

    @classmethod
    def dirac(cls, p: SpherePoint):
        return cls(np.array([p.z0]), np.array([p.z1]), np.array([1.0]))

    @classmethod
    def from_points(cls, points, weights=None):
        z0 = np.array([p.z0 for p in points])
        z1 = np.array([p.z1 for p in points])
        if weights is None:
            weights = np.full(len(points), 1.0 / len(points))
        return cls(z0, z1, np.asarray(weights, dtype=np.float64))


def preimage_measure_exact(f: RationalMap, a: SpherePoint, n: int,
                           budget: int = DEFAULT_TREE_BUDGET) -> DiscreteMeasure:
    """d^-n (f^n)* delta_a from the full fiber, weights = multiplicity / d^n."""
    levels = preimage_tree(f, a, n, budget=budget)
    lev = levels[n]
    return DiscreteMeasure(lev.z0, lev.z1, lev.mult / float(f.degree) ** n)


def measure_from_tree_level(f: RationalMap, level) -> DiscreteMeasure:
    total = int(level.mult.sum())
    return DiscreteMeasure(level.z0, level.z1, level.mult / float(total))


def preimage_measure_sampled(f: RationalMap, a: SpherePoint, n: int, K: int,
                             seed: int) -> DiscreteMeasure:
    """K backward random walks of length n; each step picks one of the d
    root slots uniformly, which weights preimages by multiplicity / d.

    The Philox counter generator keyed by the seed yields the whole (K, n)
    decision table up front, so results are independent of scheduling.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    choices = rng.integers(0, f.degree, size=(K, max(n, 1)), dtype=np.int64)
    z0 = np.full(K, a.z0, dtype=np.complex128)
    z1 = np.full(K, a.z1, dtype=np.complex128)
    for step in range(n):
        # walks sharing a current point share one solve
        key = np.stack([z0.view(np.float64).reshape(K, 2).T,
                        z1.view(np.float64).reshape(K, 2).T]).reshape(4, K)
        _, uniq_idx, inv = np.unique(key, axis=1, return_index=True,
                                     return_inverse=True)
        r0, r1 = preimages_batch(f, z0[uniq_idx], z1[uniq_idx])
        slot = choices[:, step]
        z0 = r0[inv, slot]
        z1 = r1[inv, slot]
    # merge identical endpoints; weights add
    m0, m1, w = _dedup_atoms(z0, z1, np.full(K, 1.0 / K))
    return DiscreteMeasure(m0, m1, w)


def _dedup_atoms(z0, z1, w):
    order = np.lexsort((z1.imag, z1.real, z0.imag, z0.real))
    z0, z1, w = z0[order], z1[order], w[order]
    keep = [0]
    for i in range(1, len(w)):
        j = keep[-1]
        if abs(z0[j] * z1[i] - z1[j] * z0[i]) < POINT_IDENTITY_TOL:
            w[j] += w[i]
        else:
            keep.append(i)
    keep = np.asarray(keep)
    return z0[keep], z1[keep], w[keep]


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------

def pair(mu: DiscreteMeasure, phi, use_dd: bool = False) -> float:
    """<mu, phi> = sum w_i phi(x_i), compensated fixed-order summation."""
    vals = phi.evaluate_arrays(mu.z0, mu.z1)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise PairingError(f"observable singular at atom index {bad}")
    return ddfloat.weighted_sum(mu.w, vals, use_dd=use_dd)


def pair_with_sigma(mu: DiscreteMeasure, phi):
    """Pairing plus the Monte-Carlo standard error for sampled measures.

    sigma_hat = sqrt(sum w_i (phi_i - mean)^2 * max(w_i)) treats weights as
    1/K multiples, which they are for the sampled walker.
    """
    vals = phi.evaluate_arrays(mu.z0, mu.z1)
    mean = ddfloat.weighted_sum(mu.w, vals)
    var = ddfloat.weighted_sum(mu.w, (vals - mean) ** 2)
    k_eff = 1.0 / np.max(mu.w)
    return mean, math.sqrt(max(var, 0.0) / k_eff)


# ---------------------------------------------------------------------------
# reference measures
# ---------------------------------------------------------------------------

def _gauss_nodes(n=20):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


_GL_X, _GL_W = _gauss_nodes()


def _adaptive_gl(g, lo, hi, tol, depth=0, whole=None):
    mid = 0.5 * (lo + hi)

    def gl(a, b):
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        return 0.5 * (b - a) * float(np.dot(_GL_W, g(x)))

    if whole is None:
        whole = gl(lo, hi)
    left = gl(lo, mid)
    right = gl(mid, hi)
    err = abs(left + right - whole)
    if err <= tol or (hi - lo) < 1e-13:
        if err > tol:
            raise QuadratureError(
                f"quadrature stalled at interval {hi - lo:.2e}", achieved=err)
        return left + right
    return (_adaptive_gl(g, lo, mid, tol / 2, depth + 1, left)
            + _adaptive_gl(g, mid, hi, tol / 2, depth + 1, right))


@dataclass(frozen=True)
class ReferenceMeasure:
    """mu_f handle: closed-form kinds integrate by quadrature, the
    deep-backward kind is Monte Carlo and refuses acceptance-grade fits."""

    kind: str                      # power-circle | chebyshev-arcsine | deep-backward
    map: RationalMap
    params: dict = field(default_factory=dict)
    cloud: DiscreteMeasure | None = None
    sigma_scale: float | None = None

    @property
    def acceptance_grade(self) -> bool:
        return self.kind in ("power-circle", "chebyshev-arcsine")


def reference_measure(f: RationalMap, kind: str, params=None) -> ReferenceMeasure:
    params = dict(params or {})
    if kind == "power-circle":
        if not np.allclose(f.p, power_map(f.degree).p) or \
           not np.allclose(f.q, power_map(f.degree).q):
            raise BackorbitError("power-circle reference requires the map z -> z^d")
        return ReferenceMeasure(kind, f, params)
    if kind == "chebyshev-arcsine":
        ref = chebyshev_map(f.degree)
        if not np.allclose(f.p, ref.p) or not np.allclose(f.q, ref.q):
            raise BackorbitError("arcsine reference requires the Chebyshev family")
        return ReferenceMeasure(kind, f, params)
    if kind == "deep-backward":
        b = params.get("b")
        n_ref = int(params.get("n", 30))
        K = int(params.get("K", 4096))
        seed = int(params.get("seed", 0))
        cloud = preimage_measure_sampled(f, b, n_ref, K, seed)
        return ReferenceMeasure(kind, f, params, cloud=cloud,
                                sigma_scale=1.0 / math.sqrt(K))
    raise BackorbitError(f"unknown reference kind {kind!r}")


def pair_reference(ref: ReferenceMeasure, phi, tol: float = 1e-12):
    """<mu_f, phi> by adaptive Gauss-Legendre for closed-form kinds; the
    deep-backward kind returns (estimate, sigma_hat) instead of a float."""
    if ref.kind == "power-circle":
        def g(theta):
            z0, z1 = from_affine_arrays(np.exp(1j * theta))
            return phi.evaluate_arrays(z0, z1)
        return _adaptive_gl(g, 0.0, 2.0 * math.pi, tol) / (2.0 * math.pi)
    if ref.kind == "chebyshev-arcsine":
        # x = 2 cos(theta) absorbs the inverse square-root edge singularity
        def g(theta):
            z0, z1 = from_affine_arrays(2.0 * np.cos(theta) + 0.0j)
            return phi.evaluate_arrays(z0, z1)
        return _adaptive_gl(g, 0.0, math.pi, tol) / math.pi
    if ref.kind == "deep-backward":
        return pair_with_sigma(ref.cloud, phi)
    raise BackorbitError(f"unknown reference kind {ref.kind!r}")
