"""Complex polynomial roots and preimage fibers.

The d^n-point fiber expansion is the hot path of every experiment, so the
Aberth-Ehrlich simultaneous iteration is vectorized over batches of
same-degree polynomials.  Everything here is deterministic: starting points
come from a fixed eccentric circle (no RNG), and fiber levels are sorted
canonically before emission, so trees reproduce bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, SolverFailureError
from .ratmap import RationalMap, apply_arrays
from .sphere import (POINT_IDENTITY_TOL, SpherePoint, chordal_arrays,
                     from_affine, from_affine_arrays, normalize_arrays)

DEGREE_DROP_TOL = 1e-13       # leading coefficient below this (relative) -> root at infinity
CLUSTER_MERGE_SCALE = 1e-7    # multiplicity cluster radius = this * max(1, |root|)
RESIDUAL_TOL = 1e-8           # chordal(f(root), target) must beat this
MAX_SWEEPS = 500
DEFAULT_TREE_BUDGET = 2_000_000

_GOLDEN_FRAC = 0.3819660112501051  # irrational angle offset breaking root symmetry


@dataclass(frozen=True)
class RootSet:
    """Roots with multiplicities; total multiplicity equals the formal degree."""

    entries: tuple  # ((SpherePoint, multiplicity), ...)

    @property
    def total_multiplicity(self) -> int:
        return sum(m for _, m in self.entries)

    def affine_roots(self):
        """All roots as affine values (INF included), repeated by multiplicity."""
        out = []
        for pt, m in self.entries:
            out.extend([pt.to_affine()] * m)
        return out


def aberth_batch(coeffs: np.ndarray, tol: float = 5e-15,
                 max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """All roots of a batch of degree-k polynomials, shape (m, k).

    coeffs: (m, k+1) complex, highest degree first, leading column nonzero.
    Simultaneous Aberth-Ehrlich iteration followed by three Newton sweeps.
    Raises SolverFailureError when some row fails to settle.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    m, kp1 = coeffs.shape
    k = kp1 - 1
    if k < 1:
        return np.empty((m, 0), dtype=np.complex128)
    scale = np.max(np.abs(coeffs), axis=1, keepdims=True)
    c = coeffs / scale
    if np.any(np.abs(c[:, 0]) == 0.0):
        raise SolverFailureError("aberth_batch requires nonzero leading coefficients")
    if k == 1:
        return (-c[:, 1] / c[:, 0])[:, None]

    dc = c[:, :-1] * np.arange(k, 0, -1)

    # Cauchy bound initialization on a slightly eccentric circle; the golden
    # fraction offsets the angles so symmetric polynomials (z^k - w) do not
    # start on their own symmetry axes.
    radius = 1.0 + np.max(np.abs(c[:, 1:]) / np.abs(c[:, 0:1]), axis=1)
    ang = 2.0 * math.pi * (np.arange(k) + _GOLDEN_FRAC) / k
    ring = np.cos(ang) + 0.95j * np.sin(ang)
    z = 0.9 * radius[:, None] * ring[None, :]

    def horner(cc, zz):
        r = np.zeros_like(zz)
        for j in range(cc.shape[1]):
            r = r * zz + cc[:, j, None]
        return r

    active = np.ones(m, dtype=bool)
    for _ in range(max_sweeps):
        za = z[active]
        p = horner(c[active], za)
        dp = horner(dc[active], za)
        dp = np.where(np.abs(dp) < 1e-290, 1e-290, dp)
        w = p / dp
        diff = za[:, :, None] - za[:, None, :]
        np.einsum("ijj->ij", diff)[:] = np.inf  # exclude the diagonal (self) terms
        s = np.sum(1.0 / diff, axis=2)
        denom = 1.0 - w * s
        denom = np.where(np.abs(denom) < 1e-290, 1e-290, denom)
        delta = w / denom
        z[active] = za - delta
        done = np.all(np.abs(delta) <= tol * (1.0 + np.abs(za)), axis=1)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
    else:
        pass
    if active.any():
        bad = np.flatnonzero(active)
        res = np.abs(horner(c[bad], z[bad]))
        raise SolverFailureError(
            f"Aberth iteration failed on {bad.size} polynomial(s) after "
            f"{max_sweeps} sweeps", residuals=res)

    # Newton polish (no-op at multiple roots; the cluster pass handles those)
    for _ in range(3):
        p = horner(c, z)
        dp = horner(dc, z)
        step = np.where(np.abs(dp) > 1e-200, p / np.where(np.abs(dp) > 1e-200, dp, 1.0), 0.0)
        z = z - step
    return z


def _deflate(coeffs, root):
    """Synthetic division by (z - root)."""
    out = np.empty(len(coeffs) - 1, dtype=np.complex128)
    acc = coeffs[0]
    for i in range(len(coeffs) - 1):
        out[i] = acc
        acc = acc * root + coeffs[i + 1]
    return out


def _cluster_merge(zs, coeffs):
    """Single-linkage cluster of nearby roots -> (root, multiplicity) pairs.

    Clusters within 1e-7 * max(1, |root|) are merged; each multiple root is
    re-polished on the polynomial deflated by all the other roots (where the
    cluster is the only root left, Newton on the (m-1)-st derivative is exact).
    """
    k = len(zs)
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(k):
        for j in range(i + 1, k):
            tol = CLUSTER_MERGE_SCALE * max(1.0, abs(zs[i]), abs(zs[j]))
            if abs(zs[i] - zs[j]) <= tol:
                parent[find(i)] = find(j)

    groups = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)

    merged = []
    for idx in groups.values():
        mult = len(idx)
        center = complex(np.mean([zs[i] for i in idx]))
        if mult > 1:
            defl = coeffs
            for j in range(k):
                if j not in idx:
                    defl = _deflate(defl, zs[j])
            # defl ~ lead * (z - c)^mult; Newton on its (mult-1)-st derivative
            for _ in range(40):
                dcf = defl
                for _ in range(mult - 1):
                    deg = len(dcf) - 1
                    dcf = dcf[:-1] * np.arange(deg, 0, -1)
                val = np.polyval(dcf, center)
                dval = np.polyval(dcf[:-1] * np.arange(len(dcf) - 1, 0, -1), center) \
                    if len(dcf) > 1 else 0.0
                if abs(dval) < 1e-290:
                    break
                step = val / dval
                center -= step
                if abs(step) <= 1e-15 * (1.0 + abs(center)):
                    break
        merged.append((center, mult))
    merged.sort(key=lambda t: (t[0].real, t[0].imag))
    return merged


def roots(coeffs) -> RootSet:
    """All roots of an affine polynomial, infinity included via degree drop.

    coeffs: complex sequence, highest degree first.  Leading coefficients
    smaller than 1e-13 times the coefficient scale are treated as zero; each
    dropped degree contributes a root at infinity.
    """
    c = np.asarray(coeffs, dtype=np.complex128)
    if c.ndim != 1 or len(c) < 2:
        raise SolverFailureError("need at least a degree-1 coefficient vector")
    scale = np.max(np.abs(c))
    if scale == 0.0:
        raise SolverFailureError("zero polynomial has no well-defined root set")
    n_inf = 0
    while len(c) > 1 and abs(c[0]) <= DEGREE_DROP_TOL * scale:
        c = c[1:]
        n_inf += 1
    entries = []
    if n_inf:
        entries.append((SpherePoint(1.0, 0.0), n_inf))
    if len(c) > 1:
        zs = aberth_batch(c[None, :])[0]
        for z, mult in _cluster_merge(list(zs), c / scale):
            entries.append((from_affine(z), mult))
    return RootSet(tuple(entries))


# ---------------------------------------------------------------------------
# preimages
# ---------------------------------------------------------------------------

def _preimage_coeff_rows(f, w0, w1):
    # fiber equation w1 P(z) - w0 Q(z) = 0, formal degree d rows
    return w1[:, None] * f.p[None, :] - w0[:, None] * f.q[None, :]


def preimages_batch(f: RationalMap, w0, w1, validate: bool = True):
    """Full preimage fibers of unit-norm targets, as homogeneous arrays.

    Returns (r0, r1) of shape (m, d); multiple roots appear as repeated
    slots.  Rows are grouped by degree drop so targets equal to f(infinity)
    get their roots at infinity exactly.
    """
    w0 = np.atleast_1d(np.asarray(w0, dtype=np.complex128))
    w1 = np.atleast_1d(np.asarray(w1, dtype=np.complex128))
    m = w0.size
    d = f.degree
    rows = _preimage_coeff_rows(f, w0, w1)
    scale = np.max(np.abs(rows), axis=1)
    r0 = np.empty((m, d), dtype=np.complex128)
    r1 = np.empty((m, d), dtype=np.complex128)

    # leading run of near-zero columns per row = number of roots at infinity
    small = np.abs(rows) <= (DEGREE_DROP_TOL * scale)[:, None]
    drop = np.argmin(small, axis=1)  # first non-small column index
    drop[np.all(small, axis=1)] = d  # fully degenerate row (cannot happen for valid maps)

    for nd in np.unique(drop):
        sel = np.flatnonzero(drop == nd)
        k = d - nd
        if nd > 0:
            r0[sel, :nd] = 1.0
            r1[sel, :nd] = 0.0
        if k >= 1:
            sub = rows[np.ix_(sel, np.arange(nd, d + 1))]
            zs = aberth_batch(sub)
            if k > 1:
                # rows with nearly coincident roots carry genuine multiple
                # roots (fibers through critical values): cluster-merge them
                # so multiplicity shows up as exactly repeated slots
                gap = np.full(len(sel), np.inf)
                for i in range(k):
                    for j in range(i + 1, k):
                        dist = np.abs(zs[:, i] - zs[:, j])
                        rad = CLUSTER_MERGE_SCALE * np.maximum(
                            1.0, np.maximum(np.abs(zs[:, i]), np.abs(zs[:, j])))
                        gap = np.minimum(gap, dist / rad)
                for ridx in np.flatnonzero(gap < 1.0):
                    merged = _cluster_merge(list(zs[ridx]), sub[ridx])
                    zs[ridx] = np.array(
                        [z for z, m in merged for _ in range(m)])
            a0, a1 = from_affine_arrays(zs.ravel())
            r0[sel, nd:] = a0.reshape(len(sel), k)
            r1[sel, nd:] = a1.reshape(len(sel), k)
        elif k == 0:
            raise SolverFailureError("degenerate fiber: all coefficients vanished")

    if validate:
        f0, f1 = apply_arrays(f, r0.ravel(), r1.ravel())
        res = chordal_arrays(f0.reshape(m, d), f1.reshape(m, d), w0[:, None], w1[:, None])
        worst = float(np.max(res))
        if worst >= RESIDUAL_TOL:
            raise SolverFailureError(
                f"preimage residual {worst:.3e} exceeds {RESIDUAL_TOL:.1e}",
                residuals=res.max(axis=1))
    return r0, r1


def preimages(f: RationalMap, w: SpherePoint) -> RootSet:
    """The d preimages of w, with multiplicities from cluster merging."""
    rows = _preimage_coeff_rows(f, np.array([w.z0]), np.array([w.z1]))
    rs = roots(rows[0])
    if rs.total_multiplicity != f.degree:
        raise SolverFailureError(
            f"fiber multiplicity {rs.total_multiplicity} != degree {f.degree}")
    # residual check on the distinct representatives
    for pt, _ in rs.entries:
        img0, img1 = apply_arrays(f, np.array([pt.z0]), np.array([pt.z1]))
        res = float(chordal_arrays(img0, img1, np.array([w.z0]), np.array([w.z1]))[0])
        if res >= RESIDUAL_TOL:
            raise SolverFailureError(f"preimage residual {res:.3e} at {pt!r}")
    return rs


# ---------------------------------------------------------------------------
# breadth-first preimage trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeLevel:
    """One fiber f^{-k}(a): unit-norm coordinates, multiplicities, parent links."""

    z0: np.ndarray
    z1: np.ndarray
    mult: np.ndarray    # int64, sums to d^k
    parent: np.ndarray  # index into the previous (sorted) level, -1 at the root

    @property
    def size(self) -> int:
        return len(self.mult)


def _canonical_sort(z0, z1, mult, parent):
    re, im, is_inf = _affine_keys(z0, z1)
    order = np.lexsort((im, re, is_inf))
    return z0[order], z1[order], mult[order], parent[order]


def _affine_keys(z0, z1):
    is_inf = np.abs(z1) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(is_inf, 0.0, z0 / np.where(is_inf, 1.0, z1))
    return z.real, z.imag, is_inf


def _merge_tolerant(z0, z1, mult, parent):
    """Merge atoms within the point-identity tolerance (adjacent after sort)."""
    z0, z1, mult, parent = _canonical_sort(z0, z1, mult, parent)
    n = len(mult)
    keep = np.empty(n, dtype=np.int64)
    out_mult = np.zeros(n, dtype=np.int64)
    k = -1
    for i in range(n):
        if k >= 0:
            dist = abs(z0[keep[k]] * z1[i] - z1[keep[k]] * z0[i])
            if dist < POINT_IDENTITY_TOL:
                out_mult[k] += mult[i]
                continue
        k += 1
        keep[k] = i
        out_mult[k] = mult[i]
    keep = keep[:k + 1]
    return z0[keep], z1[keep], out_mult[:k + 1], parent[keep]


def preimage_tree(f: RationalMap, a: SpherePoint, n: int,
                  budget: int = DEFAULT_TREE_BUDGET):
    """Fibers f^{-k}(a) for k = 0..n, breadth-first.

    Each level's multiplicities sum to d^k exactly.  Levels are sorted
    lexicographically by affine coordinate, so the expansion is reproducible
    regardless of batch or thread layout.  Raises BudgetExceededError when
    d^n would exceed the point budget (use the sampled walker instead).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if f.degree ** n > budget:
        raise BudgetExceededError(
            f"d^n = {f.degree}^{n} exceeds budget {budget}; "
            "use sampled backward orbits for deep levels")
    levels = [TreeLevel(np.array([a.z0]), np.array([a.z1]),
                        np.array([1], dtype=np.int64),
                        np.array([-1], dtype=np.int64))]
    for _ in range(n):
        prev = levels[-1]
        r0, r1 = preimages_batch(f, prev.z0, prev.z1)
        d = f.degree
        m = prev.size
        z0 = r0.ravel()
        z1 = r1.ravel()
        mult = np.repeat(prev.mult, d)
        parent = np.repeat(np.arange(m, dtype=np.int64), d)
        z0, z1, mult, parent = _merge_tolerant(z0, z1, mult, parent)
        levels.append(TreeLevel(z0, z1, mult, parent))
    return levels
