"""Geometric probes: orbit log-distance sums, pullback diameters,
contraction at superattracting cycles, and inverse-branch distortion.

These quantify the machinery behind the rate bounds: trimmed orbit sums
should grow at most linearly, pullback components should shrink like
L^n (diam B)^rho, contraction near a superattracting cycle follows the
squaring law, and inverse branches on a fixed ball have bounded
derivative distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (SuperAttractingSet, CycleInfo, distance_to_sf,
                       inverse_branch_continue, super_attracting_set)
from .errors import BackorbitError, ContinuationFailureError
from .ratmap import (RationalMap, apply_arrays, critical_data, iterate,
                     iterate_arrays, spherical_derivative_arrays)
from .sphere import (SpherePoint, chordal, chordal_arrays, chordal_circle,
                     embed_r3, from_affine_arrays, normalize_arrays, unpack_points)

PSI_CAP = 50.0                 # -log d at an exact critical hit (~e^-50 chordal)
FALLBACK_INTERIOR_SAMPLES = 256
BOUNDARY_LIFT_SAMPLES = 64


# ---------------------------------------------------------------------------
# orbit log-distance sums
# ---------------------------------------------------------------------------

def psi(f: RationalMap, x: SpherePoint, variant: str = "psi_f",
        crit=None, c: SpherePoint | None = None) -> float:
    """-log distance to the chosen critical target, capped at PSI_CAP.

    variant 'psi_f' uses the non-periodic critical points (0 when there are
    none), 'psi_tilde' the full critical set, 'psi_c' a single point c.
    """
    if crit is None:
        crit = critical_data(f)
    if variant == "psi_c":
        targets = [c]
    elif variant == "psi_tilde":
        targets = [p for p, _ in crit.all_critical]
    elif variant == "psi_f":
        targets = list(crit.nonperiodic_critical)
        if not targets:
            return 0.0  # vacuous by convention; flagged by callers
    else:
        raise BackorbitError(f"unknown psi variant {variant!r}")
    d = min(chordal(x, t) for t in targets)
    if d <= 0.0:
        return PSI_CAP
    return min(-math.log(d), PSI_CAP)


@dataclass(frozen=True)
class DpuReport:
    x: SpherePoint
    n: int
    n_removed: int
    trimmed_sum: float
    q_hat: float
    removed_indices: tuple
    capped_hits: int          # orbit points that hit a critical point exactly
    vacuous: bool             # no non-periodic critical points at all


def dpu_trimmed_sum(f: RationalMap, x: SpherePoint, n: int, n_remove: int,
                    crit=None) -> DpuReport:
    """Orbit sum of psi_f with the n_remove largest terms removed.

    The largest-terms trimming is the strongest instantiation of "at most N
    terms removed": if the linear bound holds for it, it holds for any choice.
    """
    if n < 1:
        raise BackorbitError("n must be >= 1")
    if crit is None:
        crit = critical_data(f)
    targets = list(crit.nonperiodic_critical)
    if not targets:
        return DpuReport(x, n, n_remove, 0.0, 0.0, (), 0, True)
    t0 = np.array([t.z0 for t in targets])
    t1 = np.array([t.z1 for t in targets])
    z0 = np.array([x.z0])
    z1 = np.array([x.z1])
    vals = np.empty(n + 1)
    for i in range(n + 1):
        dist = float(np.min(chordal_arrays(z0[:, None], z1[:, None],
                                           t0[None, :], t1[None, :])))
        vals[i] = PSI_CAP if dist <= 0.0 else min(-math.log(dist), PSI_CAP)
        if i < n:
            z0, z1 = apply_arrays(f, z0, z1)
    capped = int(np.sum(vals >= PSI_CAP))
    removed = tuple(int(i) for i in np.argsort(vals)[::-1][:n_remove])
    keep = np.ones(n + 1, dtype=bool)
    keep[list(removed)] = False
    trimmed = float(np.sum(vals[keep]))
    return DpuReport(x, n, n_remove, trimmed, trimmed / n, removed, capped, False)


# ---------------------------------------------------------------------------
# pullback diameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiameterReport:
    x: SpherePoint
    n: int
    ball_center: SpherePoint
    ball_radius: float
    diam_v: float
    method: str               # 'boundary-lift' or 'cluster-fallback'
    exponent_observed: float
    dist_sf: float            # chordal distance of f^n(x) to the superattracting set


def _radial_path(center: SpherePoint, target: SpherePoint, max_step=0.008):
    steps = max(2, int(math.ceil(chordal(center, target) / max_step)) + 1)
    a = np.array([center.z0, center.z1])
    b = np.array([target.z0, target.z1])
    ip = np.vdot(a, b)
    if abs(ip) > 1e-15:
        b = b * (np.conj(ip) / abs(ip))
    ts = np.linspace(0.0, 1.0, steps)
    pts = []
    for t in ts:
        v = (1 - t) * a + t * b
        pts.append(SpherePoint(v[0], v[1]))
    return pts


def diameter_pullback(f: RationalMap, x: SpherePoint, n: int, radius: float,
                      sas: SuperAttractingSet | None = None,
                      budget: int = 2_000_000) -> DiameterReport:
    """Diameter of the component of f^{-n}(B) containing x, B the chordal
    ball of the given radius around f^n(x).

    Primary method lifts boundary points of B along radial paths (x is the
    lift of the center); if any continuation fails, the fallback clusters a
    dense fiber sampling and measures x's cluster.
    """
    center = iterate(f, x, n)
    if sas is None:
        sas = super_attracting_set(f)
    dist_sf = distance_to_sf(f, center, sas)
    b0, b1 = chordal_circle(center, radius, BOUNDARY_LIFT_SAMPLES)
    boundary = unpack_points(b0, b1)
    lifted = [x]
    method = "boundary-lift"
    try:
        for bp in boundary:
            path = _radial_path(center, bp)
            lifted.append(inverse_branch_continue(f, n, x, path))
    except ContinuationFailureError:
        method = "cluster-fallback"
        lifted = _cluster_component(f, x, n, center, radius, budget)
    l0 = np.array([p.z0 for p in lifted])
    l1 = np.array([p.z1 for p in lifted])
    diam = float(np.max(chordal_arrays(l0[:, None], l1[:, None],
                                       l0[None, :], l1[None, :])))
    expo = math.log(max(diam, 1e-300)) / math.log(radius) if radius < 1 else 0.0
    return DiameterReport(x, n, center, radius, diam, method, expo, dist_sf)


def _cluster_component(f, x, n, center, radius, budget):
    from scipy.spatial import cKDTree
    from .polysolve import preimages_batch
    if FALLBACK_INTERIOR_SAMPLES * f.degree ** n > budget:
        raise BackorbitError("cluster fallback exceeds budget")
    rng_like = np.linspace(0.05, 0.98, 16)
    pts0, pts1 = [], []
    for frac in rng_like:
        c0, c1 = chordal_circle(center, radius * frac, 16)
        pts0.append(c0)
        pts1.append(c1)
    s0 = np.concatenate(pts0)
    s1 = np.concatenate(pts1)
    cur0, cur1 = s0, s1
    for _ in range(n):
        r0, r1 = preimages_batch(f, cur0, cur1)
        cur0, cur1 = r0.ravel(), r1.ravel()
    cloud = embed_r3(cur0, cur1)
    tree = cKDTree(cloud)
    # local spacing near x's own lift cloud sets the linkage radius
    xe = embed_r3(np.array([x.z0]), np.array([x.z1]))[0]
    dists, _ = tree.query(xe, k=min(8, len(cur0)))
    spacing = float(np.median(np.atleast_1d(dists)[1:])) if len(cur0) > 1 else 0.0
    link = max(2.0 * spacing, 1e-9)
    pairs = tree.query_pairs(link, output_type="ndarray")
    parent = np.arange(len(cur0) + 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        parent[find(i)] = find(j)
    # attach x itself
    close = tree.query_ball_point(xe, link)
    xi = len(cur0)
    for j in close:
        parent[find(xi)] = find(j)
    comp = find(xi)
    members = [i for i in range(len(cur0)) if find(i) == comp]
    out = [x] + [SpherePoint(cur0[i], cur1[i]) for i in members]
    return out


# ---------------------------------------------------------------------------
# contraction at a superattracting cycle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BottcherFit:
    c: float
    l: float
    residual_rms: float
    n_points: int


def bottcher_contraction(f: RationalMap, cycle: CycleInfo, radius: float,
                         n_max: int = 8, n_balls: int = 10) -> BottcherFit:
    """Fit of the contraction law diam B <= C (diam f^n(B))^(l^-n).

    Measures forward diameters of seed balls inside the cycle neighborhood;
    l comes from the slope of log(-log diam f^n(B)) against n, C from the
    covering envelope.  Requires a super-attracting cycle.
    """
    if cycle.cls != "super-attracting":
        raise BackorbitError("contraction fit needs a super-attracting cycle")
    y = cycle.points[0]
    m = cycle.period
    ratios = []
    env = []
    for j in range(n_balls):
        r = radius * (0.3 + 0.7 * j / max(n_balls - 1, 1))
        b0, b1 = chordal_circle(y, r, 48)
        diam0 = float(np.max(chordal_arrays(b0[:, None], b1[:, None],
                                            b0[None, :], b1[None, :])))
        phis = {0: -math.log(diam0)}
        c0, c1 = b0, b1
        for n in range(1, n_max + 1):
            c0, c1 = apply_arrays(f, c0, c1)
            diam = float(np.max(chordal_arrays(c0[:, None], c1[:, None],
                                               c0[None, :], c1[None, :])))
            if diam < 1e-280 or diam >= 0.9:
                break
            phis[n] = -math.log(diam)
            env.append((math.log(diam0), n, math.log(diam)))
        # for phi_n ~ A l^n p_n + B (p cycle-periodic), stride-m difference
        # ratios D_{n+m}/D_n equal l^m exactly; this kills both the additive
        # offset and the early-n transient
        for n in sorted(phis):
            if n + 2 * m in phis and n + m in phis:
                d1 = phis[n + m] - phis[n]
                d2 = phis[n + 2 * m] - phis[n + m]
                if d1 > 0 and d2 > 0:
                    ratios.append((d2 / d1) ** (1.0 / m))
    if not ratios:
        raise BackorbitError("no usable contraction data at this radius")
    l_fit = float(np.median(ratios))
    # envelope constant: diam B <= C (diam f^n B)^(l^-n)
    cs = [x0 - (l_fit ** -n) * yn for x0, n, yn in env]
    resid = [math.log(s / l_fit) for s in ratios]
    return BottcherFit(float(np.exp(max(cs))), l_fit,
                       float(np.sqrt(np.mean(np.square(resid)))), len(env))


# ---------------------------------------------------------------------------
# inverse-branch distortion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KoebeReport:
    n: int
    radius: float
    lambda_hat: float
    n_samples: int


def koebe_ratio(f: RationalMap, center: SpherePoint, radius: float, n: int,
                base_lift: SpherePoint, samples: int = 24) -> KoebeReport:
    """Max/min ratio of |df^n| over a lifted branch of the ball B(center, r).

    base_lift must satisfy f^n(base_lift) = center; sample points of B are
    lifted by path continuation through the same branch.
    """
    if chordal(iterate(f, base_lift, n), center) > 1e-8:
        raise BackorbitError("base_lift is not an f^n-preimage of center")
    pts = [center]
    for frac in (0.5, 0.95):
        c0, c1 = chordal_circle(center, radius * frac, samples // 2)
        pts.extend(unpack_points(c0, c1))
    lifts = []
    for p in pts:
        path = _radial_path(center, p)
        lifts.append(inverse_branch_continue(f, n, base_lift, path))
    derivs = []
    for lp in lifts:
        z0, z1 = np.array([lp.z0]), np.array([lp.z1])
        total = 1.0
        for _ in range(n):
            total *= float(spherical_derivative_arrays(f, z0, z1)[0])
            z0, z1 = apply_arrays(f, z0, z1)
        derivs.append(total)
    lam = max(derivs) / max(min(derivs), 1e-300) if n > 0 else 1.0
    return KoebeReport(n, radius, float(lam), len(lifts))
