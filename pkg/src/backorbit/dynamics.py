"""Orbits, cycles, superattracting structure, and inverse-branch continuation.

Derivatives along orbits are assembled chart-to-chart (affine chart inside
the unit disk, inverted chart outside), so multipliers and Newton steps stay
finite through poles and at infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BackorbitError, ContinuationFailureError
from .ratmap import (RationalMap, apply, apply_arrays, critical_points,
                     iterate, iterate_arrays, spherical_derivative_arrays,
                     wronskian_affine)
from .sphere import (SpherePoint, chordal, chordal_arrays, chordal_circle,
                     from_affine, normalize_arrays)

CYCLE_TOL = 1e-9
PARABOLIC_Q_MAX = 64
PARABOLIC_ROOT_TOL = 1e-6
MULTIPLIER_UNIT_TOL = 1e-8
SUPER_ATTRACTING_TOL = 1e-8
DELTA_DYADIC_MIN_EXP = 12       # delta candidates 2^-1 .. 2^-12
DELTA_BOUNDARY_SAMPLES = 720
CRITICAL_ORBIT_STEPS = 2000
PATH_SPACING_MAX = 0.01
PATH_BISECTION_LEVELS = 10


# ---------------------------------------------------------------------------
# chart-aware scalar evaluation
# ---------------------------------------------------------------------------

AFFINE, INVERTED = 0, 1


def _chart_of(p: SpherePoint) -> int:
    return AFFINE if abs(p.z0) <= abs(p.z1) else INVERTED


def _coord(p: SpherePoint, chart: int) -> complex:
    return p.z0 / p.z1 if chart == AFFINE else p.z1 / p.z0


def _point_from_coord(zeta: complex, chart: int) -> SpherePoint:
    if chart == AFFINE:
        return SpherePoint(zeta, 1.0)
    return SpherePoint(1.0, zeta)


def _reversed_wronskian(f: RationalMap) -> np.ndarray:
    pr, qr = f.p[::-1], f.q[::-1]
    d = len(pr) - 1
    dpr = pr[:-1] * np.arange(d, 0, -1)
    dqr = qr[:-1] * np.arange(d, 0, -1)
    return np.convolve(dpr, qr) - np.convolve(pr, dqr)


def _step_with_derivative(f: RationalMap, p: SpherePoint):
    """One forward step: returns (f(p), chart_in, chart_out, derivative).

    The derivative is d(chart_out coord)/d(chart_in coord) at p; consecutive
    factors telescope, so products along closed orbits are chart-free.
    """
    cin = _chart_of(p)
    zeta = _coord(p, cin)
    if cin == AFFINE:
        pv = np.polyval(f.p, zeta)
        qv = np.polyval(f.q, zeta)
        wv = np.polyval(wronskian_affine(f), zeta)
    else:
        # at (z0, z1) = (1, zeta) the lift evaluates to polynomials in zeta
        # with reversed coefficient order
        pv = np.polyval(f.p[::-1], zeta)
        qv = np.polyval(f.q[::-1], zeta)
        wv = np.polyval(_reversed_wronskian(f), zeta)
    img = SpherePoint(pv, qv)
    cout = _chart_of(img)
    if cout == AFFINE:
        deriv = wv / (qv * qv)
    else:
        deriv = -wv / (pv * pv)
    return img, cin, cout, complex(deriv)


def _orbit_derivative(f: RationalMap, p: SpherePoint, n: int,
                      out_chart: int | None = None):
    """(f^n(p), composite chart-to-chart derivative, chart_in, chart_out)."""
    cur = p
    deriv = complex(1.0)
    cin_first = _chart_of(p)
    cout = cin_first
    for _ in range(n):
        cur, _, cout, d_step = _step_with_derivative(f, cur)
        deriv *= d_step
    if out_chart is not None and out_chart != cout:
        zeta = _coord(cur, cout)
        if zeta == 0:
            raise ZeroDivisionError("chart conversion at chart origin")
        deriv *= -1.0 / (zeta * zeta)
        cout = out_chart
    return cur, deriv, cin_first, cout


# ---------------------------------------------------------------------------
# cycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CycleInfo:
    points: tuple           # SpherePoints, length = period
    multiplier: complex
    cls: str                # classification label

    @property
    def period(self) -> int:
        return len(self.points)


def classify_multiplier(lam: complex) -> str:
    mag = abs(lam)
    if mag < SUPER_ATTRACTING_TOL:
        return "super-attracting"
    if mag < 1.0 - MULTIPLIER_UNIT_TOL:
        return "attracting"
    if abs(mag - 1.0) <= MULTIPLIER_UNIT_TOL:
        for q in range(1, PARABOLIC_Q_MAX + 1):
            if abs(lam ** q - 1.0) <= PARABOLIC_ROOT_TOL:
                return "parabolic"
        return "irrationally-indifferent"
    return "repelling"


def detect_cycle(f: RationalMap, x: SpherePoint, max_period: int,
                 tol: float = CYCLE_TOL):
    """Smallest-period cycle through x (within tol), Newton-refined, or None."""
    orbit = [x]
    cur = x
    period = None
    for m in range(1, max_period + 1):
        cur = apply(f, cur)
        if chordal(cur, x) < tol:
            period = m
            break
        orbit.append(cur)
    if period is None:
        return None

    # Newton refinement of the fixed point of f^period near x; skipped when
    # the multiplier is 1 (parabolic: the root of f^m(z) - z is multiple).
    refined = x
    for _ in range(30):
        chart = _chart_of(refined)
        zeta = _coord(refined, chart)
        try:
            end, deriv, _, _ = _orbit_derivative(f, refined, period,
                                                 out_chart=chart)
        except ZeroDivisionError:
            break
        resid = _coord(end, chart) - zeta
        denom = deriv - 1.0
        if abs(denom) < 1e-8 or not np.isfinite(abs(resid)):
            break
        step = resid / denom
        refined = _point_from_coord(zeta - step, chart)
        if abs(step) <= 1e-15 * (1.0 + abs(zeta)):
            break
    if chordal(iterate(f, refined, period), refined) > tol:
        refined = x  # refinement wandered; keep the detected point

    points = [refined]
    for _ in range(period - 1):
        points.append(apply(f, points[-1]))
    _, lam, _, _ = _orbit_derivative(f, refined, period,
                                     out_chart=_chart_of(refined))
    return CycleInfo(tuple(points), complex(lam), classify_multiplier(lam))


# ---------------------------------------------------------------------------
# superattracting set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuperAttractingSet:
    cycles: tuple            # CycleInfo, all super-attracting
    delta: float | None      # validated forward-invariant neighborhood radius
    contraction_l: float | None  # min over cycles of (local degree of f^m)^(1/m)

    @property
    def points(self):
        return [p for c in self.cycles for p in c.points]

    @property
    def is_empty(self) -> bool:
        return not self.cycles


def _same_cycle(c1: CycleInfo, c2: CycleInfo) -> bool:
    if c1.period != c2.period:
        return False
    return any(chordal(c1.points[0], p) < 1e-8 for p in c2.points)


def _cycle_local_degree(f: RationalMap, cyc: CycleInfo) -> int:
    crit = critical_points(f)
    deg = 1
    for pt in cyc.points:
        for cp, mult in crit:
            if chordal(cp, pt) < 1e-8:
                deg *= 1 + mult
                break
    return deg


def _forward_invariant(f, centers, delta) -> bool:
    c0, c1 = centers
    for i in range(len(c0)):
        b0, b1 = chordal_circle(SpherePoint(c0[i], c1[i]), delta,
                                DELTA_BOUNDARY_SAMPLES)
        i0, i1 = apply_arrays(f, b0, b1)
        dist = chordal_arrays(i0[:, None], i1[:, None], c0[None, :], c1[None, :])
        if not np.all(dist.min(axis=1) < delta):
            return False
    return True


def _contraction_consistent(f, cyc: CycleInfo, delta, l_cycle) -> bool:
    """Empirical squaring-law check: log(-log diam f^(m j)(B)) grows like
    j log(l') for a seed ball strictly inside the candidate neighborhood."""
    m = cyc.period
    y = cyc.points[0]
    b0, b1 = chordal_circle(y, delta / 8.0, 64)
    xs, ys = [], []
    for j in range(1, 11):
        b0, b1 = iterate_arrays(f, b0, b1, m)
        diam = float(np.max(chordal_arrays(b0[:, None], b1[:, None],
                                           b0[None, :], b1[None, :])))
        if diam < 1e-200 or diam > 0.5:
            break
        xs.append(j)
        ys.append(math.log(-math.log(diam)))
    if len(xs) < 3:
        return len(xs) >= 1  # contraction so fast we ran out of floats
    slope = np.polyfit(xs, ys, 1)[0]
    return abs(slope - m * math.log(l_cycle)) <= 0.35 * m * math.log(l_cycle)


def super_attracting_set(f: RationalMap) -> SuperAttractingSet:
    """Superattracting cycles (seeded from critical orbits), with a validated
    dyadic neighborhood radius and the minimal contraction exponent."""
    cycles = []
    for cp, _ in critical_points(f):
        tail = iterate(f, cp, CRITICAL_ORBIT_STEPS)
        info = detect_cycle(f, tail, PARABOLIC_Q_MAX)
        if info is not None and info.cls == "super-attracting":
            if not any(_same_cycle(info, c) for c in cycles):
                cycles.append(info)
    if not cycles:
        return SuperAttractingSet((), None, None)

    l_values = [(_cycle_local_degree(f, c)) ** (1.0 / c.period) for c in cycles]
    l_min = min(l_values)

    pts = [p for c in cycles for p in c.points]
    c0 = np.array([p.z0 for p in pts])
    c1 = np.array([p.z1 for p in pts])
    delta = None
    for k in range(1, DELTA_DYADIC_MIN_EXP + 1):
        cand = 2.0 ** (-k)
        if not _forward_invariant(f, (c0, c1), cand):
            continue
        if all(_contraction_consistent(f, c, cand, l_values[i])
               for i, c in enumerate(cycles)):
            delta = cand
            break
    return SuperAttractingSet(tuple(cycles), delta, l_min)


def distance_to_sf(f: RationalMap, a: SpherePoint,
                   sas: SuperAttractingSet | None = None) -> float:
    """Min chordal distance from a to the superattracting set; inf if empty."""
    if sas is None:
        sas = super_attracting_set(f)
    if sas.is_empty:
        return math.inf
    return min(chordal(a, p) for p in sas.points)


# ---------------------------------------------------------------------------
# exceptional set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExceptionalSet:
    points: tuple  # SpherePoints, at most 2


def _fixed_points(f: RationalMap):
    from .polysolve import roots
    # affine equation p(z) - z q(z) = 0, formal degree d+1
    co = np.concatenate([[0.0 + 0j], f.p]) - np.concatenate([f.q, [0.0 + 0j]])
    return [pt for pt, _ in roots(co).entries]


def exceptional_set(f: RationalMap) -> ExceptionalSet:
    """Totally invariant points: fixed points whose fiber is themselves with
    full multiplicity d."""
    from .polysolve import preimages
    out = []
    for y in _fixed_points(f):
        rs = preimages(f, y)
        if len(rs.entries) == 1 and rs.entries[0][1] == f.degree \
                and chordal(rs.entries[0][0], y) < 1e-8:
            out.append(y)
    if len(out) > 2:
        raise BackorbitError(
            "more than 2 exceptional points detected; solver artifact")
    return ExceptionalSet(tuple(out))


# ---------------------------------------------------------------------------
# postcritical heuristics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PostcriticalReport:
    geometrically_finite_evidence: bool
    postcritical_sample: tuple      # (z0 array, z1 array)
    per_critical_notes: tuple
    heuristic: bool = field(default=True)  # evidence, never a certificate


def postcritical_classify(f: RationalMap, depth: int = 2000) -> PostcriticalReport:
    """Iterate every critical point; evidence is positive when each orbit is
    eventually periodic (within tol) or converges to a detected cycle."""
    if depth > 10_000:
        raise ValueError("depth bound is 10^4")
    notes = []
    all_ok = True
    sample0, sample1 = [], []
    for cp, _ in critical_points(f):
        orbit = []
        cur = cp
        classified = None
        for _ in range(min(depth, CRITICAL_ORBIT_STEPS)):
            cur = apply(f, cur)
            orbit.append(cur)
            for prev in orbit[:-1]:
                if chordal(prev, cur) < CYCLE_TOL:
                    classified = "eventually periodic"
                    break
            if classified:
                break
        if classified is None:
            tail = orbit[-1]
            info = detect_cycle(f, tail, PARABOLIC_Q_MAX, tol=1e-6)
            if info is not None and info.cls in ("super-attracting", "attracting",
                                                 "parabolic"):
                classified = f"converges to {info.cls} cycle (period {info.period})"
        if classified is None:
            classified = "unresolved"
            all_ok = False
        notes.append(classified)
        for p in orbit[:depth]:
            if len(sample0) < depth:
                sample0.append(p.z0)
                sample1.append(p.z1)
    return PostcriticalReport(all_ok, (np.array(sample0), np.array(sample1)),
                              tuple(notes))


# ---------------------------------------------------------------------------
# inverse-branch path continuation
# ---------------------------------------------------------------------------

def _geodesic_midpoint(p: SpherePoint, q: SpherePoint) -> SpherePoint:
    a = np.array([p.z0, p.z1])
    b = np.array([q.z0, q.z1])
    ip = np.vdot(a, b)
    if abs(ip) > 1e-15:
        b = b * (np.conj(ip) / abs(ip))
    mid = a + b
    n = math.hypot(abs(mid[0]), abs(mid[1]))
    if n < 1e-12:
        raise ContinuationFailureError("midpoint of antipodal path points")
    return SpherePoint(mid[0], mid[1])


def _newton_pull(f, n, seed: SpherePoint, target: SpherePoint,
                 step_budget: float):
    """Newton-solve f^n(z) = target from the seed lift; None on failure."""
    cur = seed
    for _ in range(15):
        chart_t = _chart_of(target)
        try:
            end, deriv, chart_in, _ = _orbit_derivative(f, cur, n,
                                                        out_chart=chart_t)
        except ZeroDivisionError:
            return None
        resid = _coord(end, chart_t) - _coord(target, chart_t)
        if not np.isfinite(abs(resid)):
            return None
        if chordal(end, target) < 1e-9:
            if chordal(cur, seed) > step_budget:
                return None  # jumped branches
            return cur
        if abs(deriv) < 1e-14:
            return None  # at/near a critical point of f^n
        zeta = _coord(cur, chart_in) - resid / deriv
        nxt = _point_from_coord(zeta, chart_in)
        cur = nxt
    return None


def inverse_branch_continue(f: RationalMap, n: int, start_lift: SpherePoint,
                            path) -> SpherePoint:
    """Endpoint of the unique f^{-n}-lift of the path starting at start_lift.

    The path is advanced pointwise by Newton correction seeded at the
    previous lift; failed segments are bisected up to 10 levels before a
    ContinuationFailureError (which usually means the path crosses near a
    critical value of f^n).
    """
    path = list(path)
    if not path:
        raise ValueError("empty path")
    if chordal(iterate(f, start_lift, n), path[0]) > 1e-8:
        raise ValueError("start_lift is not a lift of the path start")
    for a, b in zip(path, path[1:]):
        if chordal(a, b) > PATH_SPACING_MAX:
            raise ValueError(
                f"path spacing {chordal(a, b):.3g} exceeds {PATH_SPACING_MAX}")

    lift = start_lift

    def advance(cur_lift, t0, t1, depth):
        spacing = max(chordal(t0, t1), 1e-14)
        # the lift should move about spacing / |df^n|; allow 5x
        deriv_n = 1.0
        cur = cur_lift
        for _ in range(n):
            z0a, z1a = np.array([cur.z0]), np.array([cur.z1])
            deriv_n *= max(float(spherical_derivative_arrays(f, z0a, z1a)[0]), 1e-300)
            cur = apply(f, cur)
        budget = 5.0 * spacing / max(deriv_n, 1e-300)
        budget = min(max(budget, 1e-13), 1.0)
        got = _newton_pull(f, n, cur_lift, t1, budget)
        if got is not None:
            return got
        if depth >= PATH_BISECTION_LEVELS:
            raise ContinuationFailureError(
                "inverse-branch continuation failed (likely near a critical "
                f"value); n={n}, segment spacing {spacing:.3g}")
        tm = _geodesic_midpoint(t0, t1)
        mid_lift = advance(cur_lift, t0, tm, depth + 1)
        return advance(mid_lift, tm, t1, depth + 1)

    for t0, t1 in zip(path, path[1:]):
        lift = advance(lift, t0, t1, 0)
    return lift
