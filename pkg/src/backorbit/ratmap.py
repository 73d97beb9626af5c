"""Rational maps on the sphere: evaluation, derivatives, critical sets.

A degree-d map is a pair of homogeneous degree-d lifts
P(z0, z1) = sum p_k z0^(d-k) z1^k, Q likewise, with coefficients stored
highest-affine-degree first (p_0 multiplies z0^d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMapError
from .sphere import (SpherePoint, chordal, from_affine, normalize_arrays,
                     parse_complex, Mobius)

RESULTANT_TOL = 1e-10        # |Res| threshold after scaling coefficients to 1
MAX_DEGREE = 12              # root-solver conditioning bound
CRITICAL_PERIOD_MAX = 64     # period search bound for "is this critical point periodic"
CRITICAL_PERIOD_TOL = 1e-9


@dataclass(frozen=True)
class RationalMap:
    """f = P/Q with coprime degree-d homogeneous lifts, d >= 2."""

    p: np.ndarray
    q: np.ndarray
    degree: int
    label: str = field(default="", compare=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.complex128)
        q = np.asarray(self.q, dtype=np.complex128)
        d = int(self.degree)
        if d < 2:
            raise DegenerateMapError(f"degree {d} < 2")
        if d > MAX_DEGREE:
            raise DegenerateMapError(f"degree {d} exceeds supported bound {MAX_DEGREE}")
        if p.shape != (d + 1,) or q.shape != (d + 1,):
            raise DegenerateMapError("coefficient arrays must have length degree+1")
        scale = max(np.max(np.abs(p)), np.max(np.abs(q)))
        if scale == 0.0:
            raise DegenerateMapError("zero map")
        p = p / scale
        q = q / scale
        if max(np.max(np.abs(p[0:1])), np.max(np.abs(q[0:1]))) == 0.0 and \
           abs(p[0]) == 0.0 and abs(q[0]) == 0.0:
            raise DegenerateMapError("max(deg p, deg q) < d: leading coefficients both zero")
        res = _sylvester_resultant(p, q)
        if abs(res) <= RESULTANT_TOL:
            raise DegenerateMapError(
                f"p and q share a near-common factor (|resultant| = {abs(res):.3e})")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "degree", d)

    def __repr__(self):
        return f"RationalMap({self.label or 'degree %d' % self.degree})"


def _sylvester_resultant(p, q):
    """Resultant of two degree-d coefficient vectors via the Sylvester matrix."""
    d = len(p) - 1
    n = 2 * d
    s = np.zeros((n, n), dtype=np.complex128)
    for i in range(d):
        s[i, i:i + d + 1] = p
        s[d + i, i:i + d + 1] = q
    sign, logdet = np.linalg.slogdet(s)
    if sign == 0:
        return 0.0
    return sign * np.exp(logdet)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def power_map(d: int) -> RationalMap:
    """z -> z^d."""
    p = np.zeros(d + 1, dtype=np.complex128)
    q = np.zeros(d + 1, dtype=np.complex128)
    p[0] = 1.0
    q[d] = 1.0
    return RationalMap(p, q, d, label=f"power {d}")


def chebyshev_map(d: int) -> RationalMap:
    """Monic Chebyshev-like polynomial normalized to [-2, 2].

    Defined by the three-term recurrence t_{n+1} = x t_n - t_{n-1} with
    t_0 = 2, t_1 = x, so t_d(w + 1/w) = w^d + w^-d.
    """
    t_prev = np.array([2.0], dtype=np.complex128)
    t_cur = np.array([1.0, 0.0], dtype=np.complex128)
    if d == 0:
        coeffs = t_prev
    elif d == 1:
        coeffs = t_cur
    else:
        for _ in range(d - 1):
            xt = np.concatenate([t_cur, [0.0]])
            pad = np.concatenate([np.zeros(len(xt) - len(t_prev)), t_prev])
            t_prev, t_cur = t_cur, xt - pad
        coeffs = t_cur
    p = coeffs.astype(np.complex128)
    q = np.zeros(d + 1, dtype=np.complex128)
    q[d] = 1.0
    return RationalMap(p, q, d, label=f"chebyshev {d}")


def quadratic_map(c) -> RationalMap:
    """z -> z^2 + c."""
    c = complex(c)
    p = np.array([1.0, 0.0, c], dtype=np.complex128)
    q = np.array([0.0, 0.0, 1.0], dtype=np.complex128)
    return RationalMap(p, q, 2, label=f"quadratic {c}")


def parse_map(spec: str) -> RationalMap:
    """Parse a map spec: 'power 2', 'chebyshev 3', 'quadratic -1',
    or 'coeffs p: 1,0,0 q: 0,0,1' (highest degree first)."""
    s = spec.strip()
    parts = s.split(None, 1)
    if not parts:
        raise DegenerateMapError("empty map spec")
    head = parts[0].lower()
    if head == "power":
        return power_map(int(parts[1]))
    if head == "chebyshev":
        return chebyshev_map(int(parts[1]))
    if head == "quadratic":
        return quadratic_map(parse_complex(parts[1]))
    if head == "coeffs":
        body = parts[1] if len(parts) > 1 else ""
        try:
            p_part, q_part = body.split("q:")
            p_txt = p_part.split("p:")[1]
        except (ValueError, IndexError) as exc:
            raise DegenerateMapError(f"bad coeffs spec {spec!r}") from exc
        p = np.array([parse_complex(t) for t in p_txt.split(",") if t.strip()])
        q = np.array([parse_complex(t) for t in q_part.split(",") if t.strip()])
        if len(p) != len(q):
            raise DegenerateMapError("p and q must list the same number of coefficients")
        return RationalMap(p, q, len(p) - 1, label=s)
    raise DegenerateMapError(f"unknown map spec {spec!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _eval_homog(coeffs, z0, z1):
    """Evaluate sum c_k z0^(d-k) z1^k stably for unit-norm inputs.

    Uses Horner in the small ratio so intermediate powers never overflow.
    """
    d = len(coeffs) - 1
    z0 = np.asarray(z0, dtype=np.complex128)
    z1 = np.asarray(z1, dtype=np.complex128)
    big0 = np.abs(z0) >= np.abs(z1)
    # branch a: factor z0^d, Horner in t = z1/z0 with coeffs ascending k
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(big0, z1 / np.where(big0, z0, 1.0), 0.0)
        tb = np.where(~big0, z0 / np.where(~big0, z1, 1.0), 0.0)
    ra = np.zeros_like(z0)
    for c in coeffs[::-1]:
        ra = ra * ta + c
    ra = ra * z0 ** d
    rb = np.zeros_like(z0)
    for c in coeffs:
        rb = rb * tb + c
    rb = rb * z1 ** d
    return np.where(big0, ra, rb)


def apply_arrays(f: RationalMap, z0, z1):
    """Forward image of unit-norm point arrays; renormalized, pole-free."""
    w0 = _eval_homog(f.p, z0, z1)
    w1 = _eval_homog(f.q, z0, z1)
    return normalize_arrays(w0, w1)


def apply(f: RationalMap, x: SpherePoint) -> SpherePoint:
    w0, w1 = apply_arrays(f, np.array([x.z0]), np.array([x.z1]))
    return SpherePoint(w0[0], w1[0])


def iterate(f: RationalMap, x: SpherePoint, n: int) -> SpherePoint:
    if n < 0:
        raise ValueError("n must be >= 0")
    z0, z1 = np.array([x.z0]), np.array([x.z1])
    for _ in range(n):
        z0, z1 = apply_arrays(f, z0, z1)
    return SpherePoint(z0[0], z1[0])


def iterate_arrays(f: RationalMap, z0, z1, n: int):
    for _ in range(n):
        z0, z1 = apply_arrays(f, z0, z1)
    return z0, z1


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def wronskian_affine(f: RationalMap) -> np.ndarray:
    """Affine coefficients (highest first) of p'q - pq', degree <= 2d-2.

    The homogeneous Jacobian of the lift is d times the homogenization of
    this polynomial; its roots are the critical points.
    """
    p, q, d = f.p, f.q, f.degree
    dp = p[:-1] * np.arange(d, 0, -1)
    dq = q[:-1] * np.arange(d, 0, -1)
    w = np.convolve(dp, q) - np.convolve(p, dq)
    # np.convolve of (len d, len d+1) gives len 2d; formal degree 2d-2 needs 2d-1
    return w[-(2 * d - 1):] if len(w) >= 2 * d - 1 else w


def _jacobian_homog_coeffs(f: RationalMap) -> np.ndarray:
    # homogeneous degree 2d-2 form, represented by its affine coefficients
    return f.degree * wronskian_affine(f)


def spherical_derivative_arrays(f: RationalMap, z0, z1):
    """Norm of df at unit-norm points, w.r.t. the chordal metric on both sides.

    Equals |J_F(X)| / (d ||F(X)||^2) for the homogeneous Jacobian J_F of the
    unit-scaled lift; reduces to |f'(z)| (1+|z|^2)/(1+|f(z)|^2) in a chart.
    """
    jac_coeffs = _pad_to_degree(_jacobian_homog_coeffs(f), 2 * f.degree - 2)
    jac = _eval_homog(jac_coeffs, z0, z1)
    w0 = _eval_homog(f.p, z0, z1)
    w1 = _eval_homog(f.q, z0, z1)
    nrm2 = np.abs(w0) ** 2 + np.abs(w1) ** 2
    return np.abs(jac) / (f.degree * nrm2)


def _pad_to_degree(coeffs, deg):
    """Left-pad affine coefficients with zeros up to formal degree deg."""
    if len(coeffs) < deg + 1:
        return np.concatenate([np.zeros(deg + 1 - len(coeffs), dtype=np.complex128), coeffs])
    return coeffs


def spherical_derivative(f: RationalMap, x: SpherePoint) -> float:
    v = spherical_derivative_arrays(f, np.array([x.z0]), np.array([x.z1]))
    return float(v[0])


def local_degree(f: RationalMap, x: SpherePoint) -> int:
    """Local degree of f at x: 1 + multiplicity of x in the critical divisor."""
    for pt, mult in critical_points(f):
        if chordal(pt, x) < 1e-8:
            return 1 + mult
    return 1


# ---------------------------------------------------------------------------
# critical data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalData:
    """Critical set with multiplicities, and the non-periodic subset."""

    all_critical: tuple          # ((SpherePoint, mult), ...)
    nonperiodic_critical: tuple  # (SpherePoint, ...)

    @property
    def n_nonperiodic(self) -> int:
        return len(self.nonperiodic_critical)


def critical_points(f: RationalMap):
    """Roots of the degree-(2d-2) homogeneous Wronskian, with multiplicities."""
    from .polysolve import roots  # local import: polysolve depends on ratmap
    w = _pad_to_degree(wronskian_affine(f), 2 * f.degree - 2)
    return roots(w).entries


def critical_data(f: RationalMap) -> CriticalData:
    """Critical set plus the subset of critical points on no periodic orbit."""
    from .dynamics import detect_cycle  # local import avoids a module cycle
    crit = critical_points(f)
    total = sum(m for _, m in crit)
    if total != 2 * f.degree - 2:
        raise DegenerateMapError(
            f"critical multiplicities sum to {total}, expected {2 * f.degree - 2}")
    nonperiodic = []
    for pt, _ in crit:
        info = detect_cycle(f, pt, CRITICAL_PERIOD_MAX, tol=CRITICAL_PERIOD_TOL)
        if info is None or chordal(info.points[0], pt) >= CRITICAL_PERIOD_TOL:
            # detect_cycle anchors at x itself; a hit means x is periodic
            nonperiodic.append(pt)
    return CriticalData(tuple(crit), tuple(nonperiodic))


# ---------------------------------------------------------------------------
# Mobius conjugation (test oracle for chart independence)
# ---------------------------------------------------------------------------

def _subst_linear(coeffs, a, b, c, e):
    """Coefficients of C(a z0 + b z1, c z0 + e z1) for a homogeneous form C."""
    d = len(coeffs) - 1
    out = np.zeros(d + 1, dtype=np.complex128)
    la = np.array([a, b], dtype=np.complex128)
    lb = np.array([c, e], dtype=np.complex128)
    for k, ck in enumerate(coeffs):
        term = np.array([1.0 + 0j])
        for _ in range(d - k):
            term = np.convolve(term, la)
        for _ in range(k):
            term = np.convolve(term, lb)
        out += ck * np.pad(term, (d + 1 - len(term), 0))
    return out


def conjugate(f: RationalMap, m: Mobius) -> RationalMap:
    """The map m o f o m^-1."""
    mi = m.inverse().m
    p_sub = _subst_linear(f.p, mi[0, 0], mi[0, 1], mi[1, 0], mi[1, 1])
    q_sub = _subst_linear(f.q, mi[0, 0], mi[0, 1], mi[1, 0], mi[1, 1])
    new_p = m.m[0, 0] * p_sub + m.m[0, 1] * q_sub
    new_q = m.m[1, 0] * p_sub + m.m[1, 1] * q_sub
    return RationalMap(new_p, new_q, f.degree, label=f.label + " (conjugated)")
