"""Riemann sphere points in homogeneous coordinates and the chordal metric.

Every point is stored as a unit-norm pair [z0 : z1].  The chordal distance
d(p, q) = |z0(p) z1(q) - z1(p) z0(q)| is normalized so the sphere has
diameter 1; in an affine chart it equals |z - w| / sqrt((1+|z|^2)(1+|w|^2)).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

# Two points are "the same point" below this chordal distance.
POINT_IDENTITY_TOL = 1e-10
# |z1| below this (on a unit-norm representative) marks the point at infinity.
INFINITY_TOL = 1e-14

INF = complex("inf")


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A point [z0 : z1] on the sphere, normalized to |z0|^2 + |z1|^2 = 1."""

    z0: complex
    z1: complex

    def __post_init__(self):
        z0 = complex(self.z0)
        z1 = complex(self.z1)
        if not (cmath.isfinite(z0) and cmath.isfinite(z1)):
            raise ValueError("non-finite homogeneous coordinates")
        n = math.hypot(abs(z0), abs(z1))
        if n == 0.0:
            raise ValueError("(0, 0) is not a point on the sphere")
        object.__setattr__(self, "z0", z0 / n)
        object.__setattr__(self, "z1", z1 / n)

    @property
    def is_infinity(self) -> bool:
        return abs(self.z1) < INFINITY_TOL

    def to_affine(self) -> complex:
        """Affine coordinate z0/z1, or INF for the point at infinity."""
        if self.is_infinity:
            return INF
        return self.z0 / self.z1

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return chordal(self, other) < POINT_IDENTITY_TOL

    __hash__ = None  # tolerance-based equality is incompatible with hashing

    def __repr__(self):
        return f"SpherePoint({format_point(self)})"


def from_affine(z) -> SpherePoint:
    """Build [z : 1], or [1 : 0] for infinity (z = INF, inf, or None)."""
    if z is None:
        return SpherePoint(1.0, 0.0)
    z = complex(z)
    if cmath.isnan(z):
        raise ValueError("NaN is not a point")
    if cmath.isinf(z):
        return SpherePoint(1.0, 0.0)
    # scale before normalizing so huge |z| cannot overflow |z|^2
    if abs(z) > 1.0:
        return SpherePoint(1.0, 1.0 / z)
    return SpherePoint(z, 1.0)


def to_affine(p: SpherePoint) -> complex:
    return p.to_affine()


def chordal(p: SpherePoint, q: SpherePoint) -> float:
    """Chordal distance in [0, 1] between two normalized points."""
    v = abs(p.z0 * q.z1 - p.z1 * q.z0)
    return min(v, 1.0)


def format_point(p: SpherePoint) -> str:
    """Text form 're+imi', or the token 'inf'."""
    if p.is_infinity:
        return "inf"
    z = p.to_affine()
    return f"{z.real!r}{z.imag:+}i"


def parse_point(s: str) -> SpherePoint:
    """Inverse of format_point; also accepts plain complex literals and 'i'."""
    s = s.strip()
    if s.lower() in ("inf", "infinity", "oo"):
        return SpherePoint(1.0, 0.0)
    return from_affine(parse_complex(s))


def parse_complex(s: str) -> complex:
    """Parse a complex literal written with 'i' or 'j' (e.g. '1+2i', '-i')."""
    t = s.strip().replace(" ", "").replace("i", "j")
    if t in ("j", "+j"):
        return 1j
    if t == "-j":
        return -1j
    try:
        return complex(t)
    except ValueError as exc:
        raise ValueError(f"cannot parse complex number {s!r}") from exc


# ---------------------------------------------------------------------------
# Array-layer helpers: bulk operations keep points as parallel (z0, z1) arrays.
# ---------------------------------------------------------------------------

def normalize_arrays(z0, z1):
    """Renormalize homogeneous coordinate arrays to unit norm in place-safe form."""
    z0 = np.asarray(z0, dtype=np.complex128)
    z1 = np.asarray(z1, dtype=np.complex128)
    n = np.hypot(np.abs(z0), np.abs(z1))
    if np.any(n == 0.0):
        raise ValueError("zero homogeneous vector in array")
    return z0 / n, z1 / n


def chordal_arrays(a0, a1, b0, b1):
    """Chordal distances between unit-norm coordinate arrays (broadcasting)."""
    return np.minimum(np.abs(a0 * b1 - a1 * b0), 1.0)


def pack_points(points):
    """SpherePoint list -> (z0, z1) arrays."""
    z0 = np.array([p.z0 for p in points], dtype=np.complex128)
    z1 = np.array([p.z1 for p in points], dtype=np.complex128)
    return z0, z1


def unpack_points(z0, z1):
    """(z0, z1) arrays -> SpherePoint list."""
    return [SpherePoint(a, b) for a, b in zip(np.atleast_1d(z0), np.atleast_1d(z1))]


def affine_arrays(z0, z1):
    """Unit-norm arrays -> (re, im, is_inf) with re=im=0 at infinity."""
    is_inf = np.abs(z1) < INFINITY_TOL
    z = np.where(is_inf, 0.0 + 0.0j, z0 / np.where(is_inf, 1.0, z1))
    return z.real, z.imag, is_inf


def from_affine_arrays(z):
    """Finite complex array -> unit-norm (z0, z1) arrays."""
    z = np.asarray(z, dtype=np.complex128)
    big = np.abs(z) > 1.0
    z0 = np.where(big, 1.0 + 0.0j, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = np.where(big, 1.0 / np.where(big, z, 1.0), 1.0 + 0.0j)
    return normalize_arrays(z0, z1)


def embed_r3(z0, z1):
    """Map unit-norm coordinates to the unit 2-sphere in R^3.

    Euclidean distance in this embedding equals 2x the chordal distance.
    """
    w = z0 * np.conj(z1)
    return np.stack([2.0 * w.real, 2.0 * w.imag,
                     (np.abs(z0) ** 2 - np.abs(z1) ** 2)], axis=-1)


def fibonacci_grid(n: int):
    """Deterministic quasi-uniform grid of n points, as (z0, z1) arrays."""
    k = np.arange(n)
    # golden-angle spiral on the sphere
    zh = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - zh * zh))
    phi = k * (math.pi * (3.0 - math.sqrt(5.0)))
    x, y = r * np.cos(phi), r * np.sin(phi)
    # inverse of embed_r3 (stereographic from the embedding)
    z1a = np.sqrt(np.maximum(0.0, (1.0 - zh) / 2.0))
    z0a = np.sqrt(np.maximum(0.0, (1.0 + zh) / 2.0))
    phase = np.where(r > 0, (x + 1j * y) / np.where(r > 0, r, 1.0), 1.0 + 0j)
    return normalize_arrays(z0a * phase, z1a.astype(np.complex128))


# ---------------------------------------------------------------------------
# Mobius maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mobius:
    """Invertible 2x2 complex matrix acting on homogeneous coordinates."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.complex128).reshape(2, 2)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-14:
            raise ValueError("singular Mobius matrix")
        object.__setattr__(self, "m", m / np.sqrt(det))

    @classmethod
    def affine(cls, a, b, c, d):
        """z -> (a z + b) / (c z + d)."""
        return cls(np.array([[a, b], [c, d]], dtype=np.complex128))

    @classmethod
    def identity(cls):
        return cls(np.eye(2, dtype=np.complex128))

    def apply(self, p: SpherePoint) -> SpherePoint:
        v = self.m @ np.array([p.z0, p.z1])
        return SpherePoint(v[0], v[1])

    def apply_arrays(self, z0, z1):
        m = self.m
        return normalize_arrays(m[0, 0] * z0 + m[0, 1] * z1,
                                m[1, 0] * z0 + m[1, 1] * z1)

    def inverse(self) -> "Mobius":
        m = self.m
        return Mobius(np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]))

    def compose(self, other: "Mobius") -> "Mobius":
        return Mobius(self.m @ other.m)


def rotation_to(b: SpherePoint) -> Mobius:
    """Unitary rotation of the sphere taking [0 : 1] to b."""
    return Mobius(np.array([[-np.conj(b.z1), b.z0],
                            [np.conj(b.z0), b.z1]]))


def chordal_circle(b: SpherePoint, radius: float, n: int):
    """n points uniformly spread on the chordal circle of given radius about b.

    Returns (z0, z1) arrays.  Uniform in the rotation angle about b, which is
    the rotation-invariant (uniform) parameterization of the circle.
    """
    if not 0.0 < radius < 1.0:
        raise ValueError("radius must be in (0, 1)")
    r = radius / math.sqrt(1.0 - radius * radius)  # affine radius about 0
    theta = 2.0 * math.pi * np.arange(n) / n
    z = r * np.exp(1j * theta)
    z0, z1 = from_affine_arrays(z)
    return rotation_to(b).apply_arrays(z0, z1)
