"""Test functions: truncated log-distance potentials and smooth chart functions.

Every observable is finite on the whole sphere and carries computable norm
data: a Holder constant (exact bound or sampled estimate, flagged which),
a sup norm, and a Laplacian description used by the theorem checkers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BackorbitError
from .measures import DiscreteMeasure
from .sphere import (SpherePoint, chordal, chordal_arrays, chordal_circle,
                     fibonacci_grid, normalize_arrays)

DDC_CIRCLE_ATOMS = 256        # atoms discretizing each dd^c circle measure
C2_LAPLACIAN_SAMPLES = 10_000
C2_LAPLACIAN_STEP = 1e-4
C2_SAFETY_FACTOR = 2.0


@dataclass(frozen=True)
class AreaTerm:
    """Smooth area component of dd^c phi, tracked by total mass only."""

    mass: float


@dataclass(frozen=True)
class DiscreteDdc:
    """dd^c phi = plus - minus with discretized circle measures."""

    plus: DiscreteMeasure
    minus: object            # DiscreteMeasure or AreaTerm
    mass_plus: float
    mass_minus: float

    @property
    def is_fully_discrete(self) -> bool:
        return isinstance(self.minus, DiscreteMeasure)


@dataclass(frozen=True)
class DensityBound:
    """dd^c phi = h * omega_FS with a sampled bound on |h| (flagged estimate)."""

    h_inf: float
    estimated: bool = True


@dataclass(frozen=True)
class Observable:
    name: str
    fn: object                      # vectorized (z0, z1) -> float array
    alpha: float | None
    holder_const: float | None
    holder_kind: str                # 'exact-bound' or 'estimate'
    sup_norm: float
    ddc: object                     # DiscreteDdc | DensityBound | None

    def evaluate_arrays(self, z0, z1):
        return self.fn(z0, z1)

    def evaluate(self, p: SpherePoint) -> float:
        return float(self.fn(np.array([p.z0]), np.array([p.z1]))[0])

    @property
    def ddc_mass_bound(self) -> float:
        """Upper bound for the mass norm of dd^c phi (loosens inequalities
        being verified, never tightens them)."""
        if isinstance(self.ddc, DiscreteDdc):
            return self.ddc.mass_plus + self.ddc.mass_minus
        if isinstance(self.ddc, DensityBound):
            return self.ddc.h_inf   # mass <= ||h||_inf * omega(P^1) = ||h||_inf
        raise BackorbitError(f"{self.name}: no dd^c information")

    @property
    def ddc_inf_bound(self) -> float:
        if isinstance(self.ddc, DensityBound):
            return self.ddc.h_inf
        raise BackorbitError(f"{self.name}: no density bound for dd^c")


def _circle_measure(b: SpherePoint, radius: float, n_atoms: int) -> DiscreteMeasure:
    z0, z1 = chordal_circle(b, radius, n_atoms)
    return DiscreteMeasure(z0, z1, np.full(n_atoms, 1.0 / n_atoms))


def make_log_distance(b: SpherePoint, eps: float,
                      n_atoms: int = DDC_CIRCLE_ATOMS) -> Observable:
    """phi(x) = log max(d(x, b), eps): Lipschitz with constant 1/eps.

    dd^c phi is the uniform measure on the chordal eps-circle about b minus
    the smooth area form; the area part is carried by its total mass only.
    """
    if not 0.0 < eps < 1.0:
        raise BackorbitError("eps must be in (0, 1)")
    b0, b1 = b.z0, b.z1

    def fn(z0, z1):
        return np.log(np.maximum(chordal_arrays(z0, z1, b0, b1), eps))

    ddc = DiscreteDdc(_circle_measure(b, eps, n_atoms), AreaTerm(1.0), 1.0, 1.0)
    return Observable(f"log-dist(b={b!r}, eps={eps})", fn, 1.0, 1.0 / eps,
                      "exact-bound", abs(math.log(eps)), ddc)


def make_basin_contrast(b_plus: SpherePoint, b_minus: SpherePoint, eps: float,
                        n_atoms: int = DDC_CIRCLE_ATOMS) -> Observable:
    """phi = log max(d(., b+), eps) - log max(d(., b-), eps).

    The smooth area parts cancel, leaving dd^c phi as two exactly balanced
    circle measures; this is the observable the potential oracle integrates.
    """
    if chordal(b_plus, b_minus) <= 2.0 * eps:
        raise BackorbitError("basin centers closer than 2*eps")
    p0, p1 = b_plus.z0, b_plus.z1
    m0, m1 = b_minus.z0, b_minus.z1

    def fn(z0, z1):
        dp = np.maximum(chordal_arrays(z0, z1, p0, p1), eps)
        dm = np.maximum(chordal_arrays(z0, z1, m0, m1), eps)
        return np.log(dp) - np.log(dm)

    ddc = DiscreteDdc(_circle_measure(b_plus, eps, n_atoms),
                      _circle_measure(b_minus, eps, n_atoms), 1.0, 1.0)
    return Observable(f"basin(bp={b_plus!r}, bm={b_minus!r}, eps={eps})", fn,
                      1.0, 2.0 / eps, "exact-bound", abs(math.log(eps)), ddc)


# ---------------------------------------------------------------------------
# smooth chart functions
# ---------------------------------------------------------------------------

def _height_fn(z0, z1):
    return np.abs(z0) ** 2 - np.abs(z1) ** 2  # (|z|^2 - 1)/(|z|^2 + 1) in a chart


def _moment_fn(k, imag=False):
    def fn(z0, z1):
        w = (2.0 * z0 * np.conj(z1)) ** k
        return w.imag if imag else w.real
    return fn


def _estimate_h_inf(fn) -> float:
    """Sampled bound on |h| where dd^c phi = h omega_FS.

    Five-point Laplacians in the chart that keeps the point near the origin;
    h = Lap(phi) (1+|zeta|^2)^2 / 2 in either chart.
    """
    z0, z1 = fibonacci_grid(C2_LAPLACIAN_SAMPLES)
    swap = np.abs(z0) > np.abs(z1)
    a0 = np.where(swap, z1, z0)
    a1 = np.where(swap, z0, z1)
    zeta = a0 / a1
    h = C2_LAPLACIAN_STEP

    def ev(dz):
        w0, w1 = normalize_arrays(zeta + dz, np.ones_like(zeta))
        u0 = np.where(swap, w1, w0)
        u1 = np.where(swap, w0, w1)
        return fn(u0, u1)

    lap = (ev(h) + ev(-h) + ev(1j * h) + ev(-1j * h) - 4.0 * ev(0.0)) / (h * h)
    # with dd^c u = Lap(u)/(2 pi) dA and omega = dA/(pi (1+|z|^2)^2),
    # the density is h = Lap(phi) (1+|z|^2)^2 / 2
    dens = np.abs(lap) * (1.0 + np.abs(zeta) ** 2) ** 2 / 2.0
    return float(np.max(dens)) * C2_SAFETY_FACTOR


_C2_SUP = {"height": 1.0}


def make_chart_c2(name: str, k: int = 0) -> Observable:
    """Smooth chart observables: 'height', or angular moments 'moment k'.

    height = (|z|^2 - 1)/(|z|^2 + 1), value 1 at infinity.  moment k is
    Re (2 z / (1+|z|^2))^k, scaled to cos(k theta) on the unit circle;
    'imoment k' takes the imaginary part.
    """
    if name == "height":
        fn, sup = _height_fn, 1.0
    elif name in ("moment", "re-moment"):
        if not 1 <= k <= 16:
            raise BackorbitError("moment order must be in 1..16")
        fn, sup = _moment_fn(k), 1.0
    elif name in ("imoment", "im-moment"):
        if not 1 <= k <= 16:
            raise BackorbitError("moment order must be in 1..16")
        fn, sup = _moment_fn(k, imag=True), 1.0
    else:
        raise BackorbitError(f"unknown chart observable {name!r}")
    label = name if name == "height" else f"{name}({k})"
    hinf = _estimate_h_inf(fn)
    holder = _sampled_lipschitz(fn)
    return Observable(label, fn, 1.0, holder, "estimate", sup,
                      DensityBound(hinf))


def _sampled_lipschitz(fn, n=4000, seed=7) -> float:
    rng = np.random.Generator(np.random.Philox(key=seed))
    z0a, z1a = _random_points(rng, n)
    z0b, z1b = _random_points(rng, n)
    d = chordal_arrays(z0a, z1a, z0b, z1b)
    good = d > 1e-9
    q = np.abs(fn(z0a, z1a) - fn(z0b, z1b))[good] / d[good]
    # local pairs at scale 1e-3 catch the steepest spots
    t0, t1 = _random_points(rng, n)
    safe = np.abs(t1) > 1e-6
    t0, t1 = t0[safe], t1[safe]
    zeta = t0 / t1
    off = 1e-3 * np.exp(2j * math.pi * rng.random(len(zeta)))
    s0, s1 = normalize_arrays(zeta + off, np.ones_like(zeta))
    d2 = chordal_arrays(t0, t1, s0, s1)
    good2 = d2 > 1e-9
    q2 = np.abs(fn(t0, t1) - fn(s0, s1))[good2] / d2[good2]
    return 1.05 * float(max(np.max(q), np.max(q2)))


def _random_points(rng, n):
    v = rng.normal(size=(n, 4))
    return normalize_arrays(v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3])


def holder_estimate(phi: Observable, alpha: float, n_samples: int = 10_000,
                    seed: int = 0) -> float:
    """Sampled lower bound for the alpha-Holder constant of phi.

    Max quotient over random pairs plus pairs concentrated at chordal scale
    1e-3; always a lower bound for the true constant.
    """
    if not 0.0 < alpha <= 1.0:
        raise BackorbitError("alpha must be in (0, 1]")
    rng = np.random.Generator(np.random.Philox(key=seed))
    best = 0.0
    for scale in (None, 1e-3):
        z0a, z1a = _random_points(rng, n_samples)
        if scale is None:
            z0b, z1b = _random_points(rng, n_samples)
        else:
            zeta = z0a / np.where(np.abs(z1a) < 1e-14, 1.0, z1a)
            zeta = np.where(np.abs(z1a) < 1e-14, 0.0, zeta)
            off = scale * np.exp(2j * math.pi * rng.random(n_samples))
            z0b, z1b = normalize_arrays(zeta + off, np.ones_like(zeta))
        d = chordal_arrays(z0a, z1a, z0b, z1b)
        good = d > 1e-12
        if not np.any(good):
            continue
        q = np.abs(phi.evaluate_arrays(z0a, z1a)
                   - phi.evaluate_arrays(z0b, z1b))[good] / d[good] ** alpha
        best = max(best, float(np.max(q)))
    return best
