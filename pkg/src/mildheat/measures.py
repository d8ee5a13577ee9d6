"""Nonnegative measures on the closed domain: densities, surface parts, atoms.

A measure is described by up to three pieces: an interior density
(against Lebesgue measure directly, or against the boundary-distance
weight d(x)dx), a density on the boundary against surface measure, and a
list of point masses.  Ball masses and weighted ball integrals are
computed with the adaptive quadrature engine; densities follow its
two-argument protocol so that distance factors near a declared singular
point are evaluated from exact offsets.

The module ships three built-in singular families, each anchored at a
point z, cut off outside the unit ball around z, and carrying a scale
factor kappa.  Writing a = 2/(p-1):

- ``interior_point``: density |x-z|^(-a) against d(x)dx, z interior;
  admissible for p at or above 1 + 2/N.  At the critical p the power
  becomes -N with an extra factor [log(e + 1/|x-z|)]^(-N/2-1).
- ``boundary_point``: the same weighted density with z on the boundary;
  admissible for p at or above 1 + 2/(N+1); critical power -(N+1) with
  log exponent -(N+1)/2 - 1.
- ``boundary_surface``: a surface density |x-z|^(-2(2-p)/(p-1)) on the
  boundary, z on the boundary, for 1 + 2/(N+1) <= p < 2 (needs N >= 2);
  critical power -(N-1) with the same log exponent as boundary_point.

These are the strongest admissible local singularities at their
respective exponent ranges; the criteria module measures their ball-mass
growth exponents.

Scaling by kappa multiplies the final integrals, never the density
callables, so scaled measures reproduce exactly linear ball masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad as _quad

from .kernels import Domain, HalfSpace, Interval, WholeSpace, boundary_distance, space_dim
from .quadrature import Ball, BoundaryPatch, _accepts_offsets, integrate

__all__ = [
    "MeasureSpec",
    "SingularFamily",
    "RadialProfile",
    "critical_exponent",
    "make_family",
    "ball_mass",
    "weighted_ball_integral",
    "pairing",
    "scale",
    "from_table",
]


def critical_exponent(k: int) -> float:
    """The threshold exponent 1 + 2/k."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    return 1.0 + 2.0 / k


def _profile_integral(sigma: float, q: float, beta: float) -> float:
    """Integral of s^q * (log(e + 1/s))^(-beta) over s in (0, sigma].

    Needs sigma <= 1.  Exact for beta = 0; otherwise evaluated through
    substitutions that keep every digit of the logarithmic tail.  That
    tail is why this exists: at q = -1 a fixed fraction of the integral
    sits below any radius representable in floating point, so no direct
    quadrature of the density can ever see it.
    """
    if sigma <= 0.0:
        return 0.0
    if sigma > 1.0 + 1e-12:
        raise ValueError("profile integrals are defined up to radius 1")
    sigma = min(sigma, 1.0)
    if beta == 0.0:
        if q <= -1.0:
            raise ValueError("power profile is not integrable at this exponent")
        return sigma ** (q + 1.0) / (q + 1.0)
    if abs(q + 1.0) < 1e-12:
        if beta <= 1.0:
            raise ValueError("borderline profile needs a log exponent above 1")
        # s = e^-v turns the integrand into (log(e + e^v))^-beta on
        # [log(1/sigma), inf); beyond v = 50 the argument is v to within
        # e^-49 and the tail integrates in closed form.
        v0 = math.log(1.0 / sigma)
        vt = max(v0, 50.0)
        val = 0.0
        if vt > v0:
            val, _ = _quad(
                lambda v: math.log(math.e + math.exp(v)) ** -beta,
                v0,
                vt,
                limit=200,
                epsabs=0.0,
                epsrel=1e-13,
            )
        return val + vt ** (1.0 - beta) / (beta - 1.0)
    if q < -1.0:
        raise ValueError("profile is not integrable against this power")
    # s = sigma * u^(1/(q+1)) flattens the power factor exactly, leaving
    # a bounded monotone integrand on (0, 1].
    c = 1.0 / (q + 1.0)
    ls = math.log(sigma)

    def g(u):
        if u <= 0.0:
            return 0.0
        t = -c * math.log(u) - ls
        if t > 30.0:
            return t**-beta
        return math.log(math.e + math.exp(t)) ** -beta

    val, _ = _quad(g, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-13)
    return sigma ** (q + 1.0) * c * val


@dataclass(frozen=True)
class RadialProfile:
    """Closed-form radial structure of a built-in family density.

    The density equals r^(-power) * (log(e + 1/r))^(-log_power) for
    r = |y - anchor| up to 1, zero beyond, carried by a surface of the
    stated dimension (the ambient space for interior densities, the
    boundary for surface ones).  ``primitive`` integrates the density
    against r^q_extra over a radial segment [0, sigma], including the
    r^(dim-1) area factor, per unit angular measure.
    """

    anchor: tuple
    dim: int
    power: float
    log_power: float = 0.0

    def primitive(self, q_extra: float, sigma: float) -> float:
        q = self.dim - 1 + q_extra - self.power
        return _profile_integral(min(sigma, 1.0), q, self.log_power)


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Immutable measure description.

    ``interior_density`` and ``boundary_density`` take an (m, N) point
    array plus optional exact offsets from the declared singularity and
    return (m,) nonnegative values (before ``scale_factor``).
    ``interior_mode`` is "dx" or "d_dx"; in the latter the measure is
    density(x) * d(x) dx, the natural form for boundary-weighted data.
    Atoms are ((point, mass), ...) pairs, masses before scaling.
    """

    interior_density: Optional[Callable] = None
    interior_mode: str = "dx"
    boundary_density: Optional[Callable] = None
    atoms: tuple = ()
    support_center: Optional[tuple] = None
    support_radius: Optional[float] = None
    singularity: Optional[tuple] = None  # (location, algebraic exponent)
    scale_factor: float = 1.0
    family: Optional[str] = None
    p: Optional[float] = None
    radial_profile: Optional[RadialProfile] = None

    def __post_init__(self):
        if self.interior_mode not in ("dx", "d_dx"):
            raise ValueError("interior_mode must be 'dx' or 'd_dx'")
        if self.scale_factor < 0:
            raise ValueError("scale_factor must be nonnegative")
        for _, m in self.atoms:
            if not m > 0:
                raise ValueError("atom masses must be positive")


@dataclass(frozen=True)
class SingularFamily:
    """Parameters of a built-in singular measure family."""

    kind: str  # interior_point | boundary_point | boundary_surface
    anchor: tuple
    p: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("interior_point", "boundary_point", "boundary_surface"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not self.p > 1:
            raise ValueError("exponent p must exceed 1")
        if not self.kappa >= 0:
            raise ValueError("kappa must be nonnegative")


_CRIT_MATCH = 1e-12


def _offset_norm(pts, off, anchor):
    if off is not None:
        d = off
    else:
        d = pts - anchor
    if d.ndim == 1:
        return np.abs(d)
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def _power_density(anchor: np.ndarray, a: float):
    def density(pts, off=None):
        r = _offset_norm(np.asarray(pts, float), off, anchor)
        with np.errstate(divide="ignore", over="ignore"):
            v = r**-a
        return np.where(r <= 1.0, v, 0.0)

    return density


def _log_power_density(anchor: np.ndarray, a: float, logpow: float):
    def density(pts, off=None):
        r = _offset_norm(np.asarray(pts, float), off, anchor)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            v = r**-a * np.log(np.e + 1.0 / r) ** logpow
        return np.where(r <= 1.0, v, 0.0)

    return density


def make_family(family: SingularFamily, domain: Domain) -> MeasureSpec:
    """Build the measure for a singular family on the given domain."""
    n = space_dim(domain)
    anchor = np.asarray(family.anchor, dtype=float)
    if anchor.size != n:
        raise ValueError("anchor dimension does not match the domain")
    d_anchor = boundary_distance(domain, anchor)
    p = family.p

    if family.kind == "interior_point":
        p_min = critical_exponent(n)
        if not d_anchor > 0:
            raise ValueError("interior_point anchor must be interior")
        if p < p_min - _CRIT_MATCH:
            raise ValueError(f"interior_point needs p >= {p_min}")
        if abs(p - p_min) <= _CRIT_MATCH:
            dens = _log_power_density(anchor, float(n), -n / 2.0 - 1.0)
            expo = -float(n)
            prof = RadialProfile(tuple(anchor), n, float(n), n / 2.0 + 1.0)
        else:
            a = 2.0 / (p - 1.0)
            dens = _power_density(anchor, a)
            expo = -a
            prof = RadialProfile(tuple(anchor), n, a)
        return MeasureSpec(
            interior_density=dens,
            interior_mode="d_dx",
            support_center=tuple(anchor),
            support_radius=1.0,
            singularity=(tuple(anchor), expo),
            scale_factor=family.kappa,
            family=family.kind,
            p=p,
            radial_profile=prof,
        )

    if d_anchor != 0:
        raise ValueError(f"{family.kind} anchor must lie on the boundary")
    if isinstance(domain, WholeSpace):
        raise ValueError("boundary families need a domain with boundary")
    p_min = critical_exponent(n + 1)

    if family.kind == "boundary_point":
        if p < p_min - _CRIT_MATCH:
            raise ValueError(f"boundary_point needs p >= {p_min}")
        if abs(p - p_min) <= _CRIT_MATCH:
            dens = _log_power_density(anchor, float(n + 1), -(n + 1) / 2.0 - 1.0)
            expo = -float(n + 1)
            prof = RadialProfile(tuple(anchor), n, float(n + 1), (n + 1) / 2.0 + 1.0)
        else:
            a = 2.0 / (p - 1.0)
            dens = _power_density(anchor, a)
            expo = -a
            prof = RadialProfile(tuple(anchor), n, a)
        return MeasureSpec(
            interior_density=dens,
            interior_mode="d_dx",
            support_center=tuple(anchor),
            support_radius=1.0,
            singularity=(tuple(anchor), expo),
            scale_factor=family.kappa,
            family=family.kind,
            p=p,
            radial_profile=prof,
        )

    # boundary_surface
    if n < 2:
        raise ValueError("boundary_surface needs ambient dimension >= 2")
    if not (p_min - _CRIT_MATCH <= p < 2.0):
        raise ValueError(f"boundary_surface needs {p_min} <= p < 2")
    if abs(p - p_min) <= _CRIT_MATCH:
        dens = _log_power_density(anchor, float(n - 1), -(n + 1) / 2.0 - 1.0)
        expo = -float(n - 1)
        prof = RadialProfile(tuple(anchor), n - 1, float(n - 1), (n + 1) / 2.0 + 1.0)
    else:
        a = 2.0 * (2.0 - p) / (p - 1.0)
        dens = _power_density(anchor, a)
        expo = -a
        prof = RadialProfile(tuple(anchor), n - 1, a)
    return MeasureSpec(
        boundary_density=dens,
        support_center=tuple(anchor),
        support_radius=1.0,
        singularity=(tuple(anchor), expo),
        scale_factor=family.kappa,
        family=family.kind,
        p=p,
        radial_profile=prof,
    )


def scale(mu: MeasureSpec, kappa: float) -> MeasureSpec:
    """Multiply the measure by kappa; exact on every computed mass."""
    if not kappa >= 0:
        raise ValueError("kappa must be nonnegative")
    return replace(mu, scale_factor=mu.scale_factor * kappa)


# ---------------------------------------------------------------------------
# integration helpers


def _ball_region(domain: Domain, center, radius: float) -> Ball:
    center = tuple(float(c) for c in np.atleast_1d(center))
    if isinstance(domain, Interval):
        return Ball(center, radius, clip_lo=0.0, clip_hi=domain.length)
    if isinstance(domain, HalfSpace):
        return Ball(center, radius, clip_lo=0.0)
    return Ball(center, radius)


def _hint_for(mu: MeasureSpec, center, radius: float):
    if mu.singularity is None:
        return None
    loc = np.asarray(mu.singularity[0], float)
    if np.linalg.norm(loc - np.asarray(center, float)) <= radius * (1 + 1e-12):
        return (tuple(loc), mu.singularity[1])
    return None


def _boundary_patch(domain: Domain, center, radius: float):
    """Intersection of the ball with the boundary, or None if empty.

    Returns either a BoundaryPatch region or a list of boundary points
    (Interval endpoints, the half-line origin) to evaluate directly.
    """
    center = np.atleast_1d(np.asarray(center, float))
    if isinstance(domain, Interval):
        pts = []
        for e in (0.0, domain.length):
            if abs(center[0] - e) <= radius:
                pts.append((e,))
        return pts or None
    if isinstance(domain, HalfSpace):
        zn = center[-1]
        if zn > radius:
            return None
        if domain.dim == 1:
            return [(0.0,)]
        rb = math.sqrt(max(radius**2 - zn**2, 0.0))
        if rb == 0.0:
            return None
        bc = tuple(center[:-1]) + (0.0,)
        return BoundaryPatch(bc, rb)
    return None


def _integrate_part(density, region, tol, hint, extra=None):
    """Integrate density (optionally times a smooth factor) over region."""
    fwd = _accepts_offsets(density)

    def f(pts, off=None):
        v = density(pts, off) if fwd else density(pts)
        if extra is not None:
            v = v * extra(pts)
        return v

    res = integrate(f, region, tol, singularity_hint=hint, relative=True)
    return res.value


def _point_value(fn, pt) -> float:
    return float(np.asarray(fn(np.asarray(pt, float)[None, :])).reshape(-1)[0])


def _split_radial_1d(
    mu: MeasureSpec, domain: Domain, lo: float, hi: float, f, tol: float, weighted: bool
) -> float:
    """Integral of f * weight * density over [lo, hi] through the anchor.

    The segment within eps of the anchor is integrated in closed form
    with f frozen there and the piecewise-linear weight expanded
    exactly; the remainder is adaptive with the density masked below
    eps.  The closed form is essential for the borderline profiles,
    whose mass below any representable radius is not negligible.
    """
    prof = mu.radial_profile
    dens = mu.interior_density
    anchor = np.asarray(prof.anchor, float)
    z = float(anchor[0])
    fz = 1.0 if f is None else _point_value(f, anchor)
    dz = _point_value(lambda p: boundary_distance(domain, p), anchor) if weighted else 0.0

    total = 0.0
    for direction in (1.0, -1.0):
        length = (hi - z) if direction > 0 else (z - lo)
        if length <= 0.0:
            continue
        eps = min(1e-8 * length, 0.5 * length)
        if weighted:
            probe = anchor.copy()
            probe[0] = z + direction * eps
            slope = (_point_value(lambda p: boundary_distance(domain, p), probe) - dz) / eps
            inner = slope * prof.primitive(1.0, eps)
            if dz > 0.0:
                inner += dz * prof.primitive(0.0, eps)
        else:
            inner = prof.primitive(0.0, eps)
        total += fz * inner

        def outer(pts, off=None):
            r = _offset_norm(np.asarray(pts, float), off, anchor)
            v = dens(pts, off)
            if f is not None:
                v = v * np.asarray(f(pts), float).reshape(-1)
            if weighted:
                v = v * boundary_distance(domain, pts)
            return np.where(r >= eps, v, 0.0)

        a = z if direction > 0 else z - length
        b = z + length if direction > 0 else z
        res = integrate(
            outer,
            Ball((0.5 * (a + b),), 0.5 * length),
            tol,
            singularity_hint=mu.singularity,
            relative=True,
        )
        total += res.value
    return total


def _sphere_area(k: int) -> float:
    """Surface measure of the unit sphere in R^k (two points for k=1)."""
    return 2.0 * math.pi ** (k / 2.0) / math.gamma(k / 2.0)


def _half_ball_moment(k: int) -> float:
    """Integral of the last coordinate over the upper half unit sphere
    in R^k; equals the volume of the unit ball in R^(k-1)."""
    return math.pi ** ((k - 1) / 2.0) / math.gamma((k + 1) / 2.0)


def _interior_integral(mu: MeasureSpec, domain: Domain, region, tol, hint, f) -> float:
    """Integral of f * weight * interior density over a ball region.

    Routes 1-d family measures through the exact anchor split whenever
    the singular anchor lies inside; otherwise falls back to plain
    adaptive quadrature.  On the whole space the boundary weight is
    identically one.
    """
    n = space_dim(domain)
    weighted = mu.interior_mode == "d_dx" and not isinstance(domain, WholeSpace)
    if mu.radial_profile is not None and hint is not None and n == 1:
        c = region.center[0]
        lo = c - region.radius
        hi = c + region.radius
        if region.clip_lo is not None:
            lo = max(lo, region.clip_lo)
        if region.clip_hi is not None:
            hi = min(hi, region.clip_hi)
        z = mu.radial_profile.anchor[0]
        if lo < hi and lo <= z <= hi:
            return _split_radial_1d(mu, domain, lo, hi, f, tol, weighted)

    if not weighted:
        extra = f
    elif f is None:
        extra = lambda pts: boundary_distance(domain, pts)
    else:
        extra = lambda pts: np.asarray(f(pts), float).reshape(-1) * boundary_distance(
            domain, pts
        )
    return _integrate_part(mu.interior_density, region, tol, hint, extra)


def _centered_ball_exact(mu: MeasureSpec, domain: Domain, center, sigma: float):
    """Closed-form mass of an anchor-centered ball in dimension >= 2,
    or None when the geometry falls outside the exact cases."""
    prof = mu.radial_profile
    n = space_dim(domain)
    if prof is None or n < 2 or mu.interior_density is None:
        return None
    anchor = np.asarray(prof.anchor, float)
    c = np.asarray(center, float).reshape(-1)
    scale_ref = 1.0 + float(np.max(np.abs(anchor)))
    if np.max(np.abs(c - anchor)) > 1e-12 * scale_ref:
        return None
    if isinstance(domain, WholeSpace):
        return _sphere_area(n) * prof.primitive(0.0, sigma)
    dz = float(boundary_distance(domain, anchor))
    if dz == 0.0:
        # anchor on the wall: the weight integrates to the half-ball moment
        return _half_ball_moment(n) * prof.primitive(1.0, sigma)
    if min(sigma, 1.0) < dz:
        # fully interior: the odd part of the weight cancels exactly
        return dz * _sphere_area(n) * prof.primitive(0.0, sigma)
    return None


def _atom_sum(mu: MeasureSpec, center, radius, weight=None):
    total = 0.0
    c = np.atleast_1d(np.asarray(center, float))
    for pt, m in mu.atoms:
        a = np.atleast_1d(np.asarray(pt, float))
        if np.linalg.norm(a - c) <= radius:
            total += m if weight is None else m * weight(a)
    return total


def ball_mass(
    mu: MeasureSpec, domain: Domain, center, sigma: float, tol: float = 1e-10
) -> float:
    """Measure of the closed ball of radius sigma around center,
    intersected with the closed domain.  tol is relative."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    total = 0.0
    hint = _hint_for(mu, center, sigma)

    if mu.interior_density is not None:
        exact = _centered_ball_exact(mu, domain, center, sigma)
        if exact is not None:
            total += exact
        else:
            total += _interior_integral(
                mu, domain, _ball_region(domain, center, sigma), tol, hint, None
            )

    if mu.boundary_density is not None:
        patch = _boundary_patch(domain, center, sigma)
        if isinstance(patch, BoundaryPatch):
            prof = mu.radial_profile
            n = space_dim(domain)
            if (
                prof is not None
                and prof.dim == n - 1
                and np.max(
                    np.abs(
                        np.asarray(patch.center, float) - np.asarray(prof.anchor, float)
                    )
                )
                <= 1e-12 * (1.0 + float(np.max(np.abs(np.asarray(prof.anchor)))))
            ):
                total += _sphere_area(n - 1) * prof.primitive(0.0, patch.radius)
            else:
                total += _integrate_part(mu.boundary_density, patch, tol, hint)
        elif patch is not None:
            for pt in patch:
                arr = np.asarray(pt, float)[None, :]
                total += float(mu.boundary_density(arr)[0])

    total += _atom_sum(mu, center, sigma)
    return mu.scale_factor * total


def weighted_ball_integral(
    mu: MeasureSpec, domain: Domain, center, s: float, tol: float = 1e-10
) -> float:
    """Integral of 1/(d(y) + sqrt(s)) over the ball of radius sqrt(s),
    against the measure."""
    if not s > 0:
        raise ValueError("s must be positive")
    if isinstance(domain, WholeSpace):
        raise ValueError("weighted ball integrals need a domain with boundary")
    rs = math.sqrt(s)
    total = 0.0
    hint = _hint_for(mu, center, rs)

    if mu.interior_density is not None:
        f = lambda pts: 1.0 / (boundary_distance(domain, pts) + rs)
        total += _interior_integral(
            mu, domain, _ball_region(domain, center, rs), tol, hint, f
        )

    if mu.boundary_density is not None:
        patch = _boundary_patch(domain, center, rs)

        def bdens(pts, off=None):
            return mu.boundary_density(pts, off) / rs

        if isinstance(patch, BoundaryPatch):
            prof = mu.radial_profile
            n = space_dim(domain)
            if (
                prof is not None
                and prof.dim == n - 1
                and np.max(
                    np.abs(
                        np.asarray(patch.center, float) - np.asarray(prof.anchor, float)
                    )
                )
                <= 1e-12 * (1.0 + float(np.max(np.abs(np.asarray(prof.anchor)))))
            ):
                total += _sphere_area(n - 1) * prof.primitive(0.0, patch.radius) / rs
            else:
                total += _integrate_part(bdens, patch, tol, hint)
        elif patch is not None:
            for pt in patch:
                arr = np.asarray(pt, float)[None, :]
                total += float(mu.boundary_density(arr)[0]) / rs

    total += _atom_sum(
        mu,
        center,
        rs,
        weight=lambda a: 1.0 / (boundary_distance(domain, a) + rs),
    )
    return mu.scale_factor * total


def pairing(
    mu: MeasureSpec,
    domain: Domain,
    f: Callable,
    tol: float = 1e-9,
    region: Optional[Ball] = None,
) -> float:
    """Integral of a (smooth, plain-signature) function against the measure.

    The integration region defaults to the measure's support ball; pass an
    explicit region when the measure has none (e.g. pure tables).
    """
    total = 0.0
    hint = None
    if region is None:
        if mu.support_center is None:
            if mu.interior_density is not None or mu.boundary_density is not None:
                raise ValueError("measure has no support ball; pass a region")
        else:
            region = _ball_region(domain, mu.support_center, mu.support_radius)
            hint = _hint_for(mu, mu.support_center, mu.support_radius)
    elif mu.support_center is not None:
        hint = _hint_for(mu, region.center, region.radius)

    if mu.interior_density is not None:
        total += _interior_integral(mu, domain, region, tol, hint, f)

    if mu.boundary_density is not None:
        patch = _boundary_patch(domain, region.center, region.radius)

        def bdens(pts, off=None):
            return mu.boundary_density(pts, off) * f(pts)

        if isinstance(patch, BoundaryPatch):
            total += _integrate_part(bdens, patch, tol, hint)
        elif patch is not None:
            for pt in patch:
                arr = np.asarray(pt, float)[None, :]
                total += float(mu.boundary_density(arr)[0]) * float(f(arr)[0])

    for pt, m in mu.atoms:
        arr = np.asarray(pt, float)[None, :]
        total += m * float(np.asarray(f(arr)).reshape(-1)[0])
    return mu.scale_factor * total


def from_table(xs, values, mode: str = "dx") -> MeasureSpec:
    """Piecewise-constant density from a sorted 1-D table.

    values[i] holds on [xs[i], xs[i+1]); the last value extends to the
    right, zero to the left of xs[0].
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if xs.size != values.size or xs.size == 0:
        raise ValueError("table needs equally many points and values")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table points must be strictly increasing")
    if np.any(values < 0):
        raise ValueError("densities must be nonnegative")

    def density(pts, off=None):
        x = np.asarray(pts, float)[:, 0]
        idx = np.searchsorted(xs, x, side="right") - 1
        out = np.where(idx >= 0, values[np.clip(idx, 0, values.size - 1)], 0.0)
        return out

    return MeasureSpec(interior_density=density, interior_mode=mode)
