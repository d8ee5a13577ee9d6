"""Mild solutions on graded space-time grids by monotone iteration.

The iteration scheme: start from the linear evolution of the data and
repeatedly add the memory integral of the p-th power.  All iterates are
nonnegative and pointwise nondecreasing, so the run either converges, or
grows past a ceiling and is reported as divergent at this resolution.

Discretization choices, in one place:

* time levels are geometric from ``horizon * first_time_fraction``;
  spatial nodes are graded toward the absorbing boundary and toward the
  data's singular anchors (one spatial dimension only);
* the memory integral uses exact kernel matrices, never interpolated
  kernels; matrices are cached on a geometric ladder of time offsets and
  every quadrature node snaps to the nearest ladder entry;
* each matrix row is normalized so the discrete evolution reproduces
  the exact surviving mass of a point source, which keeps coarse cells
  honest when the kernel is sharper than the mesh;
* below the first time level the iterate follows the shape of the
  linear evolution of the data (the ratio to its first-level values),
  which is exact for the first correction and conservative afterwards;
* the integral tail below ``tau_floor`` uses the identity approximation
  of the short-time kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erf as _erf
from scipy.linalg import solve_banded

from .kernels import (
    Domain,
    HalfSpace,
    Interval,
    WholeSpace,
    boundary_distance,
    kernel_values,
    space_dim,
    weighted_kernel,
)
from .measures import MeasureSpec
from .quadrature import integrate, Ball, _accepts_offsets

__all__ = [
    "SpaceTimeGrid",
    "GridFunction",
    "SolveOutcome",
    "RestartReport",
    "make_grid",
    "apply_initial_kernel",
    "duhamel_step",
    "PicardRunner",
    "picard_solve",
    "restart_residual",
    "fd_reference_solve",
]

_INTERIOR_CUT = 1e-3  # sup norms ignore nodes closer to the boundary


# ---------------------------------------------------------------------------
# grid and field types


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """Spatial nodes plus geometric time levels on one domain."""

    domain: Domain
    nodes: np.ndarray  # (n, N)
    times: np.ndarray  # (M,) strictly increasing, 0 < t <= horizon
    horizon: float

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        times = np.asarray(self.times, dtype=float).reshape(-1)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "times", times)
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if times.size < 2:
            raise ValueError("need at least two time levels")
        if not (np.all(np.diff(times) > 0) and times[0] > 0):
            raise ValueError("time levels must be positive and increasing")
        if times[-1] > self.horizon * (1 + 1e-12):
            raise ValueError("time levels exceed the horizon")
        if nodes.shape[1] != space_dim(self.domain):
            raise ValueError("node dimension does not match the domain")
        d = boundary_distance(self.domain, nodes)
        if np.any(np.asarray(d) < -1e-12):
            raise ValueError("grid nodes must lie in the closed domain")
        if nodes.shape[1] == 1:
            x = nodes[:, 0]
            if np.any(np.diff(x) <= 0):
                raise ValueError("one-dimensional nodes must be sorted unique")
            w = np.empty_like(x)
            w[1:-1] = 0.5 * (x[2:] - x[:-2])
            w[0] = 0.5 * (x[1] - x[0])
            w[-1] = 0.5 * (x[-1] - x[-2])
        else:
            w = np.ones(nodes.shape[0])
        object.__setattr__(self, "_weights", w)
        dist = np.asarray(boundary_distance(self.domain, nodes), dtype=float)
        object.__setattr__(self, "_bdist", dist.reshape(-1))

    @property
    def node_weights(self) -> np.ndarray:
        return self._weights

    @property
    def node_boundary_distance(self) -> np.ndarray:
        return self._bdist

    @property
    def boundary_mask(self) -> np.ndarray:
        return self._bdist == 0.0

    @property
    def interior_mask(self) -> np.ndarray:
        return self._bdist > _INTERIOR_CUT


@dataclass(eq=False)
class GridFunction:
    """Nonnegative field sampled on a grid; zero at boundary nodes."""

    grid: SpaceTimeGrid
    values: np.ndarray  # (M, n)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m, n = self.grid.times.size, self.grid.nodes.shape[0]
        if vals.shape != (m, n):
            raise ValueError(f"values must have shape {(m, n)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if np.any(vals < -1e-12):
            raise ValueError("field values must be nonnegative")
        vals = np.maximum(vals, 0.0)
        bad = self.grid.boundary_mask & (np.max(vals, axis=0) > 0)
        if np.any(bad):
            raise ValueError("boundary nodes must carry value zero")
        self.values = vals

    def sup_norm(self, interior_only: bool = True) -> float:
        mask = self.grid.interior_mask if interior_only else slice(None)
        sub = self.values[:, mask]
        return float(np.max(sub)) if sub.size else 0.0

    def weighted_l1(self, level: int = -1) -> float:
        """Mass of the field at one time level against the boundary
        weight (plain Lebesgue weight when there is no boundary)."""
        w = self.grid.node_weights
        d = self.grid.node_boundary_distance
        if np.all(np.isinf(d)):
            return float(np.sum(w * self.values[level]))
        return float(np.sum(w * d * self.values[level]))


@dataclass
class SolveOutcome:
    status: str  # Converged | Diverged | Inconclusive
    iterations: int
    final: GridFunction
    history: list
    diagnostics: str = ""


@dataclass(frozen=True)
class RestartReport:
    max_rel_residual: float
    node_count: int
    t_start: float
    t_end: float


# ---------------------------------------------------------------------------
# grid construction


def _domain_span(domain: Domain, anchors, horizon, extent):
    pad = 1.0 + 6.0 * math.sqrt(horizon)
    if isinstance(domain, Interval):
        return 0.0, domain.length
    if isinstance(domain, HalfSpace):
        hi = extent if extent is not None else max(a for a in anchors + [0.0]) + pad
        return 0.0, hi
    if extent is not None:
        return -extent, extent
    vals = anchors + [0.0]
    return min(vals) - pad, max(vals) + pad


def make_grid(
    domain: Domain,
    horizon: float,
    anchors: Sequence = (),
    *,
    target_nodes: int = 400,
    time_ratio: float = 1.3,
    first_time_fraction: float = 1e-3,
    min_spacing: float = 1e-4,
    extent: Optional[float] = None,
) -> SpaceTimeGrid:
    """Graded grid: geometric node clusters at the boundary and at each
    anchor, uniform background, geometric time levels."""
    if space_dim(domain) != 1:
        raise NotImplementedError("grids are built in one space dimension")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if time_ratio <= 1.0:
        raise ValueError("time_ratio must exceed 1")
    anc = [float(np.asarray(a, dtype=float).reshape(-1)[0]) for a in anchors]
    lo, hi = _domain_span(domain, anc, horizon, extent)
    span = hi - lo
    h_bg = span / max(40.0, 0.55 * target_nodes)

    specials = [lo, hi] + [a for a in anc if lo < a < hi]
    pts = list(np.arange(lo, hi, h_bg)) + [hi]
    for c in specials:
        w = min_spacing
        while w < h_bg:
            for cand in (c - w, c + w):
                if lo < cand < hi:
                    pts.append(cand)
            w *= 1.35
    pts = np.unique(np.asarray(pts, dtype=float))
    # drop generic points that crowd a special one, then merge greedily
    for c in specials:
        pts = pts[(np.abs(pts - c) > 0.3 * min_spacing) | (pts == c)]
    pts = np.unique(np.concatenate([pts, np.asarray(specials)]))
    keep = [pts[0]]
    for x in pts[1:]:
        if x - keep[-1] >= 0.2 * min_spacing:
            keep.append(x)
    if keep[-1] != hi:
        keep[-1] = hi
    nodes = np.asarray(keep)[:, None]

    t = horizon * first_time_fraction
    times = []
    while t < horizon * (1.0 - 1e-9):
        times.append(t)
        t *= time_ratio
    times.append(horizon)
    return SpaceTimeGrid(domain, nodes, np.asarray(times), horizon)


# ---------------------------------------------------------------------------
# linear evolution of the data on the grid nodes
#
# The integral of kernel * density over each mesh cell is computed from
# closed-form Gaussian moments with the density linearized per cell;
# cells hugging a singular anchor fall back to their exact mass placed
# at their exact centroid.  Both reductions keep every image term.


def _gauss_moments(u, c0, c1, t):
    """(∫ g, ∫ y g) over [c0, c1] for the 1-d heat kernel centred at u."""
    rt = 2.0 * math.sqrt(t)
    z0 = (u - c0) / rt
    z1 = (u - c1) / rt
    p = 0.5 * (_erf(z0) - _erf(z1))
    c = (4.0 * math.pi * t) ** -0.5
    g0 = c * np.exp(-z0 * z0)
    g1 = c * np.exp(-z1 * z1)
    m1 = u * p + 2.0 * t * (g0 - g1)
    return p, m1


def _image_terms(domain: Domain, x, t):
    """Signed kernel images: list of (sign, effective source position).

    The kernel value at y is  sum_k sign_k * g(pos_k - y)  with g the
    free Gaussian; this factorization lets cell moments reuse
    _gauss_moments for every domain type."""
    if isinstance(domain, WholeSpace):
        return [(1.0, x)]
    if isinstance(domain, HalfSpace):
        return [(1.0, x), (-1.0, -x)]
    L = domain.length
    m = max(1, int(math.ceil((L + math.sqrt(4.0 * t * math.log(1e16))) / (2.0 * L))))
    out = []
    for k in range(-m, m + 1):
        out.append((1.0, x - 2.0 * k * L))
        out.append((-1.0, 2.0 * k * L - x))
    return out


def _hat_transport_matrix(
    domain: Domain, targets: np.ndarray, nodes: np.ndarray, tau: float
) -> np.ndarray:
    """Transport matrix for a piecewise-linear field on sorted nodes.

    Entry (i, j) is the exact integral of the kernel from target i
    against the hat function of node j, so applying the matrix to nodal
    values transports the interpolant with no quadrature error at all.
    Row sums automatically equal the kernel mass inside the node window,
    which keeps edge rows honest and makes sharp kernels on coarse cells
    exact instead of aliased."""
    x = np.asarray(targets, dtype=float).reshape(-1)
    y = np.asarray(nodes, dtype=float).reshape(-1)
    h = np.diff(y)
    if y.size < 2 or np.any(h <= 0):
        raise ValueError("need at least two strictly increasing nodes")
    rt = 2.0 * math.sqrt(tau)
    gc = (4.0 * math.pi * tau) ** -0.5
    out = np.zeros((x.size, y.size))
    for sign, pos in _image_terms(domain, x, tau):
        pos = np.asarray(pos, dtype=float).reshape(-1)
        z = (y[None, :] - pos[:, None]) / rt
        e = _erf(z)
        g = gc * np.exp(-z * z)
        p = 0.5 * (e[:, 1:] - e[:, :-1])
        m1 = pos[:, None] * p + 2.0 * tau * (g[:, :-1] - g[:, 1:])
        out[:, :-1] += sign * (y[None, 1:] * p - m1) / h[None, :]
        out[:, 1:] += sign * (m1 - y[None, :-1] * p) / h[None, :]
    return np.maximum(out, 0.0)


class _InitialEvaluator:
    """Evaluates the linear evolution of a measure on fixed nodes for
    arbitrary times, scale factor removed (multiply by it afterwards)."""

    def __init__(self, domain: Domain, mu: MeasureSpec, nodes: np.ndarray):
        if space_dim(domain) != 1:
            raise NotImplementedError("initial fields are built in 1-d")
        self.domain = domain
        self.mu = mu
        self.x = np.asarray(nodes, dtype=float).reshape(-1)
        self._bdist = np.asarray(boundary_distance(domain, nodes), float).reshape(-1)
        self._build_cells()

    # -- mesh over the measure support

    def _support_range(self):
        domain, mu = self.domain, self.mu
        if isinstance(domain, Interval):
            lo, hi = 0.0, domain.length
        elif isinstance(domain, HalfSpace):
            lo, hi = 0.0, float(self.x[-1])
        else:
            lo, hi = float(self.x[0]), float(self.x[-1])
        if mu.support_center is not None and mu.support_radius is not None:
            c = float(np.asarray(mu.support_center).reshape(-1)[0])
            lo = max(lo, c - mu.support_radius)
            hi = min(hi, c + mu.support_radius)
        return lo, hi

    def _build_cells(self):
        mu = self.mu
        self._lin = None
        self._point_cells = []
        if mu.interior_density is None:
            return
        lo, hi = self._support_range()
        if not hi > lo:
            return
        anchor = None
        if mu.singularity is not None:
            anchor = float(np.asarray(mu.singularity[0]).reshape(-1)[0])
        specials = sorted({lo, hi} | ({anchor} if anchor is not None else set()))
        span = hi - lo

        breaks = [lo]
        pos = lo
        while pos < hi:
            dist = min(abs(pos - s) for s in specials)
            near_anchor = anchor is not None and abs(pos - anchor) <= dist + 1e-300
            floor = (1e-7 if near_anchor else 1e-5) * span
            step = max(floor, 0.06 * dist)
            # never step across a special point
            ahead = [s for s in specials if s > pos + 1e-12 * span]
            if ahead and pos + step > ahead[0]:
                step = ahead[0] - pos
            pos = min(pos + step, hi)
            breaks.append(pos)
        edges = np.asarray(breaks)
        edges[-1] = hi

        dens = self._effective_density
        c0, c1 = edges[:-1], edges[1:]
        width = c1 - c0
        singular = np.zeros(c0.size, dtype=bool)
        if anchor is not None:
            singular |= (np.abs(c0 - anchor) < 1e-12 * span) | (
                np.abs(c1 - anchor) < 1e-12 * span
            )
        vL = dens(c0)
        vR = dens(c1)
        with np.errstate(invalid="ignore"):
            singular |= ~np.isfinite(vL) | ~np.isfinite(vR)
            ratio = np.maximum(vL, vR) / np.maximum(np.minimum(vL, vR), 1e-300)
        singular |= ratio > 4.0

        smooth = ~singular & ((vL > 0) | (vR > 0))
        beta = np.where(smooth, (vR - vL) / width, 0.0)
        alpha = np.where(smooth, vL - beta * c0, 0.0)
        self._lin = (c0[smooth], c1[smooth], alpha[smooth], beta[smooth])

        for i in np.nonzero(singular)[0]:
            mass, cen = self._cell_mass_centroid(float(c0[i]), float(c1[i]))
            if mass > 0:
                self._point_cells.append((mass, cen))

    def _effective_density(self, ys):
        """Density against the plain kernel: the boundary weight is
        divided out in plain-mode measures and cancels otherwise."""
        mu = self.mu
        pts = np.asarray(ys, dtype=float).reshape(-1, 1)
        if mu.singularity is not None and _accepts_offsets(mu.interior_density):
            anchor = np.asarray(mu.singularity[0], dtype=float).reshape(-1)
            vals = mu.interior_density(pts, pts - anchor[None, :])
        else:
            vals = mu.interior_density(pts)
        vals = np.asarray(vals, dtype=float).reshape(-1)
        if mu.interior_mode == "dx":
            d = np.asarray(boundary_distance(self.domain, pts), float).reshape(-1)
            if np.any((d < 1e-12) & (vals > 0)):
                raise ValueError(
                    "plain-mode density must vanish at the absorbing boundary"
                )
            with np.errstate(divide="ignore"):
                vals = np.where(vals > 0, vals / np.maximum(d, 1e-300), 0.0)
        return vals

    def _dist(self, y: float) -> float:
        return float(
            np.asarray(boundary_distance(self.domain, np.array([[y]]))).reshape(-1)[0]
        )

    def _cell_mass_centroid(self, c0, c1):
        """Equivalent plain point mass of one mesh cell.

        Cells reaching the absorbing wall are reduced in weighted form
        (mass of d * density, then divided by the weight at the
        centroid): their plain effective density need not be integrable
        there.  Family cells touching the anchor use the closed-form
        radial primitives, the only way to capture the borderline
        profiles whose mass tail is invisible to quadrature."""
        mu = self.mu
        prof = mu.radial_profile
        hint = None
        anchor = None
        z = None
        if mu.singularity is not None:
            anchor = np.asarray(mu.singularity[0], dtype=float).reshape(-1)
            z = float(anchor[0])
            if c0 - 1e-12 <= z <= c1 + 1e-12:
                hint = ((z,), mu.singularity[1])

        if (
            prof is not None
            and prof.dim == 1
            and hint is not None
            and mu.interior_mode == "d_dx"
        ):
            eps = 1e-12 * max(abs(c0), abs(c1), 1.0)
            left = max(z - c0, 0.0)
            right = max(c1 - z, 0.0)
            dz = self._dist(z)
            if dz == 0.0:
                h = right if right > eps else left
                m_w = prof.primitive(1.0, h)
                if m_w <= 0:
                    return 0.0, 0.5 * (c0 + c1)
                off = prof.primitive(2.0, h) / m_w
                cen = z + off if right > eps else z - off
                return m_w / self._dist(cen), cen
            mass = 0.0
            m1 = 0.0
            if right > eps:
                mr = prof.primitive(0.0, right)
                mass += mr
                m1 += mr * z + prof.primitive(1.0, right)
            if left > eps:
                ml = prof.primitive(0.0, left)
                mass += ml
                m1 += ml * z - prof.primitive(1.0, left)
            if mass <= 0:
                return 0.0, 0.5 * (c0 + c1)
            return mass, min(max(m1 / mass, c0), c1)

        wall = not isinstance(self.domain, WholeSpace) and (
            self._dist(c0) == 0.0 or self._dist(c1) == 0.0
        )

        def raw(pts, off):
            if anchor is not None and _accepts_offsets(mu.interior_density):
                if off is None:
                    off = pts - anchor[None, :]
                vals = mu.interior_density(pts, off)
            else:
                vals = mu.interior_density(pts)
            vals = np.asarray(vals, dtype=float).reshape(-1)
            if mu.interior_mode == "dx":
                d = np.asarray(boundary_distance(self.domain, pts), float).reshape(-1)
                vals = np.where(vals > 0, vals / np.maximum(d, 1e-300), 0.0)
            return vals

        def f(pts, off=None):
            vals = raw(pts, off)
            if wall:
                d = np.asarray(boundary_distance(self.domain, pts), float).reshape(-1)
                vals = vals * d
            return vals

        def fm(pts, off=None):
            return f(pts, off) * pts[:, 0]

        region = Ball(center=(0.5 * (c0 + c1),), radius=0.5 * (c1 - c0))
        mass = integrate(f, region, 1e-10, singularity_hint=hint).value
        if mass <= 0:
            return 0.0, 0.5 * (c0 + c1)
        m1 = integrate(fm, region, 1e-10, singularity_hint=hint).value
        cen = min(max(m1 / mass, c0), c1)
        if wall:
            return mass / self._dist(cen), cen
        return mass, cen

    # -- evaluation

    def at_time(self, t: float) -> np.ndarray:
        x = self.x
        out = np.zeros(x.size)
        for sign, pos in _image_terms(self.domain, x[:, None], t):
            if self._lin is not None and self._lin[0].size:
                c0, c1, alpha, beta = self._lin
                p, m1 = _gauss_moments(pos, c0[None, :], c1[None, :], t)
                out += sign * (p @ alpha + m1 @ beta)
            for mass, cen in self._point_cells:
                c = (4.0 * math.pi * t) ** -0.5
                out += sign * mass * c * np.exp(-((pos[:, 0] - cen) ** 2) / (4.0 * t))
        for a, m in self.mu.atoms:
            pa = np.asarray(a, dtype=float).reshape(-1)
            da = float(boundary_distance(self.domain, pa))
            if da > 0 and np.isfinite(da):
                out += m * kernel_values(self.domain, pa, self.x[:, None], t) / da
            elif np.isinf(da):
                out += m * kernel_values(self.domain, pa, self.x[:, None], t)
            else:
                out += m * np.array(
                    [weighted_kernel(self.domain, (xi,), pa, t) for xi in x]
                )
        if self.mu.boundary_density is not None:
            for b in self._boundary_points():
                w = float(
                    np.asarray(
                        self.mu.boundary_density(np.asarray([b], dtype=float)[:, None])
                    ).reshape(-1)[0]
                )
                if w > 0:
                    out += w * np.array(
                        [weighted_kernel(self.domain, (xi,), (b,), t) for xi in x]
                    )
        out[self._bdist == 0.0] = 0.0
        return np.maximum(out, 0.0)

    def _boundary_points(self):
        if isinstance(self.domain, HalfSpace):
            return [0.0]
        if isinstance(self.domain, Interval):
            return [0.0, self.domain.length]
        return []

    def at_times(self, times) -> np.ndarray:
        return np.stack([self.at_time(float(t)) for t in np.asarray(times).reshape(-1)])


# ---------------------------------------------------------------------------
# discrete memory integral


class DuhamelOperator:
    """Precomputed quadrature plans and kernel matrices for the memory
    integral on one grid.  Matrices transport the piecewise-linear
    interpolant exactly (float32, shared across iterations and data)."""

    def __init__(
        self,
        domain: Domain,
        grid: SpaceTimeGrid,
        *,
        tau_floor_factor: float = 1e-2,
        sliver_floor_factor: float = 1e-3,
        ladder_ratio: Optional[float] = None,
    ):
        self.domain = domain
        self.grid = grid
        times = grid.times
        self.tau_floor = tau_floor_factor * times[0]
        g = max(float(times[1] / times[0]), 1.2)
        self._g = g

        top = float(times[-1])
        rho = ladder_ratio or math.sqrt(g)
        count = int(math.ceil(math.log(top / self.tau_floor) / math.log(rho))) + 1
        if count > 140:
            rho = (top / self.tau_floor) ** (1.0 / 139)
            count = 140
        self._ladder = top * rho ** -np.arange(count)
        self._log_rho = math.log(rho)
        self._mat = {}

        # standard subdivision of the window below the first level
        n_sliver = int(math.ceil(-math.log(sliver_floor_factor) / math.log(g)))
        t1 = float(times[0])
        self._sliver_edges = t1 * g ** -np.arange(n_sliver + 1)

        sliver_times = set()
        self._plans = []
        for ki in range(times.size):
            plan, s_extra = self._build_plan(ki)
            self._plans.append(plan)
            sliver_times |= s_extra
        self.sliver_times = np.asarray(sorted(sliver_times))

        # resolve sliver s-values to indices now that the set is fixed
        lookup = {s: i for i, s in enumerate(self.sliver_times)}
        for plan in self._plans:
            for e in plan:
                if e[2] == "sliver":
                    e[3] = lookup[e[3]]

    # -- plan construction

    def _snap(self, tau: float) -> int:
        idx = round(math.log(self._ladder[0] / tau) / self._log_rho)
        return int(min(max(idx, 0), self._ladder.size - 1))

    def _kernel_layer(self, target, gap):
        """Geometric refinement of the newest time window, where the
        kernel sharpens toward the identity."""
        pieces = []
        hi = gap
        while hi > self.tau_floor * (1 + 1e-12):
            lo = max(hi / self._g, self.tau_floor)
            tau = math.sqrt(lo * hi)
            pieces.append((self._snap(tau), hi - lo, target - tau))
            hi = lo
        return pieces

    def _build_plan(self, ki):
        times = self.grid.times
        t_k = float(times[ki])
        plan = []
        s_extra = set()

        def add(tau_idx, weight, s):
            if s >= times[0]:
                j = int(np.searchsorted(times, s, side="right") - 1)
                j = min(max(j, 0), times.size - 2)
                theta = (s - times[j]) / (times[j + 1] - times[j])
                plan.append([tau_idx, weight, "levels", (j, float(theta))])
            else:
                s = float(s)
                s_extra.add(s)
                plan.append([tau_idx, weight, "sliver", s])

        lo_gap = float(times[ki - 1]) if ki > 0 else self._sliver_edges[1]
        for idx, w, s in self._kernel_layer(t_k, t_k - lo_gap):
            add(idx, w, s)

        # full history windows at their geometric midpoints
        for j in range(1, ki):
            s = math.sqrt(times[j - 1] * times[j])
            add(self._snap(t_k - s), float(times[j] - times[j - 1]), s)

        # data window below the first level
        edges = self._sliver_edges
        start = 1 if ki == 0 else 0
        for i in range(start, edges.size - 1):
            s = math.sqrt(edges[i] * edges[i + 1])
            add(self._snap(t_k - s), float(edges[i] - edges[i + 1]), s)
        return plan, s_extra

    # -- matrices

    def _matrix(self, idx: int) -> np.ndarray:
        mat = self._mat.get(idx)
        if mat is None:
            tau = float(self._ladder[idx])
            mat = self._assemble(tau)
            self._mat[idx] = mat
        return mat

    def _assemble(self, tau: float) -> np.ndarray:
        nodes = self.grid.nodes
        xs = self.grid.nodes[:, 0]
        a = _hat_transport_matrix(self.domain, xs, xs, tau)
        a[self.grid.boundary_mask, :] = 0.0
        return a.astype(np.float32)

    # -- application

    def apply(self, u_levels: np.ndarray, p: float, sliver_ratio=None) -> np.ndarray:
        """Memory integral of the p-th power of the interpolated field.

        ``sliver_ratio`` holds the field shape below the first level as
        multiples of the first-level values, one row per sliver time;
        omitted it defaults to frozen first-level values.
        """
        times = self.grid.times
        out = np.zeros_like(u_levels)
        cache = {}
        for ki, plan in enumerate(self._plans):
            acc = np.zeros(u_levels.shape[1])
            for tau_idx, weight, kind, ref in plan:
                key = (kind, ref)
                v = cache.get(key)
                if v is None:
                    if kind == "levels":
                        j, theta = ref
                        u_s = (1.0 - theta) * u_levels[j] + theta * u_levels[j + 1]
                    elif sliver_ratio is None:
                        u_s = u_levels[0]
                    else:
                        u_s = u_levels[0] * sliver_ratio[ref]
                    v = (u_s ** p).astype(np.float32)
                    cache[key] = v
                acc += weight * (self._matrix(tau_idx) @ v)
            # identity tail of the memory integral
            acc += self.tau_floor * u_levels[ki] ** p
            acc[self.grid.boundary_mask] = 0.0
            out[ki] = acc
        return out


# ---------------------------------------------------------------------------
# public operations


def apply_initial_kernel(
    mu: MeasureSpec, domain: Domain, grid: SpaceTimeGrid
) -> GridFunction:
    """Linear evolution of the data measure sampled on the grid."""
    ev = _InitialEvaluator(domain, mu, grid.nodes)
    vals = mu.scale_factor * ev.at_times(grid.times)
    if not np.all(np.isfinite(vals)):
        raise ValueError("initial field is not finite; data too singular")
    return GridFunction(grid, vals)


def _sliver_ratio(ev: _InitialEvaluator, op: DuhamelOperator, base_first):
    if op.sliver_times.size == 0:
        return None
    u1s = ev.at_times(op.sliver_times)
    with np.errstate(invalid="ignore", divide="ignore"):
        rat = np.where(base_first > 0, u1s / np.maximum(base_first, 1e-300), 0.0)
    return rat


def duhamel_step(
    u_j: GridFunction,
    u1: GridFunction,
    p: float,
    domain: Domain,
    operator: Optional[DuhamelOperator] = None,
    mu: Optional[MeasureSpec] = None,
) -> GridFunction:
    """One iteration: the linear part plus the memory integral of u_j^p.

    With ``mu`` the window below the first level follows the data's
    linear-evolution shape; otherwise first-level values are frozen."""
    if not p > 1:
        raise ValueError("exponent must exceed 1")
    grid = u_j.grid
    op = operator or DuhamelOperator(domain, grid)
    rat = None
    if mu is not None:
        ev = _InitialEvaluator(domain, mu, grid.nodes)
        rat = _sliver_ratio(ev, op, ev.at_time(float(grid.times[0])))
    with np.errstate(over="raise"):
        try:
            duh = op.apply(u_j.values, p, rat)
        except FloatingPointError as exc:
            raise OverflowError("power overflow in the memory integral") from exc
    return GridFunction(grid, u1.values + duh)


class PicardRunner:
    """Shared state for repeated solves on one grid: kernel matrices,
    the data's linear evolution (linear in the scale factor), and the
    below-first-level shape.  Built once, solved for many scalings."""

    def __init__(
        self,
        domain: Domain,
        mu: MeasureSpec,
        p: float,
        grid: SpaceTimeGrid,
        **op_options,
    ):
        if not p > 1:
            raise ValueError("exponent must exceed 1")
        self.domain = domain
        self.mu = mu
        self.p = p
        self.grid = grid
        self.op = DuhamelOperator(domain, grid, **op_options)
        self._ev = _InitialEvaluator(domain, mu, grid.nodes)
        self._base = self._ev.at_times(grid.times)  # scale factor 1
        if not np.all(np.isfinite(self._base)):
            raise ValueError("initial field is not finite; data too singular")
        self._rat = _sliver_ratio(self._ev, self.op, self._base[0])

    def initial_field(self, kappa: Optional[float] = None) -> GridFunction:
        k = self.mu.scale_factor if kappa is None else float(kappa)
        return GridFunction(self.grid, k * self._base)

    def solve(
        self,
        kappa: Optional[float] = None,
        *,
        max_iter: int = 30,
        conv_tol: float = 1e-7,
        blowup_ceiling: float = 1e8,
        nonlinearity: bool = True,
    ) -> SolveOutcome:
        if max_iter < 2:
            raise ValueError("max_iter must be at least 2")
        grid = self.grid
        k = self.mu.scale_factor if kappa is None else float(kappa)
        u1 = k * self._base
        interior = grid.interior_mask
        wl1 = grid.node_weights * np.where(
            np.isinf(grid.node_boundary_distance), 1.0, grid.node_boundary_distance
        )

        u = u1
        history = []
        if not nonlinearity:
            gf = GridFunction(grid, u1)
            history.append(
                {"iteration": 1, "sup": gf.sup_norm(), "weighted_l1": gf.weighted_l1(),
                 "sup_diff": 0.0, "l1_diff": 0.0}
            )
            return SolveOutcome("Converged", 1, gf, history, "nonlinearity disabled")

        prev_sup = float(np.max(u[:, interior])) if np.any(interior) else 0.0
        for it in range(1, max_iter + 1):
            if prev_sup > blowup_ceiling:
                return self._diverged(u, history, it, "ceiling exceeded")
            with np.errstate(over="ignore", invalid="ignore"):
                duh = self.op.apply(u, self.p, self._rat)
            if not np.all(np.isfinite(duh)):
                return self._diverged(u, history, it, "overflow in the power term")
            new = u1 + duh
            sup_now = float(np.max(new[:, interior])) if np.any(interior) else 0.0
            diff = new - u
            sup_diff = float(np.max(np.abs(diff[:, interior]))) if np.any(interior) else 0.0
            l1_diff = float(np.sum(wl1 * np.abs(diff[-1])))
            history.append(
                {
                    "iteration": it,
                    "sup": sup_now,
                    "weighted_l1": float(np.sum(wl1 * new[-1])),
                    "sup_diff": sup_diff,
                    "l1_diff": l1_diff,
                }
            )
            if sup_now > blowup_ceiling or (it > 3 and sup_now > 2.0 * prev_sup):
                return self._diverged(new, history, it, "growth past the ceiling"
                                      if sup_now > blowup_ceiling else "sup doubling")
            if sup_diff < conv_tol and l1_diff < conv_tol:
                return SolveOutcome("Converged", it, GridFunction(grid, new), history)
            u = new
            prev_sup = sup_now
        return SolveOutcome(
            "Inconclusive", max_iter, GridFunction(grid, u), history,
            "iteration budget exhausted",
        )

    def _diverged(self, u, history, it, why) -> SolveOutcome:
        # the final field keeps the last finite snapshot of the run
        ceiling = np.float64(1e300)
        safe = np.where(np.isfinite(u), np.minimum(u, ceiling), 0.0)
        return SolveOutcome("Diverged", it, GridFunction(self.grid, safe), history, why)


def picard_solve(
    mu: MeasureSpec,
    p: float,
    horizon: float,
    domain: Domain,
    grid: Optional[SpaceTimeGrid] = None,
    *,
    max_iter: int = 30,
    conv_tol: float = 1e-7,
    blowup_ceiling: float = 1e8,
    nonlinearity: bool = True,
    **grid_options,
) -> SolveOutcome:
    """Monotone iteration from the data's linear evolution."""
    if grid is None:
        anchors = []
        if mu.singularity is not None:
            anchors.append(mu.singularity[0])
        anchors += [a for a, _ in mu.atoms]
        grid = make_grid(domain, horizon, anchors, **grid_options)
    try:
        runner = PicardRunner(domain, mu, p, grid)
    except ValueError as exc:
        empty = GridFunction(grid, np.zeros((grid.times.size, grid.nodes.shape[0])))
        return SolveOutcome("Inconclusive", 0, empty, [], str(exc))
    return runner.solve(
        max_iter=max_iter,
        conv_tol=conv_tol,
        blowup_ceiling=blowup_ceiling,
        nonlinearity=nonlinearity,
    )


def restart_residual(
    u: Union[SolveOutcome, GridFunction],
    t1_index: int,
    t2_index: int,
    domain: Domain,
    p: Optional[float] = None,
    *,
    interior_margin: float = 0.05,
) -> RestartReport:
    """Consistency of the field with its own evolution between two
    levels: value at the later level vs kernel transport from the
    earlier one plus the memory integral in between."""
    if isinstance(u, SolveOutcome):
        if u.status != "Converged":
            raise ValueError("restart check needs a converged solve")
        u = u.final
    grid = u.grid
    times = grid.times
    if not 0 <= t1_index < t2_index < times.size:
        raise ValueError("need valid level indices t1 < t2")
    t1, t2 = float(times[t1_index]), float(times[t2_index])
    nodes = grid.nodes

    def matrix(tau):
        return _hat_transport_matrix(domain, nodes[:, 0], nodes[:, 0], tau)

    rhs = matrix(t2 - t1) @ u.values[t1_index]

    if p is not None:
        tau_floor = 1e-3 * (t2 - t1)

        def interp(s):
            j = int(np.searchsorted(times, s, side="right") - 1)
            j = min(max(j, 0), times.size - 2)
            th = (s - times[j]) / (times[j + 1] - times[j])
            return ((1 - th) * u.values[j] + th * u.values[j + 1]) ** p

        for j in range(t1_index + 1, t2_index):
            s = math.sqrt(times[j - 1] * times[j]) if j > t1_index + 1 else 0.5 * (
                times[t1_index] + times[t1_index + 1]
            )
            w = float(times[j] - times[j - 1])
            rhs += w * (matrix(t2 - s) @ interp(s))
        hi = float(times[t2_index] - times[t2_index - 1])
        g = 1.5
        while hi > tau_floor:
            lo = max(hi / g, tau_floor)
            tau = math.sqrt(lo * hi)
            rhs += (hi - lo) * (matrix(tau) @ interp(t2 - tau))
            hi = lo
        rhs += tau_floor * u.values[t2_index] ** p

    scale = 1.0
    if isinstance(domain, HalfSpace):
        scale = float(nodes[-1, 0])
    elif isinstance(domain, Interval):
        scale = domain.length
    mask = grid.node_boundary_distance > interior_margin * scale
    if isinstance(domain, HalfSpace):
        mask &= nodes[:, 0] < 0.7 * nodes[-1, 0]
    if not np.any(mask):
        raise ValueError("no interior check nodes at this margin")
    lhs = u.values[t2_index]
    floor = 1e-12 * max(float(np.max(lhs[mask])), 1e-300)
    res = np.abs(lhs[mask] - rhs[mask]) / np.maximum(lhs[mask], floor)
    return RestartReport(float(np.max(res)), int(mask.sum()), t1, t2)


# ---------------------------------------------------------------------------
# independent finite-difference reference (one dimension, bounded data)


def fd_reference_solve(
    mu_smooth: MeasureSpec,
    p: float,
    horizon: float,
    domain: Domain,
    resolution=(400, 4000),
    *,
    nonlinearity: bool = True,
    extent: Optional[float] = None,
    saved_levels: int = 50,
) -> GridFunction:
    """Implicit-diffusion, explicit-reaction marching scheme; second
    order in space, first order in time.  Used only to cross-check the
    iteration on smooth bounded data."""
    if space_dim(domain) != 1:
        raise ValueError("reference scheme is one-dimensional")
    if mu_smooth.interior_density is None or mu_smooth.singularity is not None:
        raise ValueError("reference scheme needs a bounded density")
    if mu_smooth.atoms or mu_smooth.boundary_density is not None:
        raise ValueError("reference scheme needs a plain density")
    nx, nt = resolution
    if nx < 10 or nt < 10:
        raise ValueError("invalid resolution")
    lo, hi = _domain_span(domain, [], horizon, extent)
    xs = np.linspace(lo, hi, nx + 1)
    h = xs[1] - xs[0]
    dt = horizon / nt

    u0 = mu_smooth.scale_factor * np.asarray(
        mu_smooth.interior_density(xs[:, None]), dtype=float
    ).reshape(-1)
    if not np.all(np.isfinite(u0)):
        raise ValueError("reference scheme needs a bounded density")
    w = u0.copy()
    w[0] = w[-1] = 0.0

    n_in = nx - 1
    band = np.zeros((3, n_in))
    band[0, 1:] = -dt / h**2
    band[1, :] = 1.0 + 2.0 * dt / h**2
    band[2, :-1] = -dt / h**2

    every = max(1, nt // saved_levels)
    saved_t, saved_u = [], []
    for m in range(1, nt + 1):
        inner = w[1:-1]
        if nonlinearity:
            if p * dt * float(np.max(inner)) ** (p - 1.0) > 1.0:
                raise ValueError(
                    "invalid resolution: reaction term violates the step limit"
                )
            rhs = inner + dt * inner**p
        else:
            rhs = inner.copy()
        w = np.concatenate([[0.0], solve_banded((1, 1), band, rhs), [0.0]])
        if m % every == 0 or m == nt:
            saved_t.append(m * dt)
            saved_u.append(w.copy())
    if len(saved_t) >= 2 and saved_t[-1] == saved_t[-2]:
        saved_t.pop()
        saved_u.pop()
    grid = SpaceTimeGrid(domain, xs[:, None], np.asarray(saved_t), horizon)
    return GridFunction(grid, np.maximum(np.asarray(saved_u), 0.0))
