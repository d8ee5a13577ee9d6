"""Initial-trace recovery from solved fields.

The weighted field d(.)u(.,t) paired against compactly supported test
functions tends, as t -> 0, to the measure the solve started from.  This
module computes those pairings on grid functions, extrapolates them to
t = 0, and provides the kernel transform that underlies the consistency
argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import (
    Domain,
    WholeSpace,
    boundary_distance,
    kernel_values,
    space_dim,
    weighted_kernel,
)
from .cutoffs import smooth_step
from .measures import _ball_region
from .quadrature import integrate
from .solver import GridFunction

__all__ = [
    "TestFunction",
    "TraceEstimate",
    "bump_test_function",
    "plateau_test_function",
    "trace_pairing",
    "recover_trace",
    "psi_d_transform",
]


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function with known compact support."""

    __test__ = False  # keep pytest collection away despite the name

    fn: Callable
    center: tuple
    radius: float
    smooth: bool = True

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("support radius must be positive and finite")

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self.fn(pts), dtype=float).reshape(-1)


def _radial(pts, center):
    c = np.asarray(center, dtype=float)
    return np.sqrt(np.sum((pts - c[None, :]) ** 2, axis=1))


def bump_test_function(center, radius: float) -> TestFunction:
    """Smooth bump with peak value 1 at the center, vanishing at the
    support edge to all orders."""
    center = tuple(float(c) for c in np.atleast_1d(center))

    def fn(pts):
        r = _radial(pts, center) / radius
        out = np.zeros(r.shape)
        m = r < 1.0
        out[m] = np.exp(1.0 - 1.0 / (1.0 - r[m] ** 2))
        return out

    return TestFunction(fn, center, float(radius))


def plateau_test_function(center, radius: float) -> TestFunction:
    """Smooth cutoff equal to 1 inside half the support radius."""
    center = tuple(float(c) for c in np.atleast_1d(center))

    def fn(pts):
        r = _radial(pts, center)
        return np.array([smooth_step(2.0 * v / radius) for v in r])

    return TestFunction(fn, center, float(radius))


def _node_weight(grid) -> np.ndarray:
    d = grid.node_boundary_distance
    if np.all(np.isinf(d)):
        return grid.node_weights
    return grid.node_weights * d


def trace_pairing(
    u: GridFunction, psi: TestFunction, t_index: int, domain: Domain
) -> float:
    """Integral of psi * d * u(., t_k) over the domain."""
    grid = u.grid
    if not -grid.times.size <= t_index < grid.times.size:
        raise ValueError("time level out of range")
    w = _node_weight(grid) * psi(grid.nodes)
    return float(np.sum(w * u.values[t_index]))


@dataclass(frozen=True)
class TraceEstimate:
    """Pairing samples and their extrapolated t -> 0 limit."""

    times: np.ndarray
    pairings: np.ndarray
    limit: float
    error: float
    status: str  # ok | inconclusive

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("error estimate must be nonnegative")


def _extrapolate(s, v, degree):
    deg = min(degree, s.size - 1)
    return float(np.polyval(np.polyfit(s, v, deg), 0.0))


def recover_trace(
    u: GridFunction,
    psi: TestFunction,
    t_indices: Sequence[int],
    domain: Domain,
) -> TraceEstimate:
    """Extrapolate the pairing to t = 0.

    Quadratic extrapolation in sqrt(t) over the four smallest levels;
    the spread against shifted and lower-order fits is the error bar."""
    idx = sorted(set(int(i) % u.grid.times.size for i in t_indices))
    if len(idx) < 3:
        raise ValueError("need at least three distinct time levels")
    times = u.grid.times[idx]
    vals = np.array([trace_pairing(u, psi, i, domain) for i in idx])
    s = np.sqrt(times)

    main = _extrapolate(s[:4], vals[:4], 2)
    alts = [_extrapolate(s[:3], vals[:3], 1)]
    if len(idx) >= 5:
        alts.append(_extrapolate(s[1:5], vals[1:5], 2))
    err = max(abs(main - a) for a in alts)
    err += 1e-14 * max(abs(main), float(np.max(np.abs(vals))))
    status = "ok"
    if err > 0.25 * max(abs(main), 1e-300):
        status = "inconclusive"
    return TraceEstimate(times, vals, main, err, status)


def psi_d_transform(
    psi: TestFunction,
    t: float,
    domain: Domain,
    points,
    tol: float = 1e-9,
):
    """Kernel smoothing of d * psi and its weight-normalized form.

    Returns (smoothed, normalized) where smoothed(x) integrates the
    kernel against d(y) psi(y) and normalized divides by d(x), using the
    boundary-limit kernel branch where the quotient would cancel."""
    if not t > 0:
        raise ValueError("time must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != space_dim(domain):
        raise ValueError("point dimension does not match the domain")
    region = _ball_region(domain, psi.center, psi.radius)
    plain = isinstance(domain, WholeSpace)

    def dens(ys):
        v = psi(ys)
        if not plain:
            v = v * np.asarray(boundary_distance(domain, ys), float).reshape(-1)
        return v

    smoothed = np.empty(pts.shape[0])
    normalized = np.empty(pts.shape[0])
    rt = math.sqrt(t)
    for i, x in enumerate(pts):
        smoothed[i] = integrate(
            lambda ys: kernel_values(domain, x, ys, t) * dens(ys), region, tol
        ).value
        if plain:
            normalized[i] = smoothed[i]
            continue
        dx = float(boundary_distance(domain, x))
        if dx > 1e-6 * (dx + rt):
            normalized[i] = smoothed[i] / dx
        else:
            normalized[i] = integrate(
                lambda ys: np.array(
                    [weighted_kernel(domain, y, x, t) for y in ys]
                )
                * dens(ys),
                region,
                tol,
            ).value
    return smoothed, normalized
