"""Closed-form checks for the adaptive cubature engine."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mildheat.quadrature import (
    Ball,
    BoundaryPatch,
    HalfSpaceBox,
    QuadResult,
    integrate,
    integrate_time,
)


def test_polynomial_box_exact():
    # degree (2,3) is inside the exactness range of both rules
    f = lambda p: 3.0 * p[:, 0] ** 2 * 4.0 * p[:, 1] ** 3
    res = integrate(f, HalfSpaceBox((0.0, 0.0), (1.0, 1.0)), 1e-12)
    assert abs(res.value - 1.0) < 1e-13
    assert res.evaluations == 15**2


def test_gaussian_box():
    f = lambda p: np.exp(-p[:, 0] ** 2 - p[:, 1] ** 2)
    res = integrate(f, HalfSpaceBox((-8.0, 0.0), (8.0, 8.0)), 1e-10)
    exact = 0.5 * math.pi * math.erf(8.0)
    assert abs(res.value - exact) < 1e-10
    assert res.error_estimate < 1e-9


def test_disc_area():
    f = lambda p: np.ones(p.shape[0])
    res = integrate(f, Ball((0.3, -1.2), 2.0), 1e-12)
    assert abs(res.value - 4.0 * math.pi) < 1e-11


def test_ball_volume_3d():
    f = lambda p: np.ones(p.shape[0])
    res = integrate(f, Ball((0.0, 1.0, 2.0), 0.7), 1e-10)
    assert abs(res.value - 4.0 / 3.0 * math.pi * 0.7**3) < 1e-9


@pytest.mark.parametrize("a", [0.5, 2.0 / 3.0])
def test_singular_origin_1d(a):
    # int_{-1}^{1} |s|^{-a} ds = 2/(1-a)
    f = lambda p, off: np.abs(off[:, 0]) ** (-a)
    res = integrate(f, Ball((0.0,), 1.0), 1e-9, singularity_hint=((0.0,), -a))
    exact = 2.0 / (1.0 - a)
    assert abs(res.value - exact) < 5e-9
    assert res.error_estimate < 1e-8


def test_singular_shifted_anchor():
    # the offsets argument avoids cancellation at an anchor far from 0
    f = lambda p, off: np.abs(off[:, 0]) ** (-2.0 / 3.0)
    res = integrate(f, Ball((1.0,), 0.1), 1e-9, singularity_hint=((1.0,), -2.0 / 3.0))
    exact = 6.0 * 0.1 ** (1.0 / 3.0)
    assert abs(res.value - exact) < 5e-9


def test_weighted_singular_with_linear_factor():
    # int_{0.9}^{1.1} y |y-1|^{-2/3} dy: the linear part integrates to zero
    # by symmetry, leaving exactly 6 * 0.1^(1/3)
    f = lambda p, off: p[:, 0] * np.abs(off[:, 0]) ** (-2.0 / 3.0)
    res = integrate(f, Ball((1.0,), 0.1), 1e-9, singularity_hint=((1.0,), -2.0 / 3.0))
    assert abs(res.value - 6.0 * 0.1 ** (1.0 / 3.0)) < 5e-9


def test_clipped_ball_1d():
    f = lambda p: np.ones(p.shape[0])
    res = integrate(f, Ball((0.1,), 1.0, clip_lo=0.0), 1e-12)
    assert abs(res.value - 1.1) < 1e-12


def test_clip_to_empty():
    f = lambda p: np.ones(p.shape[0])
    res = integrate(f, Ball((5.0,), 1.0, clip_hi=0.0), 1e-12)
    assert res == QuadResult(0.0, 0.0, 1)


def test_polar_singular_center():
    # int_{B(0,1)} |x|^{-1} dx = 2 pi in two dimensions
    f = lambda p, off: np.hypot(off[:, 0], off[:, 1]) ** (-1.0)
    res = integrate(f, Ball((0.0, 0.0), 1.0), 1e-8, singularity_hint=((0.0, 0.0), -1.0))
    assert abs(res.value - 2.0 * math.pi) < 1e-7


def test_clipped_ball_singular_on_cut():
    # upper half disc of x2 / |x|: polar gives int sin * 1/2 * 2 = 1
    f = lambda p, off: p[:, 1] * (off[:, 0] ** 2 + off[:, 1] ** 2) ** (-0.5)
    res = integrate(
        f,
        Ball((0.0, 0.0), 1.0, clip_lo=0.0),
        1e-7,
        singularity_hint=((0.0, 0.0), -1.0),
    )
    assert abs(res.value - 1.0) < 1e-6


def test_ball_3d_singularities():
    f = lambda p, off: (off[:, 0] ** 2 + off[:, 1] ** 2 + off[:, 2] ** 2) ** (-1.0)
    res = integrate(
        f, Ball((0.0, 0.0, 0.0), 1.0), 1e-6, singularity_hint=((0.0, 0.0, 0.0), -2.0)
    )
    assert abs(res.value - 4.0 * math.pi) < 1e-5

    g = lambda p, off: (off[:, 0] ** 2 + off[:, 1] ** 2 + off[:, 2] ** 2) ** (-0.5)
    res = integrate(
        g,
        Ball((0.0, 0.0, 0.0), 1.0, clip_lo=0.0),
        1e-6,
        singularity_hint=((0.0, 0.0, 0.0), -1.0),
    )
    assert abs(res.value - math.pi) < 1e-5


def test_boundary_patch_point():
    f = lambda p: p[:, 0] ** 2 + 3.0
    res = integrate(f, BoundaryPatch((0.0,), 1.0), 1e-12)
    assert res.value == 3.0
    assert res.evaluations == 1


def test_boundary_patch_line():
    f = lambda p, off: np.abs(off[:, 0]) ** (-0.5)
    res = integrate(
        f, BoundaryPatch((0.5, 0.0), 1.5), 1e-9, singularity_hint=((0.5, 0.0), -0.5)
    )
    assert abs(res.value - 4.0 * math.sqrt(1.5)) < 1e-8


def test_boundary_patch_disc():
    # int over the unit disc on {x3 = 0} of |y|^{-1} dS = 2 pi
    f = lambda p, off: np.hypot(off[:, 0], off[:, 1]) ** (-1.0)
    res = integrate(
        f,
        BoundaryPatch((0.0, 0.0, 0.0), 1.0),
        1e-8,
        singularity_hint=((0.0, 0.0, 0.0), -1.0),
    )
    assert abs(res.value - 2.0 * math.pi) < 1e-7


def test_time_integral_singular_end():
    t = 0.7
    g = lambda s, ds: ds ** (-0.5)
    res = integrate_time(g, 0.0, t, 1e-9, endpoint_singularity=-0.5, singular_start=False)
    assert abs(res.value - 2.0 * math.sqrt(t)) < 5e-9


def test_time_integral_singular_start():
    g = lambda s, ds: ds ** (-0.5)
    res = integrate_time(g, 0.02, 1.0, 1e-9, endpoint_singularity=-0.5)
    assert abs(res.value - 2.0 * math.sqrt(0.98)) < 5e-9


def test_time_integral_smooth():
    res = integrate_time(lambda s: np.cos(s), 0.0, 1.5, 1e-12)
    assert abs(res.value - math.sin(1.5)) < 1e-12


def test_determinism():
    f = lambda p, off: np.abs(off[:, 0]) ** (-0.5) * np.exp(p[:, 0])
    a = integrate(f, Ball((2.0,), 0.5), 1e-9, singularity_hint=((2.0,), -0.5))
    b = integrate(f, Ball((2.0,), 0.5), 1e-9, singularity_hint=((2.0,), -0.5))
    assert a == b


def test_relative_mode_scale_equivariance():
    f1 = lambda p, off: np.abs(off[:, 0]) ** (-0.5)
    f2 = lambda p, off: 7.3e5 * np.abs(off[:, 0]) ** (-0.5)
    a = integrate(f1, Ball((2.0,), 0.5), 1e-10, singularity_hint=((2.0,), -0.5), relative=True)
    b = integrate(f2, Ball((2.0,), 0.5), 1e-10, singularity_hint=((2.0,), -0.5), relative=True)
    assert abs(b.value / a.value - 7.3e5) < 7.3e5 * 1e-13


def test_budget_exhaustion_reports_error():
    f = lambda p, off: np.abs(off[:, 0]) ** (-0.9)
    res = integrate(
        f,
        Ball((0.0,), 1.0),
        1e-14,
        singularity_hint=((0.0,), -0.9),
        max_evals=20_000,
    )
    assert res.error_estimate > 1e-14
    assert res.evaluations <= 20_000


@pytest.mark.parametrize(
    "bad",
    [
        lambda: Ball((0.0,), -1.0),
        lambda: BoundaryPatch((0.0, 1.0), 1.0),
        lambda: HalfSpaceBox((0.0, 0.0), (1.0,)),
        lambda: HalfSpaceBox((0.0, 1.0), (1.0, 1.0)),
    ],
)
def test_invalid_regions(bad):
    with pytest.raises(ValueError):
        bad()


def test_invalid_tolerance():
    with pytest.raises(ValueError):
        integrate(lambda p: np.ones(p.shape[0]), Ball((0.0,), 1.0), 0.0)


@settings(max_examples=25, deadline=None)
@given(
    coefs=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    a=st.floats(-2, 1),
    width=st.floats(0.5, 3),
)
def test_quadratic_exactness_property(coefs, a, width):
    c0, c1, c2 = coefs
    b = a + width
    f = lambda p: c0 + c1 * p[:, 0] + c2 * p[:, 0] ** 2
    res = integrate(f, HalfSpaceBox((a,), (b,)), 1e-12)
    exact = c0 * (b - a) + c1 * (b**2 - a**2) / 2 + c2 * (b**3 - a**3) / 3
    assert abs(res.value - exact) < 1e-10 * max(1.0, abs(exact))
