"""Grid construction, the monotone iteration and its cross-checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mildheat.kernels import HalfSpace, Interval, boundary_distance, kernel_values
from mildheat.measures import MeasureSpec, SingularFamily, make_family, scale
from mildheat.solver import (
    DuhamelOperator,
    GridFunction,
    PicardRunner,
    SpaceTimeGrid,
    apply_initial_kernel,
    duhamel_step,
    fd_reference_solve,
    make_grid,
    picard_solve,
    restart_residual,
)

HS1 = HalfSpace(1)
IV1 = Interval(1.0)


def smooth_bump(center=1.0, width=0.5):
    def dens(pts):
        r = np.abs(pts[:, 0] - center)
        out = np.zeros(r.shape)
        m = r < width
        out[m] = np.exp(-1.0 / (1.0 - (r[m] / width) ** 2))
        return out

    return MeasureSpec(
        interior_density=dens,
        interior_mode="d_dx",
        support_center=(center,),
        support_radius=width,
    )


ZERO = MeasureSpec()


# ---------------------------------------------------------------------------
# grids


def test_make_grid_shape():
    g = make_grid(HS1, horizon=0.25, anchors=[(1.0,)], target_nodes=300)
    x = g.nodes[:, 0]
    assert x[0] == 0.0  # the wall is a node
    assert np.all(np.diff(x) > 0)
    assert np.all(np.diff(g.times) > 0)
    assert g.times[0] == pytest.approx(0.25e-3)
    assert g.times[-1] == pytest.approx(0.25)
    # geometric grading: consecutive ratios never exceed the declared one
    r = g.times[1:] / g.times[:-1]
    assert np.all(r <= 1.3 + 1e-9)
    # anchors become nodes
    assert np.min(np.abs(x - 1.0)) < 1e-12


def test_make_grid_validation():
    with pytest.raises(ValueError):
        make_grid(HS1, horizon=0.0)
    with pytest.raises(NotImplementedError):
        make_grid(HalfSpace(2), horizon=0.1)


@settings(max_examples=20, deadline=None)
@given(
    horizon=st.floats(0.01, 1.0),
    nodes=st.integers(60, 240),
    anchor=st.floats(0.1, 3.0),
)
def test_grid_invariants(horizon, nodes, anchor):
    g = make_grid(HS1, horizon, anchors=[(anchor,)], target_nodes=nodes)
    x = g.nodes[:, 0]
    assert np.all(np.diff(x) > 0) and x[0] == 0.0
    assert g.times.size >= 2
    assert g.times[0] > 0 and abs(g.times[-1] - horizon) < 1e-12 * horizon
    assert np.all(boundary_distance(HS1, g.nodes) >= 0)


def test_spacetime_grid_rejects_bad_inputs():
    nodes = np.linspace(0.0, 2.0, 11)[:, None]
    with pytest.raises(ValueError):
        SpaceTimeGrid(HS1, nodes, [0.2, 0.1], 0.25)  # not increasing
    with pytest.raises(ValueError):
        SpaceTimeGrid(HS1, nodes, [0.1], 0.25)  # single level
    with pytest.raises(ValueError):
        SpaceTimeGrid(HS1, nodes, [0.1, 0.3], 0.25)  # past the horizon
    with pytest.raises(ValueError):
        SpaceTimeGrid(HS1, -nodes[::-1], [0.1, 0.2], 0.25)  # outside domain


def test_grid_function_rejects_bad_fields():
    g = make_grid(HS1, 0.1, target_nodes=60)
    m, n = g.times.size, g.nodes.shape[0]
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros((m, n + 1)))
    with pytest.raises(ValueError):
        GridFunction(g, -np.ones((m, n)))
    bad = np.zeros((m, n))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        GridFunction(g, bad)
    leak = np.ones((m, n))  # nonzero on the wall node
    with pytest.raises(ValueError):
        GridFunction(g, leak)


def test_weighted_l1_matches_manual_sum():
    g = make_grid(HS1, 0.1, target_nodes=60)
    vals = np.ones((g.times.size, g.nodes.shape[0]))
    vals[:, g.boundary_mask] = 0.0
    f = GridFunction(g, vals)
    manual = float(np.sum(g.node_weights * g.node_boundary_distance * vals[-1]))
    assert f.weighted_l1() == pytest.approx(manual)


# ---------------------------------------------------------------------------
# first iterate


def test_initial_kernel_zero_measure():
    g = make_grid(HS1, 0.1, target_nodes=60)
    u1 = apply_initial_kernel(ZERO, HS1, g)
    assert np.all(u1.values == 0.0)


def test_initial_kernel_atom_is_exact():
    # a unit point mass evolves as the kernel itself, divided by the
    # boundary weight at the atom for the weighted pairing
    a = (0.7,)
    mu = MeasureSpec(atoms=((a, 1.0),))
    g = make_grid(HS1, 0.1, anchors=[a], target_nodes=80)
    u1 = apply_initial_kernel(mu, HS1, g)
    for k in (0, g.times.size - 1):
        t = float(g.times[k])
        ref = kernel_values(HS1, np.array(a), g.nodes, t) / 0.7
        ref[g.boundary_mask] = 0.0
        assert u1.values[k] == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_initial_kernel_density_dense_oracle():
    # midpoint-rule convolution at high resolution over the support
    mu = smooth_bump()
    g = make_grid(HS1, 0.25, anchors=[(1.0,)], target_nodes=400)
    u1 = apply_initial_kernel(mu, HS1, g)
    ys = np.linspace(0.5, 1.5, 20_000, endpoint=False) + 0.5 / 20_000
    dens = mu.interior_density(ys[:, None])
    dy = ys[1] - ys[0]
    sel = np.nonzero(g.interior_mask)[0][::12]
    for k in (0, g.times.size // 2, g.times.size - 1):
        t = float(g.times[k])
        ref = np.array(
            [float(np.sum(kernel_values(HS1, g.nodes[i], ys[:, None], t) * dens)) * dy
             for i in sel]
        )
        err = np.max(np.abs(u1.values[k, sel] - ref)) / np.max(ref)
        assert err < 0.01


# ---------------------------------------------------------------------------
# one iteration step


def test_duhamel_step_zero_iterate_returns_linear_part():
    mu = smooth_bump()
    g = make_grid(HS1, 0.1, anchors=[(1.0,)], target_nodes=120)
    u1 = apply_initial_kernel(mu, HS1, g)
    zero = GridFunction(g, np.zeros_like(u1.values))
    out = duhamel_step(zero, u1, 2.0, HS1)
    assert out.values == pytest.approx(u1.values)


def test_duhamel_step_dominates_linear_part():
    mu = smooth_bump()
    g = make_grid(HS1, 0.1, anchors=[(1.0,)], target_nodes=120)
    u1 = apply_initial_kernel(mu, HS1, g)
    out = duhamel_step(u1, u1, 2.0, HS1, mu=mu)
    assert np.all(out.values >= u1.values - 1e-15)


def test_duhamel_step_rejects_low_exponent():
    mu = smooth_bump()
    g = make_grid(HS1, 0.1, target_nodes=60)
    u1 = apply_initial_kernel(mu, HS1, g)
    with pytest.raises(ValueError):
        duhamel_step(u1, u1, 1.0, HS1)


def _second_iterate_oracle(a, m, p, x, t, domain):
    # brute-force space-time tensor quadrature of the memory integral;
    # s = q*q flattens the short-time concentration of the inner field
    qs = np.linspace(0.0, math.sqrt(t), 240, endpoint=False)
    qs += qs[1] / 2.0
    ys = np.linspace(0.0, 6.0, 4000, endpoint=False)
    ys += ys[1] / 2.0
    dy = ys[1] - ys[0]
    total = 0.0
    for q in qs:
        s = q * q
        u1y = kernel_values(domain, np.array([a]), ys[:, None], s) * (m / a)
        gy = kernel_values(domain, np.array([x]), ys[:, None], t - s)
        total += 2.0 * q * float(np.sum(gy * u1y**p)) * dy
    total *= qs[1] - qs[0] if qs.size > 1 else 0.0
    lin = float(kernel_values(domain, np.array([a]), np.array([[x]]), t)[0]) * m / a
    return lin + total


def test_second_iterate_matches_tensor_oracle():
    a, m, p = 1.0, 0.1, 2.0
    mu = MeasureSpec(atoms=(((a,), m),))
    g = make_grid(HS1, 0.1, anchors=[(a,)], target_nodes=240)
    u1 = apply_initial_kernel(mu, HS1, g)
    u2 = duhamel_step(u1, u1, p, HS1, mu=mu)
    k = g.times.size - 1
    t = float(g.times[k])
    idx = np.nonzero(g.interior_mask & (g.nodes[:, 0] < 3.0))[0][::20]
    ref = np.array(
        [_second_iterate_oracle(a, m, p, float(g.nodes[i, 0]), t, HS1) for i in idx]
    )
    err = np.max(np.abs(u2.values[k, idx] - ref)) / np.max(ref)
    assert err < 0.02


# ---------------------------------------------------------------------------
# the full iteration


def test_zero_measure_converges_immediately():
    out = picard_solve(ZERO, 2.0, 0.1, HS1, target_nodes=60)
    assert out.status == "Converged"
    assert out.iterations == 1
    assert np.all(out.final.values == 0.0)


def test_small_scale_converges_with_monotone_history():
    mu = make_family(SingularFamily("interior_point", (1.0,), 4.0), HS1)
    grid = make_grid(HS1, 0.25, anchors=[(1.0,)], target_nodes=200)
    runner = PicardRunner(HS1, mu, p=4.0, grid=grid)
    out = runner.solve(kappa=0.05)
    assert out.status == "Converged"
    sups = [h["sup"] for h in out.history]
    assert all(b >= a - 1e-12 for a, b in zip(sups, sups[1:]))
    diffs = [h["sup_diff"] for h in out.history]
    assert diffs[-1] < 1e-7


def test_large_scale_diverges():
    mu = make_family(SingularFamily("interior_point", (1.0,), 4.0), HS1)
    grid = make_grid(HS1, 0.25, anchors=[(1.0,)], target_nodes=200)
    runner = PicardRunner(HS1, mu, p=4.0, grid=grid)
    out = runner.solve(kappa=50.0)
    assert out.status == "Diverged"
    assert np.all(np.isfinite(out.final.values))


def test_iteration_budget_reports_inconclusive():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.1, HS1, target_nodes=80, max_iter=2, conv_tol=0.0)
    assert out.status == "Inconclusive"
    assert out.iterations == 2


def test_solver_validation():
    mu = smooth_bump()
    g = make_grid(HS1, 0.1, target_nodes=60)
    with pytest.raises(ValueError):
        PicardRunner(HS1, mu, p=1.0, grid=g)
    with pytest.raises(ValueError):
        picard_solve(mu, 2.0, 0.1, HS1, grid=g, max_iter=1)


def test_iterates_are_pointwise_monotone():
    mu = smooth_bump()
    g = make_grid(HS1, 0.1, anchors=[(1.0,)], target_nodes=120)
    op = DuhamelOperator(HS1, g)
    u1 = apply_initial_kernel(mu, HS1, g)
    u2 = duhamel_step(u1, u1, 2.0, HS1, operator=op, mu=mu)
    u3 = duhamel_step(u2, u1, 2.0, HS1, operator=op, mu=mu)
    assert np.all(u2.values >= u1.values - 1e-12)
    assert np.all(u3.values >= u2.values - 1e-12)


def test_scale_comparison_is_pointwise():
    # same grid and exponent: the smaller datum stays below at every
    # common iteration count
    base = smooth_bump()
    g = make_grid(HS1, 0.1, anchors=[(1.0,)], target_nodes=120)
    op = DuhamelOperator(HS1, g)
    lo = apply_initial_kernel(scale(base, 0.4), HS1, g)
    hi = apply_initial_kernel(scale(base, 1.0), HS1, g)
    for _ in range(2):
        lo = duhamel_step(lo, lo, 2.0, HS1, operator=op)
        hi = duhamel_step(hi, hi, 2.0, HS1, operator=op)
        assert np.all(lo.values <= hi.values + 1e-12)


def test_converged_field_vanishes_on_the_wall():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.1, HS1, target_nodes=120)
    assert out.status == "Converged"
    assert np.all(out.final.values[:, out.final.grid.boundary_mask] == 0.0)


def test_heat_only_weighted_mass_dissipates():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.25, HS1, target_nodes=300, nonlinearity=False)
    f = out.final
    masses = [f.weighted_l1(level=k) for k in range(f.grid.times.size)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(masses, masses[1:]))


# ---------------------------------------------------------------------------
# restart identity


def test_restart_residual_linear_mode():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.25, HS1, target_nodes=1600, nonlinearity=False)
    nt = out.final.grid.times.size
    rep = restart_residual(out.final, nt - 6, nt - 1, HS1)
    assert rep.max_rel_residual < 1e-4
    assert rep.t_start < rep.t_end


def test_restart_residual_converged_nonlinear():
    mu = make_family(SingularFamily("interior_point", (1.0,), 4.0), HS1)
    grid = make_grid(HS1, 0.25, anchors=[(1.0,)], target_nodes=400)
    runner = PicardRunner(HS1, mu, p=4.0, grid=grid)
    out = runner.solve(kappa=0.05)
    assert out.status == "Converged"
    nt = grid.times.size
    rep = restart_residual(out, nt - 6, nt - 1, HS1, p=4.0)
    assert rep.max_rel_residual < 0.05


def test_restart_refuses_diverged_run():
    mu = make_family(SingularFamily("interior_point", (1.0,), 4.0), HS1)
    grid = make_grid(HS1, 0.25, anchors=[(1.0,)], target_nodes=200)
    out = PicardRunner(HS1, mu, p=4.0, grid=grid).solve(kappa=50.0)
    assert out.status == "Diverged"
    with pytest.raises(ValueError):
        restart_residual(out, 0, 5, HS1, p=4.0)


def test_restart_rejects_bad_levels():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.1, HS1, target_nodes=80, nonlinearity=False)
    with pytest.raises(ValueError):
        restart_residual(out.final, 5, 5, HS1)
    with pytest.raises(ValueError):
        restart_residual(out.final, -1, 5, HS1)


# ---------------------------------------------------------------------------
# independent marching reference


def test_fd_zero_density():
    zero = MeasureSpec(interior_density=lambda pts: np.zeros(pts.shape[0]))
    fd = fd_reference_solve(zero, 2.0, 0.1, HS1)
    assert np.all(fd.values == 0.0)


def test_fd_heat_only_refinement_slope():
    mu = smooth_bump()
    ys = np.linspace(0.5, 1.5, 20_000, endpoint=False) + 0.5 / 20_000
    dens = mu.interior_density(ys[:, None])
    dy = ys[1] - ys[0]
    T = 0.1

    def exact(x):
        return float(np.sum(kernel_values(HS1, np.array([x]), ys[:, None], T) * dens)) * dy

    errs = []
    for nx, nt in ((100, 500), (200, 2000), (400, 8000)):
        fd = fd_reference_solve(mu, 2.0, T, HS1, resolution=(nx, nt),
                                nonlinearity=False, extent=8.0)
        xs = fd.grid.nodes[:, 0]
        sel = (xs > 0.2) & (xs < 4.0)
        ref = np.array([exact(x) for x in xs[sel]])
        errs.append(np.max(np.abs(fd.values[-1, sel] - ref)))
    slope = math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])
    assert slope[0] == pytest.approx(2.0, abs=0.3)
    assert slope[1] == pytest.approx(2.0, abs=0.3)


def test_fd_matches_picard_on_smooth_data():
    mu = smooth_bump()
    out = picard_solve(mu, 2.0, 0.25, HS1, target_nodes=400)
    assert out.status == "Converged"
    fd = fd_reference_solve(mu, 2.0, 0.25, HS1)
    g = out.final.grid
    j = int(np.argmin(np.abs(g.times - 0.125)))
    jf = int(np.argmin(np.abs(fd.grid.times - g.times[j])))
    # marching levels are dense; the nearest ones sit within half a step
    assert abs(float(fd.grid.times[jf] - g.times[j])) < 0.25 / 40
    ref = np.interp(g.nodes[:, 0], fd.grid.nodes[:, 0], fd.values[jf])
    num = out.final.values[j]
    err = np.max(np.abs(num - ref)) / np.max(ref)
    assert err < 0.03


def test_fd_rejects_unstable_resolution():
    mu = scale(smooth_bump(), 50.0)
    with pytest.raises(ValueError):
        fd_reference_solve(mu, 3.0, 0.1, HS1, resolution=(50, 10))
    with pytest.raises(ValueError):
        fd_reference_solve(smooth_bump(), 2.0, 0.1, HS1, resolution=(5, 4000))


# ---------------------------------------------------------------------------
# singular families end to end


def test_critical_family_mass_reaches_the_solver():
    # two fully independent paths: closed-form radial primitives on the
    # measure side, cell reduction plus transport on the solver side
    from mildheat.measures import ball_mass

    mu = make_family(SingularFamily("interior_point", (0.4,), 3.0, kappa=0.3), IV1)
    grid = make_grid(IV1, 0.05, anchors=[(0.4,)], target_nodes=800)
    runner = PicardRunner(IV1, mu, p=3.0, grid=grid)
    u1 = runner.initial_field()
    d = boundary_distance(IV1, grid.nodes)
    wm = float(np.trapezoid(u1.values[0] * d, grid.nodes[:, 0]))
    ref = ball_mass(mu, IV1, (0.4,), 1.0)
    assert wm == pytest.approx(ref, rel=5e-3)


def test_boundary_family_solves_on_interval():
    mu = make_family(SingularFamily("boundary_point", (0.0,), 3.0, kappa=0.2), IV1)
    grid = make_grid(IV1, 0.05, anchors=[(0.0,)], target_nodes=400)
    runner = PicardRunner(IV1, mu, p=3.0, grid=grid)
    out = runner.solve()
    assert out.status == "Converged"
    assert np.all(np.isfinite(out.final.values))
    f = out.final
    masses = [f.weighted_l1(level=k) for k in range(0, f.grid.times.size, 5)]
    assert masses[0] > 0
