"""Config-driven experiment runner and the scale-threshold dichotomy sweep.

Commands are described by a flat INI file with one section per concern
(run, domain, measure, solve, tolerances, plus one section named after
the command).  Every run writes a ``manifest.jsonl`` with the full
config echo, library versions and timings, and one or more CSV data
files whose bytes depend only on the config.
"""

import configparser
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import click
import numpy as np
import scipy

from . import __version__
from . import criteria as crit
from .kernels import (
    Domain,
    HalfSpace,
    Interval,
    WholeSpace,
    boundary_distance,
    heat_kernel,
    space_dim,
    survival_mass,
    verify_semigroup,
)
from .measures import MeasureSpec, SingularFamily, make_family, pairing, scale
from .solver import PicardRunner, SpaceTimeGrid, make_grid, restart_residual
from .trace import bump_test_function, recover_trace

SCHEMA_VERSION = 1
COMMANDS = ("kernel-check", "solve", "trace", "criteria", "dichotomy")
RATIO_TARGET = 1.2


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    out: str
    seed: int
    domain_kind: str
    domain_size: float
    measure: dict
    solve: dict
    tolerances: dict
    extra: dict


_SOLVE_DEFAULTS = {
    "p": None,
    "horizon": 1.0,
    "target_nodes": 400.0,
    "time_ratio": 1.3,
    "first_time_fraction": 1e-3,
    "min_spacing": 1e-4,
    "extent": None,
}

_TOL_DEFAULTS = {
    "conv_tol": 1e-7,
    "blowup_ceiling": 1e8,
    "max_iter": 30.0,
}


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _parse_atoms(text: str) -> tuple:
    atoms = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pos, _, mass = part.rpartition(":")
        atoms.append((_floats(pos), float(mass)))
    return tuple(atoms)


def load_config(path, command: Optional[str] = None, out: Optional[str] = None) -> RunConfig:
    """Parse and validate an INI run description.

    Validation is collective: every violated field is listed in the
    single raised error, not just the first one found.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    errors = []
    if not read:
        raise ValueError(f"config file {path} is unreadable")

    def get(section, key, cast=str, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                errors.append(f"[{section}] {key}: required")
            return default
        raw = cp.get(section, key).strip()
        try:
            return cast(raw)
        except (TypeError, ValueError):
            errors.append(f"[{section}] {key}: cannot parse {raw!r}")
            return default

    command = command or get("run", "command", required=True)
    if command is not None and command not in COMMANDS:
        errors.append(f"[run] command: {command!r} not one of {COMMANDS}")
    out = out or get("run", "out", default="runs/out")
    seed = get("run", "seed", int, default=0)

    domain_kind = get("domain", "kind", default="halfspace")
    if domain_kind not in ("halfspace", "interval", "wholespace"):
        errors.append(f"[domain] kind: unknown {domain_kind!r}")
        domain_kind = "halfspace"
    if domain_kind == "interval":
        domain_size = get("domain", "length", float, default=1.0)
        if domain_size is not None and not domain_size > 0:
            errors.append("[domain] length: must be positive")
    else:
        domain_size = get("domain", "dim", float, default=1.0)
        if domain_size is not None and (domain_size < 1 or domain_size != int(domain_size)):
            errors.append("[domain] dim: must be a positive integer")

    measure = {"kind": get("measure", "kind", default="zero")}
    kind = measure["kind"]
    if kind == "family":
        measure["family"] = get("measure", "family", required=True)
        if measure["family"] not in ("interior_point", "boundary_point", "boundary_surface"):
            errors.append(f"[measure] family: unknown {measure['family']!r}")
        measure["anchor"] = get("measure", "anchor", _floats, default=(0.0,))
        measure["p"] = get("measure", "p", float, required=True)
        measure["kappa"] = get("measure", "kappa", float, default=1.0)
        if measure["kappa"] is not None and not measure["kappa"] > 0:
            errors.append("[measure] kappa: must be positive")
    elif kind == "atoms":
        measure["atoms"] = get("measure", "atoms", _parse_atoms, required=True)
        if measure["atoms"] is not None and not measure["atoms"]:
            errors.append("[measure] atoms: empty list")
    elif kind == "uniform":
        measure["factor"] = get("measure", "factor", float, default=1.0)
    elif kind == "bump":
        measure["center"] = get("measure", "center", _floats, default=(1.0,))
        measure["width"] = get("measure", "width", float, default=0.5)
        measure["factor"] = get("measure", "factor", float, default=1.0)
        if measure["width"] is not None and not measure["width"] > 0:
            errors.append("[measure] width: must be positive")
    elif kind != "zero":
        errors.append(f"[measure] kind: unknown {kind!r}")

    solve = {}
    for key, dv in _SOLVE_DEFAULTS.items():
        solve[key] = get("solve", key, float, default=dv)
    if solve["p"] is not None and not solve["p"] > 1:
        errors.append("[solve] p: must exceed 1")
    if solve["horizon"] is not None and not solve["horizon"] > 0:
        errors.append("[solve] horizon: must be positive")

    tolerances = {}
    for key, dv in _TOL_DEFAULTS.items():
        tolerances[key] = get("tolerances", key, float, default=dv)
        if tolerances[key] is not None and not tolerances[key] > 0:
            errors.append(f"[tolerances] {key}: must be positive")

    section = {
        "kernel-check": "kernel",
        "solve": "solve",
        "trace": "trace",
        "criteria": "criteria",
        "dichotomy": "dichotomy",
    }.get(command or "", "")
    extra = dict(cp[section]) if section and cp.has_section(section) else {}

    if errors:
        raise ValueError("invalid config:\n" + "\n".join(errors))
    return RunConfig(
        command=command,
        out=str(out),
        seed=int(seed),
        domain_kind=domain_kind,
        domain_size=float(domain_size),
        measure=measure,
        solve=solve,
        tolerances=tolerances,
        extra=extra,
    )


def build_domain(cfg: RunConfig) -> Domain:
    if cfg.domain_kind == "interval":
        return Interval(cfg.domain_size)
    if cfg.domain_kind == "wholespace":
        return WholeSpace(int(cfg.domain_size))
    return HalfSpace(int(cfg.domain_size))


def build_measure(cfg: RunConfig, domain: Domain) -> MeasureSpec:
    spec = cfg.measure
    kind = spec["kind"]
    n = space_dim(domain)
    if kind == "family":
        fam = SingularFamily(spec["family"], spec["anchor"], spec["p"], spec["kappa"])
        return make_family(fam, domain)
    if kind == "atoms":
        return MeasureSpec(atoms=spec["atoms"])
    if kind == "uniform":
        f = float(spec["factor"])
        return MeasureSpec(
            interior_density=lambda pts, off=None: np.full(len(np.atleast_2d(pts)), f)
        )
    if kind == "bump":
        center = np.asarray(spec["center"], float)
        width = float(spec["width"])
        factor = float(spec["factor"])
        if center.size != n:
            raise ValueError("bump center does not match the domain dimension")

        def dens(pts, off=None):
            r = np.linalg.norm(np.atleast_2d(pts) - center, axis=1) / width
            out = np.zeros(r.shape)
            m = r < 1.0
            out[m] = factor * np.exp(-1.0 / (1.0 - r[m] ** 2))
            return out

        return MeasureSpec(
            interior_density=dens,
            support_center=tuple(center),
            support_radius=width,
        )
    return MeasureSpec(
        interior_density=lambda pts, off=None: np.zeros(len(np.atleast_2d(pts)))
    )


# ---------------------------------------------------------------------------
# artifacts


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, columns, rows) -> int:
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return len(lines) - 1


class Manifest:
    """Append-only JSON-lines run record."""

    def __init__(self, path: Path):
        self.path = path
        self._t0 = time.monotonic()
        path.write_text("", encoding="ascii")

    def event(self, kind: str, **payload):
        rec = {"schema_version": SCHEMA_VERSION, "event": kind}
        rec.update(payload)
        with self.path.open("a", encoding="ascii") as fh:
            fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")

    def timing(self, step: str):
        self.event("timing", step=step, seconds=round(time.monotonic() - self._t0, 3))


# ---------------------------------------------------------------------------
# dichotomy sweep


@dataclass(frozen=True)
class DichotomyResult:
    """Certified scale bracket: below kappa_low the iteration converges,
    above kappa_high it diverges, both on one shared grid."""

    family: SingularFamily
    z: tuple
    p: float
    kappa_low: float
    kappa_high: float
    grid_id: str
    history: tuple  # (kappa, status, iterations) in evaluation order

    def __post_init__(self):
        if not self.kappa_low < self.kappa_high:
            raise ValueError("bracket must satisfy kappa_low < kappa_high")


def _grid_id(domain: Domain, grid: SpaceTimeGrid) -> str:
    return (
        f"{type(domain).__name__.lower()}"
        f"-n{grid.nodes.shape[0]}-t{grid.times.size}-h{grid.times[-1]:.6g}"
    )


def dichotomy_sweep(
    family_kind: str,
    z,
    p: float,
    domain: Domain,
    T: float,
    kappa_bracket0,
    *,
    grid: Optional[SpaceTimeGrid] = None,
    max_bisection: int = 24,
    ratio_target: float = RATIO_TARGET,
    solver_options: Optional[dict] = None,
    threads: int = 1,
    **grid_options,
) -> DichotomyResult:
    """Bisect the data scale between convergence and divergence.

    Starts from ``kappa_bracket0``, widens geometrically until the low
    end converges and the high end diverges (up to 8 widenings each
    way), then bisects in log kappa until the bracket ratio drops under
    ``ratio_target`` or the budget runs out.  Every solve reuses one
    PicardRunner, so all outcomes live on the same grid.
    """
    lo, hi = (float(v) for v in kappa_bracket0)
    if not (0.0 < lo < hi):
        raise ValueError("bracket must satisfy 0 < low < high")
    fam = SingularFamily(family_kind, tuple(np.atleast_1d(z).astype(float)), float(p))
    mu = make_family(fam, domain)
    if grid is None:
        grid = make_grid(domain, T, [fam.anchor], **grid_options)
    runner = PicardRunner(domain, mu, float(p), grid)
    opts = dict(max_iter=int(_TOL_DEFAULTS["max_iter"]), conv_tol=1e-7, blowup_ceiling=1e8)
    opts.update(solver_options or {})
    opts["max_iter"] = int(opts["max_iter"])

    history = []

    def probe(k: float, budget_scale: int = 1) -> str:
        o = dict(opts)
        o["max_iter"] = opts["max_iter"] * budget_scale
        outcome = runner.solve(kappa=k, **o)
        history.append((float(k), outcome.status, outcome.iterations))
        return outcome.status

    if threads > 1:
        # endpoint solves are independent; cached kernel matrices are
        # identical either way, so the duplicate fill is harmless
        with ThreadPoolExecutor(max_workers=2) as ex:
            f_lo = ex.submit(runner.solve, kappa=lo, **opts)
            f_hi = ex.submit(runner.solve, kappa=hi, **opts)
            out_lo, out_hi = f_lo.result(), f_hi.result()
        history.append((lo, out_lo.status, out_lo.iterations))
        history.append((hi, out_hi.status, out_hi.iterations))
        s_lo, s_hi = out_lo.status, out_hi.status
    else:
        s_lo, s_hi = probe(lo), probe(hi)
    for _ in range(8):
        if s_lo == "Converged":
            break
        lo /= 4.0
        s_lo = probe(lo)
    for _ in range(8):
        if s_hi == "Diverged":
            break
        hi *= 4.0
        s_hi = probe(hi)
    if s_lo != "Converged" or s_hi != "Diverged":
        raise ValueError(
            f"no dichotomy bracket: low end {s_lo} at {lo:.3g}, high end {s_hi} at {hi:.3g}"
        )

    steps = 0
    stall = 0
    weights = (0.5, 0.62, 0.41)  # nudge the split point when a probe stays open
    while hi / lo >= ratio_target and steps < max_bisection and stall < 3:
        w = weights[stall]
        mid = math.exp((1.0 - w) * math.log(lo) + w * math.log(hi))
        status = probe(mid)
        if status == "Inconclusive":
            status = probe(mid, budget_scale=3)
        steps += 1
        if status == "Converged":
            lo, stall = mid, 0
        elif status == "Diverged":
            hi, stall = mid, 0
        else:
            stall += 1
    return DichotomyResult(
        family=fam,
        z=tuple(fam.anchor),
        p=float(p),
        kappa_low=lo,
        kappa_high=hi,
        grid_id=_grid_id(domain, grid),
        history=tuple(history),
    )


# ---------------------------------------------------------------------------
# commands


def _draw_point(domain: Domain, rng) -> np.ndarray:
    n = space_dim(domain)
    if isinstance(domain, Interval):
        return np.array([rng.uniform(0.05, 0.95) * domain.length])
    q = rng.uniform(-1.5, 1.5, size=n)
    if isinstance(domain, HalfSpace):
        q[-1] = rng.uniform(0.1, 2.0)
    return q


def _cmd_kernel_check(cfg: RunConfig, domain: Domain, man: Manifest, out_dir: Path) -> int:
    rng = np.random.default_rng(cfg.seed)
    ns = int(float(cfg.extra.get("samples", 50)))
    n_semigroup = int(float(cfg.extra.get("semigroup_samples", 8)))
    sym_tol = float(cfg.extra.get("symmetry_tol", 1e-12))
    semi_tol = float(cfg.extra.get("semigroup_tol", 1e-6))
    weighted_tol = float(cfg.extra.get("weighted_tol", 1e-5))

    rows = []
    for i in range(ns):
        x = _draw_point(domain, rng)
        y = _draw_point(domain, rng)
        t = rng.uniform(0.05, 0.4)
        g1 = heat_kernel(domain, x, y, t)
        g2 = heat_kernel(domain, y, x, t)
        rel = abs(g1 - g2) / max(g1, g2, 1e-300)
        rows.append(("symmetry", i, rel, sym_tol, rel <= sym_tol))
        if not isinstance(domain, WholeSpace):
            yb = y.copy()
            if isinstance(domain, Interval):
                yb[0] = 0.0 if y[0] < 0.5 * domain.length else domain.length
            else:
                yb[-1] = 0.0
            gb = heat_kernel(domain, x, yb, t)
            rows.append(("boundary_zero", i, gb, 0.0, gb == 0.0))
    for i in range(n_semigroup):
        x = _draw_point(domain, rng)
        y = _draw_point(domain, rng)
        t, s = rng.uniform(0.05, 0.3, size=2)
        rep = verify_semigroup(domain, x, y, t, s)
        rows.append(("semigroup", i, rep.rel_residual, semi_tol, rep.rel_residual <= semi_tol))
        if not isinstance(domain, WholeSpace):
            rep = verify_semigroup(domain, x, y, t, s, weighted=True)
            rows.append(
                ("weighted_semigroup", i, rep.rel_residual, weighted_tol,
                 rep.rel_residual <= weighted_tol)
            )
    if isinstance(domain, HalfSpace) and domain.dim == 1:
        val = survival_mass(domain, (1.0,), 0.25)
        ref = math.erf(1.0)
        err = abs(val - ref)
        rows.append(("survival_mass", 0, err, 1e-6, err <= 1e-6))

    count = write_csv(out_dir / "kernel_check.csv",
                      ("check", "sample", "value", "threshold", "ok"), rows)
    man.event("artifact", path="kernel_check.csv", rows=count)
    ok = all(r[4] for r in rows)
    man.event("result", ok=ok, checks=len(rows))
    return 0 if ok else 1


def _solver_pieces(cfg: RunConfig, domain: Domain, mu: MeasureSpec):
    sv = cfg.solve
    if sv["p"] is None:
        raise ValueError("[solve] p: required for this command")
    anchors = [a for a, _ in mu.atoms]
    if mu.singularity is not None:
        anchors.append(mu.singularity[0])
    grid_options = dict(
        target_nodes=int(sv["target_nodes"]),
        time_ratio=sv["time_ratio"],
        first_time_fraction=sv["first_time_fraction"],
        min_spacing=sv["min_spacing"],
    )
    if sv["extent"] is not None:
        grid_options["extent"] = sv["extent"]
    grid = make_grid(domain, sv["horizon"], anchors, **grid_options)
    solver_options = dict(
        max_iter=int(cfg.tolerances["max_iter"]),
        conv_tol=cfg.tolerances["conv_tol"],
        blowup_ceiling=cfg.tolerances["blowup_ceiling"],
    )
    return grid, solver_options


def _cmd_solve(cfg: RunConfig, domain: Domain, man: Manifest, out_dir: Path) -> int:
    mu = build_measure(cfg, domain)
    grid, solver_options = _solver_pieces(cfg, domain, mu)
    runner = PicardRunner(domain, mu, cfg.solve["p"], grid)
    outcome = runner.solve(**solver_options)
    man.timing("solve")

    hist_rows = [
        (h["iteration"], h["sup"], h["weighted_l1"], h["sup_diff"], h["l1_diff"])
        for h in outcome.history
    ]
    count = write_csv(out_dir / "history.csv",
                      ("iteration", "sup", "weighted_l1", "sup_diff", "l1_diff"),
                      hist_rows)
    man.event("artifact", path="history.csv", rows=count)

    nt = grid.times.size
    levels = sorted(set(np.linspace(0, nt - 1, min(nt, 9)).astype(int).tolist()))
    prof_rows = []
    for j in levels:
        t = grid.times[j]
        for k, xq in enumerate(grid.nodes):
            prof_rows.append((t, *xq, outcome.final.values[j, k]))
    xcols = tuple(f"x{i}" for i in range(grid.nodes.shape[1]))
    count = write_csv(out_dir / "profile.csv", ("t",) + xcols + ("u",), prof_rows)
    man.event("artifact", path="profile.csv", rows=count)

    result = {
        "status": outcome.status,
        "iterations": outcome.iterations,
        "grid_id": _grid_id(domain, grid),
        "diagnostics": outcome.diagnostics,
    }
    if outcome.status == "Converged" and nt >= 4:
        rep = restart_residual(outcome.final, nt // 3, 2 * nt // 3, domain, p=cfg.solve["p"])
        result["restart_residual"] = rep.max_rel_residual
    man.event("result", **result)
    return 0 if outcome.status == "Converged" else 1


def _cmd_trace(cfg: RunConfig, domain: Domain, man: Manifest, out_dir: Path) -> int:
    mu = build_measure(cfg, domain)
    grid, solver_options = _solver_pieces(cfg, domain, mu)
    runner = PicardRunner(domain, mu, cfg.solve["p"], grid)
    outcome = runner.solve(**solver_options)
    man.timing("solve")
    if outcome.status != "Converged":
        man.event("result", status=outcome.status, detail="no converged field to trace")
        return 1

    centers = cfg.extra.get("centers", "1.0")
    width = float(cfg.extra.get("width", 0.5))
    levels = int(float(cfg.extra.get("levels", 4)))
    rows = []
    ok = True
    for center_text in centers.split(";"):
        center = _floats(center_text)
        psi = bump_test_function(center, width)
        est = recover_trace(outcome.final, psi, range(levels), domain)
        ref = pairing(mu, domain, lambda pts, off=None: psi.fn(np.atleast_2d(pts)))
        gap = abs(est.limit - ref)
        tol = max(0.02 * abs(ref), est.error)
        good = gap <= tol or (ref == 0.0 and gap <= 1e-12)
        ok = ok and good
        rows.append((center[0], width, est.limit, est.error, ref, gap, good))
    count = write_csv(
        out_dir / "trace.csv",
        ("center", "width", "recovered", "error", "reference", "gap", "ok"),
        rows,
    )
    man.event("artifact", path="trace.csv", rows=count)
    man.event("result", ok=ok, measures=len(rows))
    return 0 if ok else 1


def _run_criterion(name: str, mu: MeasureSpec, domain: Domain, opts: dict):
    fget = lambda key, dv=None: float(opts[key]) if key in opts else dv
    T = fget("t", 1.0)
    p = fget("p")
    if name in ("weighted_strip_bound", "boundary_strip_rate") and p is None:
        raise ValueError("[criteria] p: required for strip checks")
    if name == "necessary_ball_bound":
        return crit.necessary_ball_bound(mu, domain, p=p, T=T)
    if name == "necessary_log_bound":
        return crit.necessary_log_bound(mu, domain, opts.get("variant", "interior"), T=T)
    if name == "boundary_mass_check":
        return crit.boundary_mass_check(mu, domain, p=p)
    if name == "uniform_mass_check":
        return crit.uniform_mass_check(mu, domain, radius=fget("radius", 1.0))
    if name == "sufficient_integral_check":
        return crit.sufficient_integral_check(mu, domain, p=p, T=T)
    if name == "power_moment_check":
        return crit.power_moment_check(
            mu, domain, alpha=fget("alpha", 1.2), p=p, T=T, part=opts.get("part")
        )
    if name == "orlicz_moment_check":
        return crit.orlicz_moment_check(mu, domain, beta=fget("beta", 0.5), T=T)
    if name == "orlicz_boundary_check":
        return crit.orlicz_boundary_check(mu, domain, beta=fget("beta", 0.5), T=T)
    if name == "weighted_strip_bound":
        return crit.weighted_strip_bound(mu, domain, p=p, T=T)
    if name == "boundary_strip_rate":
        return crit.boundary_strip_rate(mu, domain, p=p, T=T)
    raise ValueError(f"unknown criterion {name!r}")


def _cmd_criteria(cfg: RunConfig, domain: Domain, man: Manifest, out_dir: Path) -> int:
    name = cfg.extra.get("check")
    if not name:
        raise ValueError("[criteria] check: required")
    mu = build_measure(cfg, domain)
    report = _run_criterion(name, mu, domain, cfg.extra)
    man.timing("criterion")
    count = write_csv(out_dir / f"criteria_{name}.csv", report.columns, report.samples)
    man.event("artifact", path=f"criteria_{name}.csv", rows=count)
    man.event(
        "result",
        criterion=report.criterion,
        verdict=report.verdict,
        fitted_exponent=report.fitted_exponent,
        fit_band=report.fit_band,
        predicted_exponent=report.predicted_exponent,
        empirical_constant=report.empirical_constant,
        detail=report.detail,
        params=dict(report.params),
    )
    return 0


def _cmd_dichotomy(cfg: RunConfig, domain: Domain, man: Manifest, out_dir: Path,
                   threads: int) -> int:
    spec = cfg.measure
    if spec["kind"] != "family":
        raise ValueError("[measure] kind: dichotomy sweeps a singular family")
    if cfg.solve["p"] is None:
        raise ValueError("[solve] p: required for this command")
    z = _floats(cfg.extra.get("z", " ".join(map(str, spec["anchor"]))))
    lo = float(cfg.extra.get("bracket_low", 0.5))
    hi = float(cfg.extra.get("bracket_high", 2.0))
    max_bisection = int(float(cfg.extra.get("max_bisection", 24)))
    sv = cfg.solve
    grid_options = dict(
        target_nodes=int(sv["target_nodes"]),
        time_ratio=sv["time_ratio"],
        first_time_fraction=sv["first_time_fraction"],
        min_spacing=sv["min_spacing"],
    )
    solver_options = dict(
        max_iter=int(cfg.tolerances["max_iter"]),
        conv_tol=cfg.tolerances["conv_tol"],
        blowup_ceiling=cfg.tolerances["blowup_ceiling"],
    )
    result = dichotomy_sweep(
        spec["family"],
        z,
        cfg.solve["p"],
        domain,
        sv["horizon"],
        (lo, hi),
        max_bisection=max_bisection,
        solver_options=solver_options,
        threads=threads,
        **grid_options,
    )
    man.timing("sweep")
    rows = [(i, k, status, its) for i, (k, status, its) in enumerate(result.history)]
    count = write_csv(out_dir / "dichotomy.csv",
                      ("order", "kappa", "status", "iterations"), rows)
    man.event("artifact", path="dichotomy.csv", rows=count)
    man.event(
        "result",
        kappa_low=result.kappa_low,
        kappa_high=result.kappa_high,
        ratio=result.kappa_high / result.kappa_low,
        grid_id=result.grid_id,
        solves=len(result.history),
    )
    return 0 if result.kappa_high / result.kappa_low < RATIO_TARGET else 1


def run(cfg: RunConfig, threads: int = 1, verbose: bool = False) -> int:
    """Execute one configured command, writing artifacts under cfg.out."""
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest(out_dir / "manifest.jsonl")
    man.event(
        "start",
        command=cfg.command,
        config=asdict(cfg),
        versions={
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mildheat": __version__,
        },
    )
    domain = build_domain(cfg)
    try:
        if cfg.command == "kernel-check":
            code = _cmd_kernel_check(cfg, domain, man, out_dir)
        elif cfg.command == "solve":
            code = _cmd_solve(cfg, domain, man, out_dir)
        elif cfg.command == "trace":
            code = _cmd_trace(cfg, domain, man, out_dir)
        elif cfg.command == "criteria":
            code = _cmd_criteria(cfg, domain, man, out_dir)
        else:
            code = _cmd_dichotomy(cfg, domain, man, out_dir, threads)
    except ValueError as exc:
        man.event("error", message=str(exc))
        if verbose:
            click.echo(f"error: {exc}", err=True)
        return 2
    man.timing("total")
    man.event("exit", code=code)
    return code


@click.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(file_okay=False),
              help="override the output directory")
@click.option("--command", "command_override", default=None,
              type=click.Choice(COMMANDS), help="override the configured command")
@click.option("--threads", default=1, type=int, show_default=True)
@click.option("--verbose", is_flag=True)
def main(config_path, out, command_override, threads, verbose):
    """Run one configured experiment and write its artifacts."""
    try:
        cfg = load_config(config_path, command=command_override, out=out)
    except ValueError as exc:
        click.echo(str(exc), err=True)
        raise SystemExit(2)
    if verbose:
        click.echo(f"{cfg.command} -> {cfg.out}")
    raise SystemExit(run(cfg, threads=threads, verbose=verbose))


if __name__ == "__main__":
    main()
