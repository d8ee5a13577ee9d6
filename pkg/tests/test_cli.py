"""Config loading, command artifacts and the dichotomy sweep."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from mildheat.cli import (
    DichotomyResult,
    RunConfig,
    build_domain,
    build_measure,
    dichotomy_sweep,
    load_config,
    main,
    run,
    write_csv,
)
from mildheat.kernels import HalfSpace, Interval


def write_ini(path, text):
    path.write_text(text, encoding="ascii")
    return str(path)


KERNEL_INI = """
[run]
command = kernel-check
out = {out}
seed = 3

[domain]
kind = halfspace
dim = 1

[kernel]
samples = 8
semigroup_samples = 2
"""


def manifest_events(out_dir, kind):
    rows = []
    for line in (out_dir / "manifest.jsonl").read_text().splitlines():
        rec = json.loads(line)
        if rec["event"] == kind:
            rows.append(rec)
    return rows


# ---------------------------------------------------------------------------
# configuration


def test_load_config_defaults(tmp_path):
    path = write_ini(
        tmp_path / "run.ini",
        "[run]\ncommand = solve\n\n[measure]\nkind = zero\n\n[solve]\np = 2.0\n",
    )
    cfg = load_config(path)
    assert cfg.command == "solve"
    assert cfg.seed == 0
    assert cfg.domain_kind == "halfspace"
    assert cfg.solve["horizon"] == 1.0
    assert cfg.solve["target_nodes"] == 400
    assert cfg.tolerances["max_iter"] == 30
    assert isinstance(build_domain(cfg), HalfSpace)


def test_load_config_collects_all_errors(tmp_path):
    path = write_ini(
        tmp_path / "bad.ini",
        "[run]\ncommand = explode\n\n[measure]\nkind = family\n"
        "family = boundary_point\np = 3.0\nkappa = -1\n\n[solve]\nhorizon = -2\n",
    )
    with pytest.raises(ValueError) as err:
        load_config(path)
    text = str(err.value)
    assert "[run] command" in text
    assert "[measure] kappa" in text
    assert "[solve] horizon" in text


def test_command_and_out_overrides(tmp_path):
    path = write_ini(
        tmp_path / "run.ini",
        "[run]\ncommand = solve\nout = nowhere\n\n[measure]\nkind = zero\n\n"
        "[solve]\np = 2.0\n",
    )
    cfg = load_config(path, command="kernel-check", out=str(tmp_path / "o"))
    assert cfg.command == "kernel-check"
    assert cfg.out == str(tmp_path / "o")


def test_build_measure_variants(tmp_path):
    path = write_ini(
        tmp_path / "run.ini",
        "[run]\ncommand = solve\n\n[measure]\nkind = atoms\n"
        "atoms = 0.5:1.0; 1.5:2.0\n\n[solve]\np = 2.0\n",
    )
    cfg = load_config(path)
    mu = build_measure(cfg, HalfSpace(1))
    assert mu.atoms == (((0.5,), 1.0), ((1.5,), 2.0))

    cfg.measure.update(kind="bump", center=(1.0, 1.0), width=0.5, factor=1.0)
    with pytest.raises(ValueError):
        build_measure(cfg, HalfSpace(1))


def test_write_csv_is_plain_and_stable(tmp_path):
    path = tmp_path / "t.csv"
    n = write_csv(path, ("a", "b"), [(1.0 / 3.0, True), (2, False)])
    assert n == 2
    body = path.read_bytes()
    assert body == b"a,b\n0.33333333333333331,1\n2,0\n"


# ---------------------------------------------------------------------------
# commands end to end


def test_kernel_check_command(tmp_path):
    out = tmp_path / "kc"
    path = write_ini(tmp_path / "k.ini", KERNEL_INI.format(out=out))
    assert run(load_config(path)) == 0
    rows = (out / "kernel_check.csv").read_text().splitlines()
    assert rows[0] == "check,sample,value,threshold,ok"
    assert all(line.endswith(",1") for line in rows[1:])
    assert manifest_events(out, "result")[0]["ok"] is True


def test_zero_measure_solve_trivial(tmp_path):
    out = tmp_path / "zero"
    path = write_ini(
        tmp_path / "z.ini",
        f"[run]\ncommand = solve\nout = {out}\n\n[measure]\nkind = zero\n\n"
        "[solve]\np = 2.0\nhorizon = 0.5\ntarget_nodes = 160\n",
    )
    assert run(load_config(path)) == 0
    result = manifest_events(out, "result")[0]
    assert result["status"] == "Converged"
    assert (out / "history.csv").exists()
    assert (out / "profile.csv").exists()


def test_criteria_command_reports_consistent(tmp_path):
    out = tmp_path / "crit"
    path = write_ini(
        tmp_path / "c.ini",
        f"[run]\ncommand = criteria\nout = {out}\n\n[domain]\nkind = halfspace\n"
        "dim = 1\n\n[measure]\nkind = uniform\n\n[criteria]\n"
        "check = uniform_mass_check\n",
    )
    assert run(load_config(path)) == 0
    result = manifest_events(out, "result")[0]
    assert result["verdict"] == "consistent"
    assert (out / "criteria_uniform_mass_check.csv").exists()


def test_trace_command_matches_pairings(tmp_path):
    out = tmp_path / "trace"
    path = write_ini(
        tmp_path / "t.ini",
        f"[run]\ncommand = trace\nout = {out}\n\n[domain]\nkind = halfspace\ndim = 1\n\n"
        "[measure]\nkind = bump\ncenter = 1.0\nwidth = 0.5\nfactor = 0.3\n\n"
        "[solve]\np = 2.0\nhorizon = 0.25\ntarget_nodes = 240\n\n"
        "[trace]\ncenters = 1.0\nwidth = 0.6\nlevels = 4\n",
    )
    assert run(load_config(path)) == 0
    rows = (out / "trace.csv").read_text().splitlines()
    assert rows[0].split(",")[-1] == "ok"
    assert all(line.endswith(",1") for line in rows[1:])


def test_repeated_runs_are_byte_identical(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        path = write_ini(tmp_path / f"{tag}.ini", KERNEL_INI.format(out=out))
        assert run(load_config(path)) == 0
        outs.append((out / "kernel_check.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_entry_and_validation_exit_codes(tmp_path):
    runner = CliRunner()
    out = tmp_path / "cli"
    path = write_ini(tmp_path / "k.ini", KERNEL_INI.format(out=out))
    res = runner.invoke(main, ["--config", path])
    assert res.exit_code == 0
    bad = write_ini(
        tmp_path / "bad.ini", "[run]\ncommand = bogus\n\n[measure]\nkind = zero\n"
    )
    res = runner.invoke(main, ["--config", bad])
    assert res.exit_code == 2
    assert "[run] command" in res.output


# ---------------------------------------------------------------------------
# dichotomy


@pytest.fixture(scope="module")
def reference_sweep():
    return dichotomy_sweep(
        "interior_point",
        (1.0,),
        4.0,
        HalfSpace(1),
        0.25,
        (0.05, 0.2),
        max_bisection=16,
        solver_options={"max_iter": 40},
        target_nodes=320,
    )


def test_sweep_produces_tight_bracket(reference_sweep):
    r = reference_sweep
    assert r.kappa_low < r.kappa_high
    assert r.kappa_high / r.kappa_low < 1.2
    assert r.grid_id.startswith("halfspace-")
    assert len(r.history) >= 3


def test_sweep_history_is_monotone_valid(reference_sweep):
    r = reference_sweep
    final = {}
    for kappa, status, _ in r.history:
        final[kappa] = status  # retries with a larger budget supersede
    for kappa, status in final.items():
        if kappa <= r.kappa_low:
            assert status == "Converged"
        if kappa >= r.kappa_high:
            assert status == "Diverged"


def test_sweep_rejects_bad_bracket():
    with pytest.raises(ValueError):
        dichotomy_sweep("interior_point", (1.0,), 4.0, HalfSpace(1), 0.25, (0.0, 0.0))
    with pytest.raises(ValueError):
        dichotomy_sweep("interior_point", (1.0,), 4.0, HalfSpace(1), 0.25, (0.2, 0.05))


def test_dichotomy_result_validates_bracket():
    with pytest.raises(ValueError):
        DichotomyResult(None, (1.0,), 4.0, 2.0, 1.0, "g", ())
