import io
import math
import re

import pytest

from flowbalance.cli import main
from flowbalance.errors import DomainError
from flowbalance.sweep import SweepSpec, apply_parameter, run_sweep, sweep_csv

from helpers import bundled, bundled_path


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def table(text):
    rows = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) >= 2:
            try:
                rows[parts[0]] = float(parts[1])
            except ValueError:
                pass
    return rows


def test_hazard_two_part_fixed():
    code, out, _ = run(["hazard", bundled_path("two_part_fixed")])
    assert code == 0
    t = table(out)
    assert t["k"] == pytest.approx(0.62518, abs=1e-5)
    assert t["mu_hat:repair"] == pytest.approx(0.82427, abs=1e-5)
    assert "iterations" in t and "v:S0" in t and "renewal_hazard" in t


def test_hazard_two_part_exp_prints_both_hazards():
    code, out, _ = run(["hazard", "--model", bundled_path("two_part_exp")])
    t = table(out)
    assert code == 0
    assert t["k"] == pytest.approx(0.58579, abs=1e-5)
    assert t["renewal_hazard"] == pytest.approx(0.5, abs=1e-6)


def test_steady_single_repair():
    code, out, _ = run(["steady", bundled_path("single_repair")])
    t = table(out)
    assert code == 0
    assert t["P:S1"] == pytest.approx(0.53391, abs=1e-5)
    assert t["P:S2"] == pytest.approx(0.31072, abs=1e-5)


def test_bundled_model_lookup_by_name():
    code, out, _ = run(["hazard", "two_part_exp.json"])
    assert code == 0


def test_steady_csv_output(tmp_path):
    path = tmp_path / "steady.csv"
    code, _, _ = run(["steady", bundled_path("two_part_fixed"), "--out", str(path)])
    assert code == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "quantity,value"
    assert any(l.startswith("mu_hat:repair,0.58197670686932") for l in lines)


def test_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"states": [{"name": "S0"}], "transitions": [{"id": "a", "from": "S0", '
                   '"to": "S9", "dist": {"kind": "exponential", "rate": 1}}]}')
    code, _, err = run(["steady", str(bad)])
    assert code == 1
    assert "S9" in err


def test_io_error_exit_code(tmp_path):
    code, _, err = run(["steady", str(tmp_path / "missing.json")])
    assert code == 3
    code, _, _ = run(["steady", bundled_path("two_part_fixed"), "--out",
                      str(tmp_path / "no" / "such" / "dir.csv")])
    assert code == 3


def test_non_convergence_exit_code_writes_trace(tmp_path):
    trace = tmp_path / "trace.csv"
    code, _, err = run(["hazard", bundled_path("extreme"), "--max-iter", "3",
                        "--trace", str(trace)])
    assert code == 2
    assert str(trace) in err
    assert trace.read_text().startswith("iteration,k_in,k_out,residual,relaxation")


def test_fd_and_simulate_write_series(tmp_path):
    fd_csv = tmp_path / "fd.csv"
    code, out, _ = run(["fd", bundled_path("two_part_fixed"), "--out", str(fd_csv)])
    assert code == 0
    assert table(out)["hazard"] == pytest.approx(0.62513, abs=5e-4)
    assert fd_csv.read_text().startswith("t,value\n")
    mc_csv = tmp_path / "mc.csv"
    code, out, _ = run(["simulate", bundled_path("two_part_fixed"), "--replications", "5000",
                        "--horizon", "6", "--out", str(mc_csv)])
    assert code == 0
    assert len(mc_csv.read_text().splitlines()) == 51


def test_verify_two_part_fixed():
    code, out, _ = run(["verify", bundled_path("two_part_fixed"), "--seed", "3"])
    assert code == 0
    fd = re.search(r"^fd\s+\S+\s+delta\s+(\S+)", out, re.M)
    mc = re.search(r"^mc\s+\S+\s+\+-\s+\S+\s+delta\s+\S+\s+\((\S+) se\)", out, re.M)
    assert abs(float(fd.group(1))) < 1e-3
    assert abs(float(mc.group(1))) < 4.0


# -- sweep engine ----------------------------------------------------------------


def test_apply_parameter_paths():
    m = bundled("two_part_weibull")
    assert apply_parameter(m, "parameters.shape", 2.0).transition("repair").dist.shape == 2.0
    m2 = apply_parameter(m, "transitions.fail_second.dist.rate", 3.0)
    assert m2.transition("fail_second").dist.rate == 3.0
    with pytest.raises(DomainError):
        apply_parameter(m, "parameters.nope", 1.0)
    with pytest.raises(DomainError):
        apply_parameter(m, "transitions.ghost.dist.rate", 1.0)


def test_sweep_spec_validation():
    with pytest.raises(DomainError):
        SweepSpec("parameters.q", [], "steady")
    with pytest.raises(DomainError):
        SweepSpec("parameters.q", [1.0], "plot")


def test_sweep_records_failures_in_row():
    rows = run_sweep(bundled("two_part_weibull"), SweepSpec("parameters.shape", [1.0, -1.0], "hazard"))
    assert rows[0][1] == "ok"
    assert rows[1][1].startswith("error:")
    assert rows[1][2] == {}


def test_weibull_sweep_row():
    (_, status, rec), = run_sweep(bundled("two_part_weibull"),
                                  SweepSpec("parameters.shape", [1.0], "hazard"))
    assert status == "ok"
    assert rec["gamma:repair"] == pytest.approx(0.70711, abs=1e-5)
    assert rec["mu_hat:repair"] == pytest.approx(1.0, abs=1e-6)
    assert rec["k"] == pytest.approx(0.58579, abs=1e-5)


def test_lognormal_sweep_row():
    (_, _, rec), = run_sweep(bundled("two_part_lognormal"),
                             SweepSpec("parameters.scv", [5.0], "hazard"))
    assert rec["gamma:repair"] == pytest.approx(0.73608, abs=1e-5)
    assert rec["mu_hat:repair"] == pytest.approx(1.31689, abs=1e-5)
    assert rec["k"] == pytest.approx(0.52784, abs=1e-5)


def test_sweep_csv_is_deterministic():
    m = bundled("two_part_rho")
    spec = SweepSpec("parameters.rho", [0.01, 0.1, 1.0], "hazard")
    a = sweep_csv(m, spec, threads=1)
    b = sweep_csv(m, spec, threads=3)
    assert a == b
    header = a.splitlines()[0].split(",")
    assert header[:2] == ["parameters.rho", "status"]


def test_seeded_simulation_sweep_is_deterministic():
    m = bundled("two_part_exp")
    spec = SweepSpec("parameters.lam", [0.5, 1.0], "simulate",
                     {"replications": 3000, "horizon": 6.0, "seed": 4, "hazard_window": (1.0, 3.0)})
    assert sweep_csv(m, spec, threads=1) == sweep_csv(m, spec, threads=2)


def test_rho_sweep_gap_shrinks():
    m = bundled("two_part_rho")
    rows = run_sweep(m, SweepSpec("parameters.rho", [0.01, 0.1, 0.5, 1.0], "hazard"))
    gaps = [(r["k"] - r["renewal_hazard"]) / r["renewal_hazard"] for _, _, r in rows]
    assert all(g >= 0 for g in gaps)
    assert gaps == sorted(gaps)
    assert rows[-1][2]["renewal_hazard"] == pytest.approx(0.5, abs=1e-12)
    assert rows[-1][2]["k"] == pytest.approx(2 - math.sqrt(2), abs=1e-12)


def test_cli_sweep(tmp_path):
    path = tmp_path / "sweep.csv"
    code, _, _ = run(["sweep", bundled_path("distefano"), "--param", "parameters.q",
                      "--values", "0,0.25,0.5", "--out", str(path)])
    assert code == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert all(",ok," in l for l in lines[1:])
