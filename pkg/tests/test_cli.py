import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from divbounds import cli
from divbounds.errors import ParameterError

GOLDEN = Path(__file__).parent / "golden" / "bound_barrier_xi1.csv"


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_verdicts(capsys):
    code, out, _ = run(["check", "--xi", "0.15"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["verdict"] == "constant payout optimal" and rep["default_barrier"] == 0.0
    code, out, _ = run(["check"], capsys)
    rep = json.loads(out)
    assert rep["verdict"] == "not optimal; barrier analysis recommended"
    assert rep["default_barrier"] == pytest.approx(2.087556422362344, rel=1e-12)


def test_check_negative_drift(capsys):
    code, out, _ = run(["check", "--mu", "-0.1"], capsys)
    assert code == 0 and json.loads(out)["verdict"].startswith("inapplicable")


@pytest.mark.parametrize("argv,field", [(["check", "--sigma", "0"], "sigma"),
                                        (["bound", "--delta", "-1"], "delta"),
                                        (["bound", "--x-grid", "0:1"], "x_grid"),
                                        (["simulate", "--strategy", "wave"], "strategy")])
def test_validation_exit_code(argv, field, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_INVALID and field in err


def test_parse_grid():
    assert np.allclose(cli.parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1.0])
    assert cli.parse_grid("5:1:1").size == 0
    with pytest.raises(ParameterError):
        cli.parse_grid("0:1:0")


def test_empty_grid_header_only(capsys):
    code, out, _ = run(["bound", "--x-grid", "3:1:1"], capsys)
    assert code == 0 and out == ",".join(cli.BOUND_HEADER) + "\n"


def test_bound_small_rate_has_no_suboptimality():
    p = cli.resolve("bound", {}, {"xi": 0.15}, {}, None).model()
    rows = cli.cmd_bound(p, "barrier", 0.0, [1.0, 4.0])
    for r in rows:
        assert r[2] < 1e-20 and r[3] == 0.0


def test_constant_mode_rows():
    p = cli.resolve("bound", {}, {}, {}, None).model()
    rows = cli.cmd_bound(p, "constant", 0.0, [0.0, 5.0])
    assert rows[0][1] == 0.0 and rows[0][5] == 0.0
    assert rows[1][5] == pytest.approx(0.6955014710871289, rel=1e-9)


def test_bound_matches_golden():
    with open(GOLDEN) as fh:
        golden = list(csv.reader(fh))
    p = cli.resolve("bound", {}, {}, {}, None).model()
    rows = cli.cmd_bound(p, "barrier", 0.0, cli.parse_grid("0:20:1"), 20)
    out = io.StringIO()
    cli.write_rows(cli.BOUND_HEADER, rows, "csv", out)
    fresh = list(csv.reader(io.StringIO(out.getvalue())))
    assert fresh[0] == golden[0] and len(fresh) == len(golden)
    for a, b in zip(fresh[1:], golden[1:]):
        for u, v in zip(a[:-1], b[:-1]):
            assert float(u) == pytest.approx(float(v), rel=1e-9, abs=1e-15)
    totals = [float(r[5]) for r in golden[2:]]
    # positive and single-peaked in x
    peak = int(np.argmax(totals))
    assert min(totals) > 0.0
    assert all(np.diff(totals[:peak + 1]) >= 0) and all(np.diff(totals[peak:]) <= 0)


def test_freeboundary_outcomes(capsys):
    code, out, _ = run(["freeboundary", "--xi", "0.5", "--order", "30"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["experimental"] and rep["converged"] and rep["max_residual"] < 1e-8
    code, out, _ = run(["freeboundary", "--xi", "5", "--order", "40"], capsys)
    rep = json.loads(out)
    assert code == 0 and not rep["converged"] and rep["divergence_order"] is not None
    code, out, _ = run(["freeboundary", "--order", "1"], capsys)
    assert code == 0 and json.loads(out)["solved_orders"] == 1


def test_simulate_rows(capsys):
    argv = ["simulate", "--x-grid", "0:1:1", "--paths", "2000", "--dt", "0.004", "--seed", "3"]
    code, out, _ = run(argv, capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [float(r["x"]) for r in rows] == [0.0, 1.0]
    assert float(rows[0]["mean"]) == 0.0 and float(rows[0]["stderr"]) == 0.0
    assert float(rows[1]["closed_form_if_any"]) > 0.0
    assert math.isfinite(float(rows[1]["diff_in_se"]))
    _, again, _ = run(argv, capsys)
    assert again == out
    code, out, _ = run(["simulate", "--strategy", "barrier:1.5", "--x-grid", "1:1:1",
                        "--paths", "500", "--dt", "0.01"], capsys)
    assert code == 0 and list(csv.DictReader(io.StringIO(out)))[0]["closed_form_if_any"] == ""


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"xi": 0.15, "sigma": 2.0, "bound": {"x_grid": "1:2:1", "format": "json"}}))
    out_file = tmp_path / "out.json"
    code, _, _ = run(["bound", "--config", str(cfg), "--sigma", "1.0", "-o", str(out_file)], capsys)
    rows = json.loads(out_file.read_text())
    assert code == 0 and [r["x"] for r in rows] == [1.0, 2.0]
    expected = cli.cmd_bound(cli.resolve("bound", {}, {"xi": 0.15}, {}, None).model(),
                             "constant", 0.0, [1.0])
    assert rows[0]["total"] == pytest.approx(expected[0][5], rel=1e-12)


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"bound": {"grid": "1:2:1"}}))
    code, _, err = run(["bound", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_INVALID and "grid" in err
    cfg.write_text("{not json")
    code, _, err = run(["check", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_INVALID and "config" in err


def test_run_config_round_trip():
    cfg = cli.resolve("simulate", {"mu": 0.2}, {"gamma": 0.3}, {"paths": 10}, "x.csv")
    back = cli.RunConfig.from_json("simulate", cfg.to_json())
    assert back == cfg


def test_verify_command(capsys):
    code, out, _ = run(["verify"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and len(rep["checks"]) == 7
