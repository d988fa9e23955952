#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command-line unit tests."""

import csv
import json
import logging

import pytest

from cli import FlowLab, main
from commands.table import parse_levels
from literals import RUN_CSV_COLUMNS

logger = logging.getLogger(__name__)

SMALL = ["--level", "2", "--t-end", "0.5"]


def read_rows(path):
    """CSV rows of a file."""
    with open(path, encoding="utf-8") as f:
        return list(csv.reader(f))


def test_run_writes_csv_snapshots_and_mesh(tmp_path):
    output = tmp_path / "run.csv"
    status = main(
        ["run", *SMALL, "--output", str(output)]
        + ["--snapshots", "0.25", "--dump-mesh", "true"]
    )
    assert status == 0
    rows = read_rows(output)
    assert rows[0] == RUN_CSV_COLUMNS
    assert len(rows) >= 2

    snapshot = tmp_path / "run-snapshot-t0.25.csv"
    assert read_rows(snapshot)[0] == ["x1", "x2", "value"]
    mesh_lines = (tmp_path / "run.mesh").read_text().splitlines()
    assert mesh_lines[0].split() == ["25", "32"]


def test_run_json_to_stdout(capsys):
    status = main(["run", *SMALL, "--output-format", "json"])
    assert status == 0
    document = json.loads(capsys.readouterr().out)
    assert document["config"]["output-format"] == "json"
    assert document["metadata"]["n_vertices"] == 25


def test_run_reads_config_file(tmp_path):
    config = tmp_path / "cone.conf"
    config.write_text("example = cone\nlevel = 2\nt-end = 0.6\n")
    output = tmp_path / "cone.json"
    status = main(
        ["run", "--config", str(config), "--output", str(output)]
        + ["--output-format", "json", "--level", "1"]
    )
    assert status == 0
    document = json.loads(output.read_text())
    assert document["config"]["example"] == "cone"
    assert document["config"]["level"] == 1


def test_table(tmp_path, capsys):
    output = tmp_path / "table.csv"
    status = main(
        ["--log-level", "warning", "table", "--levels", "1..2"]
        + ["--t-end", "0.6", "--output", str(output)]
    )
    assert status == 0
    rows = read_rows(output)
    assert [row[0] for row in rows[1:]] == ["1", "2"]
    assert rows[2][4] != ""
    assert "# Maximal L2 errors: disk, semi" in capsys.readouterr().out


def test_table_eps_columns(capsys):
    status = main(
        ["table", "--levels", "1,2", "--t-end", "0.6"]
        + ["--eps-powers", "1,0.5"]
    )
    assert status == 0
    captured = capsys.readouterr()
    lines = captured.out.strip().splitlines()
    assert len(lines) == 5
    assert "h^0.5" in lines[-1]
    assert "| level |" in captured.err


def test_check_stability(tmp_path):
    output = tmp_path / "stability.csv"
    status = main(
        ["check-stability", *SMALL, "--taus", "0.1,1,10", "--steps", "2"]
        + ["--cg-tol", "1e-12", "--output", str(output)]
    )
    assert status == 0
    rows = read_rows(output)
    assert [row[-1] for row in rows[1:]] == ["ok", "ok", "ok"]


def test_verify_exact(tmp_path):
    output = tmp_path / "flux.csv"
    assert main(["verify-exact", "--output", str(output)]) == 0
    assert len(read_rows(output)) == 4
    assert main(["verify-exact", "--example", "cone"]) == 0
    assert main(["verify-exact", "--times", "0.1", "--tol", "1e-30"]) == 1


def test_compare(capsys):
    assert main(["compare", *SMALL]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["k", "t", "difference", "max_norm"]
    assert rows[1][2] == "0.0"


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--level", "20"],
        ["run", "--scheme", "implicit-admm", "--eps-power", "1"],
        ["run", "--p", "2.5"],
        ["run", "--snapshots", "-1"],
        ["table", "--levels", "3..2"],
        ["compare", "--scheme", "implicit-fp", "--level", "1"],
    ],
)
def test_invalid_input_exit_status(argv):
    assert main(argv) == 2


def test_solver_failure_exit_status():
    status = main(
        ["run", "--level", "3", "--t-end", "0.2", "--scheme", "implicit-admm"]
        + ["--admm-maxit", "1", "--delta-stop", "1e-14"]
    )
    assert status == 1


def test_unknown_command():
    with pytest.raises(SystemExit) as excinfo:
        main(["integrate"])
    assert excinfo.value.code == 2


def test_parser_exposes_every_option():
    app = FlowLab()
    args = app.parser.parse_args(["run", "--tau-factor", "0.5"])
    assert args.tau_factor == "0.5"
    assert args.handler == app.run_command._on_run
    for option in app.options:
        assert hasattr(args, option.replace("-", "_"))


def test_sibling_paths():
    assert FlowLab.sibling("out/run.csv", ".mesh") == "out/run.mesh"
    assert FlowLab.sibling(None, ".mesh") == "flowlab.mesh"


def test_parse_levels():
    assert parse_levels("3..6") == [3, 4, 5, 6]
    assert parse_levels("2, 4") == [2, 4]
    with pytest.raises(ValueError):
        parse_levels("")
