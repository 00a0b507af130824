"""Suite runner, JSON reports and the command-line surface."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from cli import cli
from dynbaxter.exceptions import DomainError, SchemaError
from dynbaxter.models import CellDataSchema, ModelVariant, ResidualReport, SuiteConfig
from dynbaxter.suites import default_params, load_cells, load_schema, run_suite


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


def test_dybe_command_writes_report(runner, tmp_path):
    """A passing suite exits 0 and writes the residual report as JSON."""
    out = tmp_path / "dybe.json"
    result = runner.invoke(cli, ["dybe", "--model", "trig-a", "--samples", "2", "--out", str(out)])
    assert result.exit_code == 0, result.stderr
    report = json.loads(out.read_text())
    assert report["suite"] == "dybe"
    assert report["pass"] is True
    assert report["samples"] == 2
    assert "wall_time" not in report
    assert all(check["pass"] for check in report["checks"])
    assert "✅" in result.stderr
    print("✅ dybe report written")


def test_reports_are_deterministic(runner):
    args = ["inversion", "--model", "sym-sos", "--samples", "3", "--seed", "9"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0 and second.exit_code == 0
    assert json.loads(first.stdout) == json.loads(second.stdout)


def test_failing_suite_exits_one(runner):
    """Plain SOS weights are not symmetric, so the symmetric suite fails."""
    result = runner.invoke(cli, ["symmetric", "--model", "sos", "--samples", "1"])
    assert result.exit_code == 1
    report = json.loads(result.stdout)
    assert report["pass"] is False


def test_malformed_input_exits_two(runner, tmp_path):
    broken = tmp_path / "pair.json"
    broken.write_text("{not json")
    result = runner.invoke(cli, ["drinfeld", "--input", str(broken)])
    assert result.exit_code == 2
    assert "drinfeld failed" in result.stderr

    missing = tmp_path / "cells.json"
    missing.write_text(json.dumps({"family": "ad"}))
    result = runner.invoke(cli, ["cell", "--cells", str(missing)])
    assert result.exit_code == 2
    assert "cells" in result.stderr


def test_export_identity_at_zero(runner):
    result = runner.invoke(cli, ["export", "--model", "sos", "--object", "0", "--z", "0"])
    assert result.exit_code == 0, result.stderr
    dump = json.loads(result.stdout)
    assert dump["paths"] == [["0+", "1+"], ["0+", "1-"], ["0-", "-1+"], ["0-", "-1-"]]
    matrix = np.array([[complex(re, im) for re, im in row] for row in dump["matrix"]])
    assert np.allclose(matrix, np.eye(4))


def test_export_unknown_object(runner):
    result = runner.invoke(cli, ["export", "--model", "sos", "--object", "nowhere"])
    assert result.exit_code == 2


def test_theta_eval(runner):
    result = runner.invoke(cli, ["theta-eval", "--model", "trig-a", "--kind", "trig", "3", "0"])
    assert result.exit_code == 0, result.stderr
    lines = [json.loads(line) for line in result.stdout.splitlines()]
    assert lines[0]["trig"][0] == pytest.approx(1.0)
    assert lines[1]["trig"] == [0.0, 0.0]


def test_default_params():
    restricted = default_params(ModelVariant.TRIG_A, level=5)
    assert restricted.restricted and restricted.scale == 8
    shifted = default_params(ModelVariant.ELLIPTIC_A, level=6, shift=0.39)
    assert not shifted.restricted
    assert (shifted.center, shifted.window, shifted.shift) == (5, 3, 0.39)
    assert default_params().variant == ModelVariant.SOS


def test_load_schema_names_the_field(tmp_path):
    path = tmp_path / "cells.json"
    path.write_text(json.dumps({"family": "ad", "cells": [{"a1": "1A"}]}))
    with pytest.raises(SchemaError) as err:
        load_schema(str(path), CellDataSchema)
    assert "cells.0" in str(err.value)
    with pytest.raises(SchemaError):
        load_schema(str(tmp_path / "absent.json"), CellDataSchema)


def test_load_cells_builds_matching_face_model():
    cell, R1 = load_cells("ad", default_params(level=4))
    assert cell.name == "AD4"
    assert R1.groupoid is cell.left.carrier
    cell, R1 = load_cells("e6", default_params())
    assert cell.name == "E6" and len(R1.groupoid.objects) == 11


def test_run_suite_report():
    report = run_suite(SuiteConfig(suite="inversion", model=ModelVariant.SOS, samples=2))
    assert isinstance(report, ResidualReport)
    assert report.passed and report.resamples == 0
    data = report.to_json_dict(include_timing=True)
    assert data["wall_time"] >= 0
    assert [c["name"] for c in data["checks"]] == ["inversion:Rsos"]


def test_run_suite_rejects_unknown_suite():
    with pytest.raises(DomainError):
        run_suite(SuiteConfig(suite="nope"))
    with pytest.raises(ValueError):
        SuiteConfig(suite="dybe", samples=0)


def test_cell_suite_on_ad_cells():
    """The A -> D cells pass their twist equations and the implied weight-zero relation."""
    cfg = SuiteConfig(
        suite="cell",
        cells="ad",
        tolerance=1e-8,
        samples=1,
        params=default_params(ModelVariant.ELLIPTIC_A, tau=1.2j, level=4),
    )
    report = run_suite(cfg)
    names = [c.name for c in report.checks]
    assert "cell-inverse" in names and "weight-zero" in names
    assert report.passed, [(c.name, c.residual) for c in report.checks if not c.passed]


def test_drinfeld_and_dynamical_suites():
    drinfeld = run_suite(SuiteConfig(suite="drinfeld", samples=1, tolerance=1e-10))
    assert drinfeld.passed
    assert [c.name for c in drinfeld.checks][-2:] == ["rejects-non-twist", "cocycle"]
    dynamical = run_suite(SuiteConfig(suite="dyn-twist", samples=2))
    assert dynamical.passed
