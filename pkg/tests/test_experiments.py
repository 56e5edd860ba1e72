import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from d2dmarket.cli import main
from d2dmarket.experiments import (
    CSV_HEADER,
    SweepSpec,
    axis_values,
    format_csv,
    run_sweep,
    scenario_at,
    sweep_spec_from_document,
)
from d2dmarket.scenario import ScenarioError, validate_scenario

from conftest import scenario_a_doc, two_user_doc

GOLDEN = Path(__file__).parent / "golden"


def spec_doc(axis="interest", start=0.0, stop=1.0, steps=11, scenario=None, **extra):
    doc = {"axis": axis, "range": {"start": start, "stop": stop, "steps": steps},
           "scenario": scenario or scenario_a_doc(), "seed": 0}
    doc.update(extra)
    return doc


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def interest_rows():
    return run_sweep(sweep_spec_from_document(spec_doc()))


def test_interest_sweep_has_one_row_per_point(interest_rows):
    assert len(interest_rows) == 11
    text = format_csv(interest_rows)
    assert len(text.strip().splitlines()) == 12


def test_zero_interest_point_has_no_gain(interest_rows):
    first = interest_rows[0]
    assert first.axis_value == 0 and first.profit_gain_pct == 0
    assert first.saving_gain_pct == (0.0,)


def test_full_interest_point_matches_hand_computation(interest_rows):
    # y_o = 0.95 caches two contents: profit 266.25 vs 125, payment 495 vs 500.
    last = interest_rows[-1]
    assert last.profit_gain_pct == pytest.approx(100 * 141.25 / 125)
    assert last.saving_gain_pct == pytest.approx((1.0,))
    assert last.y_o_star == pytest.approx(0.95)


def test_header_is_frozen(interest_rows):
    golden = (GOLDEN / "sweep_header.csv").read_text()
    assert format_csv(interest_rows).splitlines()[0] + "\n" == golden
    assert ",".join(CSV_HEADER) + "\n" == golden


def test_population_axes_build_the_documented_users():
    clone = sweep_spec_from_document(spec_doc("population", 1, 3, 3))
    s = scenario_at(clone, 3)
    assert s.n_users == 3 and np.all(s.interests == 1.0)
    grow = sweep_spec_from_document(
        spec_doc("population", 1, 4, 4, population={"generator": "increasing", "p_base": 0.6, "delta": 0.2})
    )
    assert scenario_at(grow, 4).interests[:, 0].tolist() == pytest.approx([0.6, 0.8, 1.0, 1.0])
    assert axis_values(sweep_spec_from_document(spec_doc("population", 1, 3, 7))).tolist() == [1, 2, 3]


def test_connectivity_axis_sets_every_link():
    spec = sweep_spec_from_document(spec_doc("connectivity", scenario=two_user_doc(0.0), mode="connected"))
    assert scenario_at(spec, 0.3).omega.tolist() == [[0.0, 0.3], [0.3, 0.0]]


@pytest.mark.parametrize(
    "doc",
    [
        spec_doc(steps=1),
        spec_doc(stop=1.5),
        spec_doc(axis="weather"),
        spec_doc(mode="sideways"),
        spec_doc("population", 0, 3, 4),
    ],
)
def test_invalid_specs_are_rejected(doc):
    with pytest.raises(ScenarioError):
        sweep_spec_from_document(doc)


def test_nonconverging_points_are_marked_and_the_sweep_continues():
    spec = SweepSpec("interest", 0.5, 1.0, 2, validate_scenario(scenario_a_doc()))
    rows = run_sweep(spec, max_iter=1)
    assert [r.converged for r in rows] == [False, False]
    assert "nan" in format_csv(rows)


# Command line

def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc) if name.endswith(".yaml") else json.dumps(doc))
    return path


def test_solve_reports_policy_and_gains(tmp_path, capsys):
    path = write(tmp_path, "a.yaml", scenario_a_doc())
    assert main(["solve", str(path)]) == 0
    table = {r["metric"]: r["value"] for r in rows_of(capsys.readouterr().out)}
    assert float(table["y_o"]) == pytest.approx(0.95)
    assert float(table["profit_gain_pct"]) == pytest.approx(113.0)
    assert table["winwin"] == "1" and table["closed_form_winwin"] == "1"


def test_solve_validation_error_exit_code(tmp_path, capsys):
    doc = scenario_a_doc()
    doc["freshness"] = [1.2] * 5
    assert main(["solve", str(write(tmp_path, "bad.json", doc))]) == 2
    assert "freshness[0]" in capsys.readouterr().err


def test_solve_missing_file_exit_code(tmp_path):
    assert main(["solve", str(tmp_path / "nope.yaml")]) == 2


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    path = write(tmp_path, "a.yaml", scenario_a_doc())
    assert main(["solve", str(path), "--max-iter", "1"]) == 3
    assert "did not settle" in capsys.readouterr().err


def test_unknown_flag_value_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["sweep", "x.yaml", "--method", "guess"])
    assert err.value.code == 2


def test_sweep_csv_is_byte_identical_across_runs(tmp_path):
    spec = write(tmp_path, "s.yaml", spec_doc(steps=5, method="mc", mc_samples=2000,
                                              scenario=scenario_a_doc(0.5)))
    out1, out2 = tmp_path / "1.csv", tmp_path / "2.csv"
    assert main(["sweep", str(spec), "--out", str(out1), "--seed", "7"]) == 0
    assert main(["sweep", str(spec), "--out", str(out2), "--seed", "7"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_sweep_plot_writes_csv_and_two_panels(tmp_path):
    spec = write(tmp_path, "s.yaml", spec_doc(steps=3))
    out = tmp_path / "fig.csv"
    assert main(["sweep", str(spec), "--format", "plot", "--out", str(out)]) == 0
    assert len(rows_of(out.read_text())) == 3
    for panel in ("fig_gains.png", "fig_loads.png"):
        assert (tmp_path / panel).read_bytes()[:4] == b"\x89PNG"


def test_sweep_flags_override_the_spec(tmp_path, capsys):
    spec = write(tmp_path, "s.yaml", spec_doc("connectivity", 0.0, 1.0, 2,
                                              scenario=two_user_doc(), mode="connected"))
    assert main(["sweep", str(spec), "--mode", "disconnected", "--gamma-grid", "3"]) == 0
    rows = rows_of(capsys.readouterr().out)
    # Disconnected mode ignores links, so both points coincide.
    assert rows[0]["profit_gain_pct"] == rows[1]["profit_gain_pct"]


def test_increasing_interest_population_raises_profit_gain():
    spec = sweep_spec_from_document(
        spec_doc("population", 1, 6, 6, population={"generator": "increasing"})
    )
    gains = [r.profit_gain_pct for r in run_sweep(spec)]
    assert np.all(np.diff(gains) > 0)
