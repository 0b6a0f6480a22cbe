import json

import numpy as np
import pytest

from tadgame.config import load_scenario
from tadgame.export import (comparison_dict, metrics_dict, read_trajectory_csv, trajectory_csv,
                            write_run, write_zone_map, zone_csv, zone_svg)
from tadgame.simulation import COLUMNS, ComparisonRow, MetricsRecord, run_simulation
from tadgame.zones import GridSpec, ZoneParams, build_zone_map

EXPECTED_HEADER = ("t,x_T,y_T,x_A,y_A,x_D,y_D,u_x,u_y,alpha_dot_D,a_A,R,r,est_x_A,est_y_A,"
                   "est_alpha_A,est_a_A,sigma_x,sigma_y,sigma_alpha,sigma_a")


@pytest.fixture(scope="module")
def result():
    return run_simulation(load_scenario("cs_escape").with_updates(duration=0.5))


def test_header_order(result):
    assert trajectory_csv(result).splitlines()[0] == EXPECTED_HEADER
    assert ",".join(COLUMNS) == EXPECTED_HEADER


def test_round_trip_is_bit_exact(result):
    back = read_trajectory_csv(trajectory_csv(result))
    assert back.shape == result.trajectory.shape
    assert np.array_equal(back, result.trajectory)


def test_bad_header():
    with pytest.raises(ValueError):
        read_trajectory_csv("a,b\n1,2\n")


def test_metrics_json(result, tmp_path):
    paths = write_run(result, tmp_path)
    data = json.loads(paths["metrics"].read_text())
    assert data["outcome"] == "Timeout" and data["steps"] == result.steps
    assert set(data["metrics"]) == {"interception_time", "avg_control_effort_defender",
                                    "avg_control_effort_combined", "avg_solver_time_per_iteration"}
    assert np.array_equal(read_trajectory_csv(paths["trajectory"].read_text()), result.trajectory)


def test_non_finite_become_null():
    rows = [ComparisonRow("nmpc", "Timeout", MetricsRecord(float("nan"), 1.0, 2.0, 3.0)),
            ComparisonRow("clos", None, None, "boom")]
    out = comparison_dict(rows)
    assert out[0]["metrics"]["interception_time"] is None
    assert out[1] == {"controller": "clos", "outcome": None, "metrics": None, "error": "boom"}
    json.dumps(out, allow_nan=False)


def test_metrics_dict_is_strict_json(result):
    json.dumps(metrics_dict(result), allow_nan=False)


def test_zone_files(tmp_path):
    g = GridSpec.square(1.5, 9)
    zmap = build_zone_map(ZoneParams(), g)
    lines = zone_csv(zmap).splitlines()
    assert lines[0] == "x,y,label" and len(lines) == 82
    assert {ln.split(",")[2] for ln in lines[1:]} <= {"escape", "capture", "boundary"}
    svg = zone_svg(zmap)
    assert svg.startswith("<svg") and svg.count("<rect") == 81 and "<polyline" in svg
    paths = write_zone_map(zmap, tmp_path / "z")
    assert paths["csv"].read_text() == zone_csv(zmap)
