import json
import os

import pytest

from sentinel.cli import main, perception_report


def test_validate_bundled_ok(capsys):
    assert main(["validate", "--scenario", "straight_road_clear"]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "scenario": {"id": "x", "actors": [], "bogus": 1}}')
    assert main(["validate", "--scenario", str(bad)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_run_clean_exit_zero(tmp_path, capsys):
    code = main(["run", "--scenario", "straight_road_clear", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "clean" in out
    logs = [p for p in os.listdir(tmp_path) if p.endswith(".ndjson")]
    assert len(logs) == 1


def test_run_collision_exit_two(tmp_path):
    code = main(["run", "--scenario", "scripted_rear_end", "--out", str(tmp_path)])
    assert code == 2


def test_bad_threshold_config_error(tmp_path, capsys):
    code = main(["run", "--scenario", "straight_road_clear",
                 "--threshold", "1.1", "--out", str(tmp_path)])
    assert code == 1
    assert "threshold" in capsys.readouterr().err


def test_eval_perception_missing_scenario(capsys):
    assert main(["eval", "--mode", "perception"]) == 1
    assert "scenario" in capsys.readouterr().err


def test_noiseless_perception_is_exact():
    report = perception_report("straight_road_clear", seed=None, noiseless=True)
    assert report.detection_map == pytest.approx(1.0)
    # positions cross the f32 wire once, so "zero" means float32 precision
    for cls in ("car", "van"):
        assert report.per_class[cls]["mATE"] <= 1e-5
        assert report.per_class[cls]["mASE"] <= 1e-6
        assert report.per_class[cls]["mAOE"] <= 1e-6
    assert report.motion_vpq == pytest.approx(1.0)


def test_eval_perception_writes_reports(tmp_path, capsys):
    code = main(["eval", "--mode", "perception", "--scenario", "straight_road_clear",
                 "--noiseless", "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "perception_report.json").read_text())
    assert set(data) == {"detection_map", "per_class", "bev_miou", "motion_vpq"}
    text = (tmp_path / "perception_report.txt").read_text()
    assert "Detection (%)" in text and "Pedestrian" in text
