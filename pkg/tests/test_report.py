import json
import math
import statistics

import pytest

from gliomaseg.report import CaseResult, Report, aggregate, config_digest, data_fields, read_csv_rows


def _row(cid, dice, missed=False, ms=(1.0, 2.0, 3.5)):
    return CaseResult(cid, dice, *ms, detection_missed=missed,
                      bbox=None if missed else [1, 2, 3, 4], prompt=None if missed else [2, 3])


def test_two_case_arithmetic():
    agg = aggregate([_row("a", 1.0), _row("b", 0.0, missed=True)])
    assert agg["dice_mean"] == 0.5 and agg["dice_median"] == 0.5
    assert agg["dice_std"] == 0.5
    assert agg["miss_count"] == 1


def test_empty_aggregate():
    assert aggregate([]) == {"n_cases": 0, "miss_count": 0}


def test_rows_sorted_by_case_id():
    r = Report({}, [_row("b", 0.3), _row("a", 0.1)])
    assert [c.case_id for c in r.cases] == ["a", "b"]


def test_json_csv_recompute(tmp_path):
    rows = [_row(f"c{i}", (i * 0.137) % 1, ms=(i * 0.1, i * 0.3 + 0.01, i * 0.5 + 0.7)) for i in range(7)]
    rep = Report({"run_id": "x"}, rows)
    jpath, cpath = rep.write(tmp_path)
    doc = json.loads(jpath.read_text())
    assert doc["schema"] == 1
    for source in (doc["cases"], [r.to_row() for r in read_csv_rows(cpath)]):
        dice = [c["dice"] for c in source]
        assert abs(doc["aggregates"]["dice_mean"] - sum(dice) / len(dice)) <= 1e-12
        assert abs(doc["aggregates"]["dice_median"] - statistics.median(dice)) <= 1e-12
        assert abs(doc["aggregates"]["dice_std"] - statistics.pstdev(dice)) <= 1e-12
        for key in ("detect_ms", "segment_ms", "total_ms"):
            vals = [c[key] for c in source]
            assert abs(doc["aggregates"][f"{key}_mean"] - math.fsum(vals) / len(vals)) <= 1e-12
    assert read_csv_rows(cpath) == rep.cases


def test_data_fields_strip_timings():
    a = Report({"run_id": "x", "timestamp": "t1", "warmup_ms": 3.0}, [_row("a", 0.5, ms=(1, 2, 3))]).to_dict()
    b = Report({"run_id": "x", "timestamp": "t2", "warmup_ms": 9.0}, [_row("a", 0.5, ms=(4, 5, 9))]).to_dict()
    assert a != b
    assert data_fields(a) == data_fields(b)


def test_digest_stable():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})


@pytest.mark.parametrize("missed", [True, False])
def test_csv_none_round_trip(tmp_path, missed):
    rep = Report({}, [_row("z", 0.25, missed=missed)])
    _, cpath = rep.write(tmp_path)
    assert read_csv_rows(cpath) == rep.cases
