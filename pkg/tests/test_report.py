import json

import pytest

from dfdet.bench import BenchResult
from dfdet.report import (REPORT_VERSION, ReportError, load_report,
                          make_report, save_report)


def _bench_rows():
    return [BenchResult("dire", 0.1, 0.1, 0.1, 2, 5, 3, 40.0),
            BenchResult("distil", 0.02, 0.02, 0.02, 2, 5, 3, 1.0)]


def _full_report():
    return make_report(
        metrics={"test_seen": {"accuracy": 0.95, "ap": 0.99}},
        ablation={"kd": {"ap": 0.9}, "no_kd": {"ap": 0.85}},
        bench=_bench_rows(),
        config={"seed": 0},
        seed=0,
        run_id="r1",
    )


class TestMakeReport:
    def test_missing_section_rejected(self):
        with pytest.raises(ReportError, match="metrics"):
            make_report(ablation={}, bench=_bench_rows())

    def test_measured_rows_labeled(self):
        rep = _full_report()
        assert all(r["provenance"] == "measured" for r in rep["bench"]["measured"])

    def test_reference_rows_kept_separate(self):
        rep = _full_report()
        ref = rep["bench"]["reference"]
        assert {r["method"] for r in ref} == {"CNNDet", "DIRE", "DNF", "DistilDIRE"}
        assert all(r["provenance"] == "paper-table-2" for r in ref)
        measured_names = {r["name"] for r in rep["bench"]["measured"]}
        assert measured_names == {"dire", "distil"}

    def test_version_stamped(self):
        assert _full_report()["report_version"] == REPORT_VERSION


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rep = _full_report()
        path = tmp_path / "report.json"
        save_report(rep, path)
        assert load_report(path) == rep

    def test_is_plain_json(self, tmp_path):
        path = tmp_path / "report.json"
        save_report(_full_report(), path)
        with open(path) as fh:
            json.load(fh)

    def test_version_mismatch(self, tmp_path):
        rep = _full_report()
        rep["report_version"] = 99
        path = tmp_path / "bad.json"
        save_report(rep, path)
        with pytest.raises(ReportError, match="version"):
            load_report(path)

    def test_missing_section_on_load(self, tmp_path):
        rep = _full_report()
        del rep["ablation"]
        path = tmp_path / "m.json"
        with open(path, "w") as fh:
            json.dump(rep, fh)
        with pytest.raises(ReportError, match="ablation"):
            load_report(path)
