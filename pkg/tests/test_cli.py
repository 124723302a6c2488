import csv
import math

import pytest

from compact_posg import bench
from compact_posg.cli import main, parse_vertices
from compact_posg.graph import chain, load_instance, save_instance


@pytest.fixture
def k4_file(tmp_path):
    path = tmp_path / "k4.txt"
    save_instance(chain(4), path)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGenerate:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["generate", "--vertices", "5..8", "--instances", "20", "--seed", "42",
                         "--out", str(out)]) == 0
        files = sorted(p.name for p in a.iterdir())
        assert len(files) == 80
        assert all((a / f).read_bytes() == (b / f).read_bytes() for f in files)

    def test_two_vertices(self, tmp_path):
        assert main(["generate", "--vertices", "2", "--instances", "1", "--out", str(tmp_path)]) == 0
        (path,) = tmp_path.iterdir()
        assert load_instance(path).edges == ((1, 2),)

    def test_rejects_one_vertex(self, tmp_path):
        assert main(["generate", "--vertices", "1", "--out", str(tmp_path)]) == 1

    def test_bad_range(self, tmp_path):
        assert main(["generate", "--vertices", "a..b", "--out", str(tmp_path)]) == 1

    def test_parse_vertices(self):
        assert parse_vertices("5..8") == [5, 6, 7, 8]
        assert parse_vertices("7") == [7]
        assert parse_vertices("8..5") == []


class TestSolve:
    @pytest.mark.parametrize("engine", ["compact", "exact", "generic"])
    def test_k4(self, k4_file, tmp_path, engine):
        out = tmp_path / "rows.csv"
        assert main(["solve", str(k4_file), "--engine", engine, "--out", str(out)]) == 0
        (row,) = read_rows(out)
        assert row["status"] == "converged"
        assert abs(float(row["lb"]) - 9) <= 0.1 and abs(float(row["ub"]) - 9) <= 0.1
        assert float(row["gap"]) <= 0.1

    def test_budget_zero(self, k4_file, tmp_path):
        out = tmp_path / "rows.csv"
        assert main(["solve", str(k4_file), "--budget-secs", "0", "--out", str(out)]) == 0
        (row,) = read_rows(out)
        assert row["status"] == "budget"
        assert float(row["gap"]) == pytest.approx(9 - 3)

    def test_appends(self, k4_file, tmp_path):
        out = tmp_path / "rows.csv"
        for _ in range(2):
            main(["solve", str(k4_file), "--out", str(out)])
        assert len(read_rows(out)) == 2

    def test_stdout(self, k4_file, capsys):
        assert main(["solve", str(k4_file)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == ",".join(bench.CSV_COLUMNS)

    def test_dump(self, k4_file, tmp_path):
        d = tmp_path / "dump"
        assert main(["solve", str(k4_file), "--dump", str(d)]) == 0
        trace = read_rows(d / "trace.csv")
        assert trace and float(trace[-1]["gap"]) <= 0.1
        lines = [l for l in (d / "lower_bound.txt").read_text().splitlines() if not l.startswith("#")]
        assert all(len(l.split()) == 5 for l in lines)
        assert (d / "upper_bound.txt").exists()

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.txt")]) == 1

    def test_state_cap_is_budget(self, tmp_path):
        path = tmp_path / "k8.txt"
        save_instance(chain(8), path)
        out = tmp_path / "rows.csv"
        assert main(["solve", str(path), "--engine", "exact", "--max-states", "10", "--out", str(out)]) == 0
        assert read_rows(out)[0]["status"] == "budget"


class TestBench:
    def test_empty_range(self, tmp_path):
        assert main(["bench", "--vertices", "5..4", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "results.csv").read_text() == ",".join(bench.CSV_COLUMNS) + "\n"

    def test_small_run(self, tmp_path):
        assert main(["bench", "--vertices", "4..5", "--instances", "2", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "results.csv").read_text()
        header, *rows = text.splitlines()
        assert header == ",".join(bench.CSV_COLUMNS)
        assert len(rows) == 2 * 2 * 2
        for r in read_rows(tmp_path / "results.csv"):
            float(r["lb"]), float(r["runtime_s"])
            assert r["status"] == "converged"
            assert float(r["lb"]) <= float(r["ub"]) + 1e-6
        summary = read_rows(tmp_path / "summary.csv")
        assert {s["engine"] for s in summary} == {"exact", "compact"}

    def test_rerun_reproduces(self, tmp_path):
        cfg = dict(vertices=[5], instances=2, engines=("compact",))
        a = bench.run_bench(bench.ExperimentConfig(out=tmp_path / "a", **cfg))
        b = bench.run_bench(bench.ExperimentConfig(out=tmp_path / "b", **cfg))
        for x, y in zip(a, b):
            assert x.status == y.status
            assert abs(x.lb - y.lb) <= 1e-6 and abs(x.ub - y.ub) <= 1e-6

    def test_read_results_roundtrip(self, tmp_path):
        recs = bench.run_bench(bench.ExperimentConfig(vertices=[4], instances=1, out=tmp_path))
        back = bench.read_results(tmp_path / "results.csv")
        for x, y in zip(back, recs):
            assert x.runtime_s == pytest.approx(y.runtime_s, abs=1e-6)
            x.runtime_s = y.runtime_s
        assert back == recs


class TestSummary:
    def rec(self, engine, instance, lb, ub, runtime=1.0, status="converged"):
        return bench.ResultRecord(6, instance, engine, 0, runtime, lb, ub, ub - lb, 1, status)

    def test_quality_formula(self):
        rows = [self.rec("exact", "a", 9.9, 10.0), self.rec("compact", "a", 9.8, 9.85),
                self.rec("exact", "b", 5.0, 5.05), self.rec("compact", "b", 5.0, 5.01)]
        s = {x.engine: x for x in bench.summarize(rows)}
        assert s["compact"].max_quality == pytest.approx(max((10.0 - 9.8) / 9.8, (5.05 - 5.0) / 5.0))
        assert math.isnan(s["exact"].max_quality)

    def test_runtime_stats_over_converged(self):
        rows = [self.rec("exact", "a", 1, 1, 2.0), self.rec("exact", "b", 1, 1, 4.0),
                self.rec("exact", "c", 1, 2, 300.0, "budget")]
        (s,) = bench.summarize(rows)
        assert (s.runs, s.converged, s.budget) == (3, 2, 1)
        assert s.mean_runtime_s == 3.0
        assert s.stderr_runtime_s == pytest.approx(1.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            bench.ExperimentConfig(epsilon=0)
        with pytest.raises(ValueError):
            bench.ExperimentConfig(engines=("nope",))
