import csv
import json

import pytest

from hkdyadic.cli import main, parse_window
from hkdyadic.stepfn import StepFunction, Window


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestNorm:
    @pytest.mark.parametrize(
        "p,family,f,expected",
        [
            ("const:2", "bar", "indicator:0,1", 1.0),
            ("const:2", "tilde", "indicator:0,1", 0.7071067811865476),
            ("jump:2,4@1", "bar", "indicator:0,2", 1.2720196495140689),
        ],
    )
    def test_examples(self, capsys, p, family, f, expected):
        code, out, _ = run(capsys, "norm", "--p", p, "--family", family, "--f", f)
        assert code == 0
        assert float(out) == pytest.approx(expected, rel=1e-12)

    def test_json_output(self, capsys, tmp_path):
        path = tmp_path / "n.json"
        code, _, _ = run(capsys, "norm", "--p", "const:2", "--f", "indicator:0,1", "--out", str(path))
        obj = json.loads(path.read_text())
        assert code == 0 and obj["norm"] == pytest.approx(1) and obj["family"] == "Bar"

    def test_function_file_round_trip(self, capsys, tmp_path):
        w = Window.default(8)
        path = tmp_path / "f.json"
        path.write_text(json.dumps(StepFunction.indicator(w, [(0, 1)]).to_json()))
        code, out, _ = run(capsys, "norm", "--p", "const:2", "--f", str(path))
        assert code == 0 and float(out) == pytest.approx(1, rel=1e-14)


class TestUsageErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["norm", "--p", "const:1", "--f", "indicator:0,1"],
            ["norm", "--p", "cubic:2", "--f", "indicator:0,1"],
            ["norm", "--p", "const:2", "--f", "blob:3"],
            ["norm", "--p", "const:2", "--f", "indicator:0"],
            ["norm", "--p", "const:2", "--f", "indicator:0,1", "--window=a,b,c"],
            ["cz", "--lambda", "0", "--f", "indicator:0,1"],
            ["cz", "--lambda", "1/2"],
            ["avg", "--f", "indicator:0,1", "--cubes", "not json"],
            ["adconst", "--p", "const:2", "--resolutions", "x"],
        ],
    )
    def test_exit_2(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2 and "hkd: error" in err

    def test_argparse_errors_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["norm", "--f", "indicator:0,1"])
        assert exc.value.code == 2


class TestWindow:
    def test_parse(self):
        assert parse_window("-3,-1,8") == Window.default(8)


class TestCZ:
    def test_example(self, capsys):
        code, out, _ = run(capsys, "cz", "--f", "indicator:0,1", "--lambda", "1/3", "--t", "0", "--check")
        obj = json.loads(out)
        assert code == 0
        assert obj["cubes"] == [{"t": 0, "k": -1, "m": [0]}]
        assert obj["check"]["ok"]

    def test_violation_exit_1(self, capsys, monkeypatch):
        import hkdyadic.cli as cli

        monkeypatch.setattr(cli, "check_cz", lambda f, res: ["(ii) fails for a planted cube"])
        code, out, _ = run(capsys, "cz", "--f", "indicator:0,1", "--lambda", "1/3", "--check")
        assert code == 1 and json.loads(out)["check"]["problems"] == ["(ii) fails for a planted cube"]
        code, _, err = run(capsys, "cz", "--lambda", "1/2", "--trials", "2", "--window=-3,-1,4")
        assert code == 1 and "planted" in err

    def test_trials(self, capsys):
        code, out, _ = run(capsys, "cz", "--lambda", "1/2", "--trials", "5", "--t", "2", "--window=-3,-1,5")
        assert code == 0 and json.loads(out)["failures"] == 0


class TestMaxfn:
    def test_grid_zero_and_hl(self, capsys):
        w = "--window=-3,-1,2"
        _, out, _ = run(capsys, "maxfn", "--f", "indicator:0,1", "--kind", "grid", "--t", "0", w)
        grid0 = StepFunction.from_json(json.loads(out))
        _, out, _ = run(capsys, "maxfn", "--f", "indicator:0,1", "--kind", "hl", w)
        hl = StepFunction.from_json(json.loads(out))
        _, out, _ = run(capsys, "maxfn", "--f", "indicator:0,1", w)
        full = StepFunction.from_json(json.loads(out))
        win = grid0.window
        i = win.cell_of((-1,))[0]  # cell [-1, -3/4)
        assert grid0.values[i] == 0
        assert full.values[i] > 0
        assert all(a <= b for a, b in zip(grid0.values, full.values))
        assert all(float(a) <= float(b) * (1 + 1e-12) for a, b in zip(full.values, hl.values))

    def test_csv_and_png(self, capsys, tmp_path):
        path = tmp_path / "m.csv"
        code, _, _ = run(capsys, "maxfn", "--f", "indicator:0,1", "--csv", str(path), "--window=-3,-1,2")
        rows = list(csv.reader(path.open()))
        assert code == 0 and rows[0] == ["x", "value"] and len(rows) == 1 + 64
        assert path.with_suffix(".png").read_bytes()[:4] == b"\x89PNG"


class TestAvg:
    def test_aligned(self, capsys):
        code, out, _ = run(capsys, "avg", "--f", "indicator:0,1", "--cubes", '[{"t":0,"k":-1,"m":[0]}]', "--check")
        obj = json.loads(out)
        T = StepFunction.from_json(obj)
        assert code == 0 and obj["check"]["ok"]
        assert T.values[T.window.cell_of((1,))[0]] == 0.5

    def test_shifted_cube_lifts(self, capsys):
        code, out, _ = run(capsys, "avg", "--f", "indicator:0,1", "--cubes", '[{"t":1,"k":0,"m":[-1]}]', "--check")
        T = StepFunction.from_json(json.loads(out))
        assert code == 0 and T.window.sub == 6
        assert T.values[T.window.cell_of((0,))[0]] == pytest.approx(1 / 3)

    def test_overlapping_family(self, capsys):
        cubes = '[{"t":0,"k":0,"m":[0]},{"t":0,"k":1,"m":[0]}]'
        code, _, _ = run(capsys, "avg", "--f", "indicator:0,1", "--cubes", cubes)
        assert code == 2


class TestReports:
    def test_adconst(self, capsys, tmp_path):
        path = tmp_path / "a.json"
        code, _, _ = run(capsys, "adconst", "--p", "const:2", "--resolutions", "4", "--out", str(path))
        obj = json.loads(path.read_text())
        assert code == 0 and obj["best_ratio"] <= 1 + 1e-9 and obj["witness"]["K"] == 4

    def test_equiv_report_outputs(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("HKD_THREADS", "2")
        path = tmp_path / "r.json"
        code, _, _ = run(capsys, "equiv-report", "--p", "const:2", "--resolutions", "4,5", "--check", "--out", str(path))
        obj = json.loads(path.read_text())
        assert code == 0
        assert obj["verdict"] in ("bounded-consistent", "unbounded-consistent", "inconclusive")
        assert set(obj) >= {"trace", "growth", "averaging", "maximal", "timestamp", "config"}
        rows = list(csv.reader(path.with_suffix(".csv").open()))
        assert rows[0] == ["K", "ad_ratio", "maxop_ratio"] and [r[0] for r in rows[1:]] == ["4", "5"]
        assert path.with_suffix(".png").read_bytes()[:4] == b"\x89PNG"

    def test_threads_do_not_change_results(self, capsys, tmp_path, monkeypatch):
        outs = []
        for threads in ("1", "3"):
            monkeypatch.setenv("HKD_THREADS", threads)
            path = tmp_path / f"r{threads}.json"
            run(capsys, "equiv-report", "--p", "jump:3,2", "--resolutions", "3,4,5", "--out", str(path))
            obj = json.loads(path.read_text())
            obj.pop("timestamp")
            outs.append(obj)
        assert outs[0] == outs[1]

    def test_bad_thread_setting_falls_back(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("HKD_THREADS", "many")
        code, _, _ = run(capsys, "equiv-report", "--p", "const:2", "--resolutions", "3", "--out", str(tmp_path / "x.json"))
        assert code == 0
