import csv
import json
import math
import subprocess
import sys

import pytest

from obbloss import OrientedBox, kfiou, mkiou, skew_iou
from obbloss.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def kv(text):
    return {k: v for k, v in (line.split() for line in text.splitlines())}


class TestIoU:
    def test_identical(self, capsys):
        code, out, _ = run(capsys, "iou", "1,2,3,1,30", "1,2,3,1,30")
        assert code == 0
        vals = kv(out)
        assert vals["skew_iou"] == "1.0"
        assert vals["mkiou_a3"] == "1.0"
        assert vals["kfiou"] == "0.3333333333"

    def test_cross_pair(self, capsys):
        _, out, _ = run(capsys, "iou", "0,0,4,2,0", "0,0,2,4,0")
        vals = kv(out)
        assert vals["skew_iou"] == "0.3333333333"
        assert vals["kfiou"] == "0.25"
        assert vals["mkiou_a3"] == "0.5"

    def test_printed_values_match_library(self, capsys):
        p, t = OrientedBox.from_degrees(0.3, -1, 5, 2, 17), OrientedBox.from_degrees(0, 0, 4, 2.5, -8)
        _, out, _ = run(capsys, "iou", "0.3,-1,5,2,17", "0,0,4,2.5,-8", "--alpha", "2.5")
        vals = {k: float(v) for k, v in kv(out).items()}
        assert abs(vals["skew_iou"] - skew_iou(p, t)) <= 5e-11
        assert abs(vals["kfiou"] - kfiou(p, t)) <= 5e-11
        assert abs(vals["mkiou_a2.5"] - mkiou(p, t, 2.5)) <= 5e-11

    def test_json(self, capsys):
        code, out, _ = run(capsys, "iou", "0,0,4,2,0", "0,0,2,4,0", "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert doc["kfiou"] == kfiou(OrientedBox(0, 0, 4, 2, 0), OrientedBox.from_degrees(0, 0, 2, 4, 0))

    def test_negative_literal_after_separator(self, capsys):
        code, out, _ = run(capsys, "iou", "--", "-1,0,2,2,0", "0,0,2,2,0")
        assert code == 0
        assert kv(out)["skew_iou"] == "0.3333333333"

    @pytest.mark.parametrize("argv, code", [
        (["iou", "0,0,4", "0,0,1,1,0"], 1),
        (["iou", "0,0,a,1,0", "0,0,1,1,0"], 1),
        (["iou", "0,0,1,1,0"], 1),
        (["iou", "0,0,0,1,0", "0,0,1,1,0"], 2),
        (["iou", "0,0,1,nan,0", "0,0,1,1,0"], 2),
        (["iou", "0,0,1,1,0", "0,0,1,1,0", "--alpha", "4"], 1),
        (["iou", "0,0,1,1,0", "0,0,1,1,0", "--variant", "gwd"], 1),
        (["nonsense"], 1),
        ([], 1),
    ])
    def test_exit_codes(self, capsys, argv, code):
        assert run(capsys, *argv)[0] == code


class TestSweepSurface:
    def test_default_wh(self, capsys, tmp_path):
        out = tmp_path / "wh.csv"
        code, stdout, _ = run(capsys, "sweep", "wh", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("scale,skew_iou,kfiou3,mkiou_a3,")
        assert len(lines) == 152
        metrics = {l.split()[1]: float(l.split()[2]) for l in stdout.splitlines()}
        assert metrics["mkiou_a3"] < metrics["kfiou3"]

    def test_angle_json(self, capsys, tmp_path):
        out = tmp_path / "a.json"
        code, _, _ = run(capsys, "sweep", "angle", "--alpha", "3", "--format", "json", "--out", str(out))
        doc = json.loads(out.read_text())
        assert code == 0
        assert doc["columns"] == ["dtheta_deg", "skew_iou", "kfiou3", "mkiou_a3"]
        assert len(doc["rows"]) == 181
        last = doc["rows"][-1]
        assert last["dtheta_deg"] == 90.0
        assert last["skew_iou"] == pytest.approx(1 / 7, abs=1e-12)

    def test_steps_one(self, capsys, tmp_path):
        assert run(capsys, "sweep", "wh", "--steps", "1", "--out", str(tmp_path / "x"))[0] == 1

    def test_unwritable(self, capsys, tmp_path):
        assert run(capsys, "sweep", "wh", "--out", str(tmp_path / "missing" / "x.csv"))[0] == 2

    def test_surface_ga_default(self, capsys, tmp_path):
        out = tmp_path / "s.csv"
        assert run(capsys, "surface", "ga", "--out", str(out))[0] == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 41 * 181
        cell = [r for r in rows if float(r["aspect_ratio"]) == 1.0 and float(r["dtheta_deg"]) == 45.0]
        assert float(cell[0]["loss"]) == pytest.approx(0.3, abs=1e-15)

    @pytest.mark.parametrize("grid", ["41", "0x3", "axb"])
    def test_surface_bad_grid(self, capsys, grid):
        assert run(capsys, "surface", "mk", "--grid", grid)[0] == 1


class TestFit:
    def test_init_equals_target(self, capsys, tmp_path):
        trace = tmp_path / "t.csv"
        code, out, _ = run(capsys, "fit", "--target", "0,0,4,1,10", "--init", "0,0,4,1,10", "--trace", str(trace))
        assert code == 0
        assert out.startswith("converged step=0 iou=1.0")
        lines = trace.read_text().splitlines()
        assert lines[0] == "step,cx,cy,w,h,theta,loss,skew_iou"
        assert float(lines[1].split(",")[5]) == pytest.approx(10.0)

    def test_square_ga_vs_plain(self, capsys):
        _, out_ga, _ = run(capsys, "fit", "--target", "0,0,2,2,0", "--seed", "3", "--variant", "mk_ga")
        _, out_mk, _ = run(capsys, "fit", "--target", "0,0,2,2,0", "--seed", "3", "--variant", "mk")
        res = lambda s: float(s.split("angle_residual_deg=")[1])
        assert res(out_ga) <= 2.0
        from obbloss.fitting import FitSpec, angle_residual
        spec = FitSpec(OrientedBox(0, 0, 2, 2, 0), seed=3)
        init_res = math.degrees(angle_residual(spec.init, spec.target))
        assert res(out_mk) == pytest.approx(init_res, abs=1e-4)

    def test_diverged_exit(self, capsys, tmp_path):
        trace = tmp_path / "t.csv"
        code, _, _ = run(capsys, "fit", "--target", "0,0,3,1,0", "--init", "0.5,0,2,1,0", "--lr", "1e308",
                         "--momentum", "0", "--trace", str(trace))
        assert code == 3
        assert trace.exists() and len(trace.read_text().splitlines()) >= 2


def write_jsonl(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))


def box(cx, cy, w, h, t):
    return dict(cx=cx, cy=cy, w=w, h=h, theta_deg=t)


class TestBatch:
    def test_identical_pairs(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [dict(id=f"r{i}", pred=box(i, 0, 3, 1, 20), target=box(i, 0, 3, 1, 20)) for i in range(3)])
        out = tmp_path / "out.csv"
        code, stdout, _ = run(capsys, "batch", str(src), "--out", str(out))
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["id"] for r in rows] == ["r0", "r1", "r2"]
        assert all(float(r["skew_iou"]) == pytest.approx(1.0, abs=1e-12) for r in rows)
        assert "records 3 failed 0" in stdout

    def test_matches_iou_command(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [dict(id="x", pred=box(0, 0, 4, 2, 0), target=box(0, 0, 2, 4, 0))])
        out = tmp_path / "out.json"
        assert run(capsys, "batch", str(src), "--format", "json", "--out", str(out))[0] == 0
        row = json.loads(out.read_text())["rows"][0]
        _, single, _ = run(capsys, "iou", "0,0,4,2,0", "0,0,2,4,0", "--format", "json")
        single = json.loads(single)
        for k, v in single.items():
            assert row[k] == v

    def test_csv_input(self, capsys, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text("id,pred_cx,pred_cy,pred_w,pred_h,pred_theta_deg,target_cx,target_cy,target_w,target_h,target_theta_deg\n"
                       "a,0,0,4,2,0,0,0,2,4,0\n")
        out = tmp_path / "o.csv"
        assert run(capsys, "batch", str(src), "--out", str(out))[0] == 0
        row = next(csv.DictReader(out.open()))
        assert float(row["kfiou"]) == pytest.approx(0.25)

    def test_partial_failures_reported(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        good = [json.dumps(dict(id=f"g{i}", pred=box(0, 0, 2, 1, 0), target=box(0, 0, 2, 1, 5))) for i in range(3)]
        src.write_text("\n".join(good + ["{not json", json.dumps(dict(id="g0", pred=box(0, 0, 1, 1, 0),
                                                                      target=box(0, 0, 1, 1, 0)))]) + "\n")
        code, _, err = run(capsys, "batch", str(src), "--out", str(tmp_path / "o.csv"))
        assert code == 0
        assert "in.jsonl:4:" in err and "in.jsonl:5:" in err and "duplicate" in err

    def test_mostly_bad(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text("\n".join([
            json.dumps(dict(id="a", pred=box(0, 0, 2, 1, 0), target=box(0, 0, 2, 1, 0))),
            json.dumps(dict(id="b", pred=box(0, 0, -2, 1, 0), target=box(0, 0, 2, 1, 0))),
            json.dumps(dict(id="c", pred=dict(cx=0), target=box(0, 0, 2, 1, 0))),
        ]) + "\n")
        code, _, err = run(capsys, "batch", str(src), "--out", str(tmp_path / "o.csv"))
        assert code == 2
        assert "in.jsonl:2:" in err and "in.jsonl:3:" in err

    def test_empty_file(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text("")
        assert run(capsys, "batch", str(src))[0] == 1

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "batch", str(tmp_path / "nope.jsonl"))[0] == 2

    def test_bad_csv_header(self, capsys, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text("a,b\n1,2\n")
        assert run(capsys, "batch", str(src))[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "obbloss", "iou", "0,0,2,2,0", "1,0,2,2,0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "skew_iou" in proc.stdout
