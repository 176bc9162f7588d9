import json

import pytest

from merit import workloads
from merit.cli import main, parse_tile
from merit.tensor import read_tensor, write_tensor


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_banks_reducible(capsys):
    code, out, _ = run(capsys, "banks", "--coeffs", "1,6,12", "--banks", "8")
    doc = json.loads(out)
    assert code == 0
    assert doc["reducible"] is True
    assert doc["H"] == [["1", "0", "0"], ["x", "1", "0"], ["x", "x", "1"]]
    assert doc["conflicts"]["conflict_free"] is True


def test_banks_irreducible_exit_1(capsys):
    code, out, _ = run(capsys, "banks", "--coeffs", "1,2,6", "--banks", "8", "--json")
    assert code == 1
    assert "\n" not in out.strip()
    assert json.loads(out)["reducible"] is False


def test_banks_search_hash(capsys):
    code, out, _ = run(capsys, "banks", "--coeffs", "4,8,3", "--banks", "8", "--search-hash")
    doc = json.loads(out)
    assert code == 0
    assert doc["hash"] == {"X": [[1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1]], "t": 1}
    assert doc["conflicts"]["conflict_free"] is True


def test_banks_usage_errors(capsys):
    code, _, err = run(capsys, "banks", "--coeffs", "1,2", "--banks", "8")
    assert code == 2 and "coefficients" in err
    code, _, _ = run(capsys, "banks", "--coeffs", "1,2,3", "--banks", "6")
    assert code == 2
    code, _, _ = run(capsys, "banks", "--coeffs", "a,b,c", "--banks", "8")
    assert code == 2


def test_footprint(capsys, tmp_path):
    code, out, _ = run(capsys, "footprint", "--template", "conv2d", "--params", "k=5", "--tile", "16x8,5x5")
    assert code == 0 and json.loads(out)["per_axis"] == [20, 12]
    spec = workloads.build("conv2d", {"k": 5}).viewB
    path = tmp_path / "view.json"
    path.write_text(spec.to_json())
    code, out, _ = run(capsys, "footprint", "--view-json", str(path), "--tile", "16x8,5x5")
    assert code == 0 and json.loads(out)["per_axis"] == [5, 5]


def test_route(capsys):
    code, out, _ = run(capsys, "route", "--banks", "8", "--perm", "3,4,1,2,7,0,5,6")
    assert code == 0 and json.loads(out)["routable"] is True
    code, out, _ = run(capsys, "route", "--banks", "4", "--perm", "0,2,1,3")
    assert code == 1 and json.loads(out)["routable"] is False
    code, _, _ = run(capsys, "route", "--banks", "4", "--perm", "0,0,1,3")
    assert code == 2


def test_run_verify_and_out(capsys, tmp_path):
    dest = tmp_path / "out.mrt"
    code, out, _ = run(capsys, "run", "--template", "conv2d", "--params", "h=8,w=8,k=3", "--dtype", "fix16",
                       "--verify", "--out", str(dest))
    doc = json.loads(out)
    assert code == 0 and doc["verify"]["match"] is True
    assert read_tensor(dest).shape == (8, 8)


def test_run_tiled_reports_traffic(capsys):
    code, out, _ = run(capsys, "run", "--template", "conv2d", "--params", "k=5", "--tile", "16x8,5x5")
    doc = json.loads(out)
    assert code == 0
    assert doc["traffic"]["scratchpad_peak_words"]["A"] == 240
    assert doc["naive_unrolled_words"] == 32 * 32 * 25


def test_run_template_manifest(capsys, tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"template": "gemm", "params": {"m": 3, "n": 2, "k": 4}, "seed": 5,
                                    "tiling": {"t_p": [2, 2], "t_a": [4]}}))
    code, out, _ = run(capsys, "run", "--manifest", str(manifest), "--verify")
    doc = json.loads(out)
    assert code == 0 and doc["traffic"]["passes"] == 2 and doc["verify"]["match"]


def test_run_explicit_manifest(capsys, tmp_path):
    w = workloads.build("gemm", {"m": 2, "n": 3, "k": 2}, seed=1)
    (tmp_path / "va.json").write_text(w.viewA.to_json())
    (tmp_path / "vb.json").write_text(w.viewB.to_json())
    (tmp_path / "prog.json").write_text(w.program.to_json())
    write_tensor(w.srcA, tmp_path / "a.mrt")
    write_tensor(w.srcB, tmp_path / "b.mrt")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"viewA": "va.json", "viewB": "vb.json", "program": "prog.json",
                                    "srcA": "a.mrt", "srcB": "b.mrt", "output": "c.mrt"}))
    code, out, _ = run(capsys, "run", "--manifest", str(manifest))
    assert code == 0 and json.loads(out)["written"] == "c.mrt"
    assert read_tensor(tmp_path / "c.mrt").shape == (2, 3)


def test_run_usage_errors(capsys):
    code, _, err = run(capsys, "run")
    assert code == 2 and "--template" in err
    code, _, _ = run(capsys, "run", "--template", "nope")
    assert code == 2
    code, _, _ = run(capsys, "run", "--template", "conv2d", "--tile", "2x2,2x2")  # reorders accumulation
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--template", "gemm", "--dtype", "float64"])
    assert exc.value.code == 2


def test_pipeline(capsys):
    code, out, _ = run(capsys, "pipeline", "--template", "conv2d", "--params", "k=3", "--tile", "16x8,3x3",
                       "--bandwidth", "8", "--depth", "20", "--fold", "2")
    doc = json.loads(out)
    assert code == 0
    assert {"load_cycles", "compute_cycles", "utilization"} <= set(doc)
    assert 0 < doc["utilization"] <= 1 and doc["fold"] == 2


def test_reuse(capsys):
    code, out, _ = run(capsys, "reuse", "--macs", "128", "--in-words", "8", "--out-words", "16")
    assert code == 0 and json.loads(out)["reuse_rate"] == pytest.approx(5.3333, abs=1e-4)
    code, _, _ = run(capsys, "reuse", "--macs", "1")
    assert code == 2
    code, _, _ = run(capsys, "reuse", "--macs", "1", "--in-words", "0", "--out-words", "0")
    assert code == 2


def test_layouts(capsys):
    code, out, _ = run(capsys, "layouts", "--template", "conv2d", "--params", "h=8,w=8", "--tile", "4x4,3x3",
                       "--banks", "8")
    cands = json.loads(out)["candidates"]
    assert code == 0
    assert any(c["kind"] == "retile" and c["coeffs"] == [1, 6, 12] and c["conflict_free"] for c in cands)


def test_list_templates(capsys):
    code, out, _ = run(capsys, "list-templates", "--json")
    assert code == 0
    assert [t["name"] for t in json.loads(out)["templates"]] == workloads.list_templates()


def test_parse_tile():
    assert parse_tile("16x8,5x5") == ((16, 8), (5, 5))
    assert parse_tile("4x4,") == ((4, 4), ())
