import csv
import json

import numpy as np
import pytest

from repsim.activation_store import ActivationSet, ActivationTensor, save_set
from repsim.cli import main
from repsim.detection import BoundingBox, write_boxes
from repsim.fixtures import gaussian_stream


def run(*argv):
    return main([str(a) for a in argv])


def read_curve(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("gen", "--out", out, "--scheme", "shared_prefix", "--k", 13, "--seed", 0) == 0
    return out


def small_set(tmp_path, name, n, layers=3, constant=()):
    tensors = {}
    for i in range(layers):
        v = gaussian_stream(100 * i + len(name), n * 6).reshape(n, 1, 2, 3)
        if i in constant:
            v = np.full_like(v, 0.1)
        tensors[i] = ActivationTensor(name, i, v.astype(np.float32))
    return save_set(ActivationSet(name, 0, (8, 8), tensors), tmp_path / name)


def test_gen_outputs(pair):
    assert (pair / "model_a" / "manifest.json").is_file()
    assert (pair / "model_b" / "layer_106.npy").is_file()
    spec = json.loads((pair / "spec.json").read_text())
    assert spec["scheme"] == "shared_prefix" and spec["k"] == 13


def test_compare_shared_prefix(pair, tmp_path, capsys):
    assert run("compare", "--manifest-a", pair / "model_a/manifest.json",
               "--manifest-b", pair / "model_b/manifest.json", "--out", tmp_path) == 0
    regions = json.loads((tmp_path / "regions.json").read_text())
    means = regions["means"]["linear_cka"]
    assert means["backbone"] > means["head"]
    rows = read_curve(tmp_path / "curve.csv")
    assert len(rows) == 107 and rows[0]["kind"] == "convolution" and rows[4]["kind"] == "residual"
    assert all(float(r["linear_cka"]) >= 0.999 for r in rows[:13])
    for name in ("curve.svg", "matrix.csv", "matrix.svg", "report.json", "run.json"):
        assert (tmp_path / name).is_file()
    assert "backbone" in capsys.readouterr().out


def test_self_comparison_is_one_on_diagonal(pair, tmp_path):
    assert run("self", "--manifest", pair / "model_a/manifest.json", "--out", tmp_path) == 0
    rows = read_curve(tmp_path / "curve.csv")
    assert all(float(r["linear_cka"]) == pytest.approx(1.0, abs=1e-9) for r in rows)
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["blocks"]) == 7 and report["blocks"][0] == {
        "start": 0, "end": 82, "mean": report["blocks"][0]["mean"]}
    assert report["peaks"] == []


def test_rerun_from_run_json_is_identical(pair, tmp_path):
    first, second = tmp_path / "1", tmp_path / "2"
    assert run("compare", "--manifest-a", pair / "model_a/manifest.json",
               "--manifest-b", pair / "model_b/manifest.json", "--metric", "svcca",
               "--samples", 150, "--seed", 3, "--out", first) == 0
    assert run("compare", "--config", first / "run.json", "--out", second) == 0
    for f in sorted(first.iterdir()):
        if f.name != "run.json":
            assert f.read_bytes() == (second / f.name).read_bytes(), f.name


def test_both_orders_pwcca(tmp_path):
    a, b = small_set(tmp_path, "a", 40), small_set(tmp_path, "bb", 40)
    assert run("compare", "--manifest-a", a, "--manifest-b", b, "--metric", "pwcca",
               "--topology", "generic", "--both-orders", "--out", tmp_path / "o") == 0
    rows = read_curve(tmp_path / "o" / "curve.csv")
    assert set(rows[0]) == {"layer_index", "kind", "region", "pwcca", "pwcca_reverse"}
    assert (tmp_path / "o" / "matrix_reverse.csv").is_file()


def test_mismatched_batches_exit_2(tmp_path, capsys):
    a, b = small_set(tmp_path, "a", 20), small_set(tmp_path, "b", 30)
    assert run("compare", "--manifest-a", a, "--manifest-b", b, "--topology", "generic",
               "--out", tmp_path / "o") == 2
    assert "InconsistentBatch" in capsys.readouterr().err


def test_empty_manifest_exit_2(tmp_path, capsys):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"model_id": "e", "seed": 0, "input_size": [1, 1], "layers": []}))
    assert run("self", "--manifest", path, "--out", tmp_path / "o") == 2
    assert "EmptySet" in capsys.readouterr().err


def test_constant_layer_exit_3(tmp_path, capsys):
    a = small_set(tmp_path, "a", 20, layers=5, constant=(1, 3))
    assert run("self", "--manifest", a, "--topology", "generic", "--samples", 20,
               "--out", tmp_path / "o") == 3
    err = capsys.readouterr().err
    assert "NoSignal" in err and "[1, 3]" in err


def test_stats(tmp_path):
    a = small_set(tmp_path, "a", 10, layers=2, constant=(0, 1))
    assert run("stats", "--manifest", a, "--out", tmp_path / "o") == 0
    lines = (tmp_path / "o" / "stats.csv").read_text().splitlines()
    assert lines[0] == "model_id,layer_index,mean,median,std,min,max"
    assert lines[-1].startswith("a,ALL,") and lines[-1].split(",")[4] == "0"


def test_stats_missing_tensor_exit_2(tmp_path, capsys):
    a = small_set(tmp_path, "a", 10, layers=2)
    (a.parent / "layer_001.npy").unlink()
    assert run("stats", "--manifest", a, "--out", tmp_path / "o") == 2
    assert "MissingFile" in capsys.readouterr().err


def test_regions_and_render(pair, tmp_path):
    assert run("self", "--manifest", pair / "model_b/manifest.json", "--out", tmp_path / "s",
               "--samples", 50) == 0
    assert run("regions", "--curve", tmp_path / "s/curve.csv", "--out", tmp_path / "r") == 0
    doc = json.loads((tmp_path / "r/regions.json").read_text())
    assert set(doc["means"]["linear_cka"]) == {"all", "backbone", "head"}
    assert run("render", "--matrix", tmp_path / "s/matrix.csv", "--curve", tmp_path / "s/curve.csv",
               "--out", tmp_path / "v") == 0
    assert (tmp_path / "v/heatmap.svg").read_text().count("<rect") == 107 * 107
    assert (tmp_path / "v/curve.svg").is_file()


def _boxes(tmp_path, gt, pred):
    write_boxes(gt, tmp_path / "gt.jsonl")
    write_boxes(pred, tmp_path / "pred.jsonl")
    return tmp_path / "gt.jsonl", tmp_path / "pred.jsonl"


def test_det_map_perfect(tmp_path):
    gt = [BoundingBox("i0", "van", 0, 0, 20, 20), BoundingBox("i1", "person", 5, 5, 10, 30)]
    pred = [BoundingBox("i0", "car", 0, 0, 20, 20, 0.9), BoundingBox("i1", "person", 5, 5, 10, 30, 0.8)]
    g, p = _boxes(tmp_path, gt, pred)
    assert run("det", "map", "--gt", g, "--pred", p, "--label-map", "gtav", "--out", tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o/det_map.json").read_text())
    assert doc["mAP"] == 1.0 and doc["per_class"]["bus"] is None and doc["label_map"] == "gtav"


def test_det_map_unknown_label(tmp_path, capsys):
    g, p = _boxes(tmp_path, [BoundingBox("i0", "traffic sign", 0, 0, 20, 20)], [])
    assert run("det", "map", "--gt", g, "--pred", p, "--label-map", "bdd", "--out", tmp_path / "o") == 2
    assert "traffic sign" in capsys.readouterr().err


def test_missing_required(tmp_path, capsys):
    assert run("compare", "--out", tmp_path) == 2
    assert "--manifest-a" in capsys.readouterr().err
