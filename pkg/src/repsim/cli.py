"""Command-line entry point: ``repsim <subcommand> ...``.

Every run writes ``run.json`` into its output directory with the resolved
configuration; ``repsim <subcommand> --config run.json [--out DIR]`` replays it.

Exit codes: 0 ok, 2 input error, 3 computation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .activation_store import ActivationSet, load_set, save_set
from .activation_stats import model_stats, stats_csv
from .analysis import compare_sets, normalize_metric
from .detection import DEFAULT_MIN_AREA, evaluate, read_boxes, resolve_label_map
from .errors import InconsistentBatch, InputError, IoFailure, LengthMismatch, RepSimError
from .fixtures import GeneratorSpec, choose_examples, gen_model_pair
from .render import (
    SimilarityMatrix,
    curve_csv,
    curve_svg,
    heatmap_svg,
    matrix_csv,
    read_curve_csv,
    read_matrix_csv,
)
from .topology import NetworkTopology, annotate, region_means, resolve_topology

DEFAULTS = {
    "compare": {"metric": "cka", "topology": "yolov3", "samples": 200, "seed": 0,
                "variance_kept": 0.99, "both_orders": False},
    "self": {"metric": "cka", "topology": "yolov3", "samples": 200, "seed": 0,
             "variance_kept": 0.99},
    "stats": {"pooled": False, "manifest_b": None},
    "regions": {"topology": "yolov3", "column": None},
    "det-map": {"label_map": "none", "min_area": DEFAULT_MIN_AREA},
    "gen": {"spec": None, "seed": 0, "topology": "yolov3", "scheme": "shared_prefix", "k": 13,
            "peaks": "", "n": 200, "layer_shape": "1,1,64", "layers": None},
    "render": {"topology": "yolov3", "matrix": None, "curve": None},
}
REQUIRED = {
    "compare": ("manifest_a", "manifest_b", "out"),
    "self": ("manifest_a", "out"),
    "stats": ("manifest_a", "out"),
    "regions": ("curve", "out"),
    "det-map": ("gt", "pred", "out"),
    "gen": ("out",),
    "render": ("out",),
}


def _round9(obj):
    if isinstance(obj, float):
        return float(format(obj, ".9g"))
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


def _write_text(out: Path, name: str, text: str) -> None:
    try:
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {out / name}: {exc}") from exc


def _write_json(out: Path, name: str, doc) -> None:
    _write_text(out, name, json.dumps(_round9(doc), indent=2, sort_keys=False) + "\n")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc
    return out


def _topology_for(spec: str, n_layers: int) -> NetworkTopology:
    topo = resolve_topology(spec, n_layers)
    if len(topo) != n_layers:
        raise LengthMismatch(f"topology {topo.name!r} has {len(topo)} layers but the data has {n_layers}; "
                             "pass --topology generic or a matching topology file")
    return topo


def _subsample(sets: list[ActivationSet], samples: int, seed: int) -> tuple[list[ActivationSet], int]:
    if samples < 2:
        raise InputError("--samples must be at least 2")
    n = sets[0].n
    if n <= samples:
        return sets, n
    rows = choose_examples(n, samples, seed)
    return [s.take(rows) for s in sets], samples


# --------------------------------------------------------------------------
# subcommands


def _similarity_outputs(out: Path, cfg, a: ActivationSet, b: ActivationSet, self_mode: bool) -> dict:
    metric = normalize_metric(cfg["metric"])
    topo = _topology_for(cfg["topology"], len(a))
    if len(b) != len(a):
        raise LengthMismatch(f"{a.model_id!r} has {len(a)} layers, {b.model_id!r} has {len(b)}")
    result = compare_sets(a, b, metric, cfg["variance_kept"], topo, topo)
    curves = {metric: result.curve}
    matrices = {"matrix": result.matrix}
    if cfg.get("both_orders") and not self_mode:
        rev = compare_sets(b, a, metric, cfg["variance_kept"], topo, topo)
        curves[f"{metric}_reverse"] = rev.curve
        matrices["matrix_reverse"] = rev.matrix
    label = f"{a.model_id} vs {b.model_id}"
    _write_text(out, "curve.csv", curve_csv(curves, result.layer_indices, topo))
    _write_text(out, "curve.svg", curve_svg({label if k == metric else f"{b.model_id} vs {a.model_id}": c
                                             for k, c in curves.items()}, topo))
    for name, m in matrices.items():
        labels = result.layer_indices
        _write_text(out, f"{name}.csv", matrix_csv(m, labels, labels))
        _write_text(out, f"{name}.svg", heatmap_svg(m, topo, topo))
    regions = {"model_a": a.model_id, "model_b": b.model_id, "metric": metric, "topology": topo.name,
               "means": {k: region_means(c, topo) for k, c in curves.items()}}
    _write_json(out, "regions.json", regions)
    report = annotate(result.matrix.values.tolist(), topo)
    report.update({"model_a": a.model_id, "model_b": b.model_id, "metric": metric, "n_examples": a.n})
    _write_json(out, "report.json", report)
    return regions


def cmd_compare(cfg) -> int:
    out = _out_dir(cfg)
    a = load_set(cfg["manifest_a"], mmap=True)
    b = load_set(cfg["manifest_b"], mmap=True)
    if a.n != b.n:
        raise InconsistentBatch(f"{a.model_id!r} has n={a.n} but {b.model_id!r} has n={b.n}")
    (a, b), _ = _subsample([a, b], cfg["samples"], cfg["seed"])
    regions = _similarity_outputs(out, cfg, a, b, self_mode=False)
    print(json.dumps(_round9(regions["means"])))
    return 0


def cmd_self(cfg) -> int:
    out = _out_dir(cfg)
    a = load_set(cfg["manifest_a"], mmap=True)
    (a,), _ = _subsample([a], cfg["samples"], cfg["seed"])
    regions = _similarity_outputs(out, cfg, a, a, self_mode=True)
    print(json.dumps(_round9(regions["means"])))
    return 0


def cmd_stats(cfg) -> int:
    out = _out_dir(cfg)
    paths = [cfg["manifest_a"]] + ([cfg["manifest_b"]] if cfg.get("manifest_b") else [])
    models = [model_stats(load_set(p, mmap=True), pooled=cfg["pooled"]) for p in paths]
    text = stats_csv(models)
    _write_text(out, "stats.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_regions(cfg) -> int:
    out = _out_dir(cfg)
    curves, indices = read_curve_csv(cfg["curve"])
    topo = _topology_for(cfg["topology"], len(indices))
    if cfg.get("column"):
        if cfg["column"] not in curves:
            raise InputError(f"no column {cfg['column']!r} in {cfg['curve']}")
        curves = {cfg["column"]: curves[cfg["column"]]}
    doc = {"topology": topo.name, "means": {k: region_means(c, topo) for k, c in curves.items()}}
    _write_json(out, "regions.json", doc)
    print(json.dumps(_round9(doc["means"])))
    return 0


def cmd_det_map(cfg) -> int:
    out = _out_dir(cfg)
    label_map = resolve_label_map(cfg["label_map"])
    report = evaluate(read_boxes(cfg["gt"]), read_boxes(cfg["pred"]), label_map, float(cfg["min_area"]))
    doc = report.to_json()
    doc["label_map"] = label_map.name if label_map else None
    doc["min_area"] = float(cfg["min_area"])
    _write_json(out, "det_map.json", doc)
    print(json.dumps(_round9({"mAP": report.mAP})))
    return 0


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _gen_spec(cfg) -> GeneratorSpec:
    if cfg.get("spec"):
        return GeneratorSpec.load(cfg["spec"])
    shape = _parse_ints(cfg["layer_shape"])
    doc = {"seed": int(cfg["seed"]), "topology": cfg["topology"], "scheme": cfg["scheme"],
           "k": int(cfg["k"]) if cfg["scheme"] == "shared_prefix" else 0,
           "peaks": list(_parse_ints(cfg["peaks"])), "n": int(cfg["n"]), "layer_shape": list(shape)}
    if cfg.get("layers") is not None:
        doc["layers"] = int(cfg["layers"])
    return GeneratorSpec.from_json(doc)


def cmd_gen(cfg) -> int:
    out = _out_dir(cfg)
    spec = _gen_spec(cfg)
    a, b = gen_model_pair(spec)
    paths = [save_set(s, out / s.model_id) for s in (a, b)]
    _write_json(out, "spec.json", spec.to_json())
    for p in paths:
        print(p)
    return 0


def cmd_render(cfg) -> int:
    out = _out_dir(cfg)
    if not cfg.get("matrix") and not cfg.get("curve"):
        raise InputError("render needs --matrix and/or --curve")
    if cfg.get("matrix"):
        values, rows, cols = read_matrix_csv(cfg["matrix"])
        ta = _topology_for(cfg["topology"], len(rows))
        tb = _topology_for(cfg["topology"], len(cols))
        m = SimilarityMatrix(Path(cfg["matrix"]).stem, Path(cfg["matrix"]).stem, values, ta, tb)
        _write_text(out, "heatmap.svg", heatmap_svg(m, ta, tb))
    if cfg.get("curve"):
        curves, indices = read_curve_csv(cfg["curve"])
        topo = _topology_for(cfg["topology"], len(indices))
        _write_text(out, "curve.svg", curve_svg(curves, topo))
    return 0


COMMANDS = {
    "compare": cmd_compare,
    "self": cmd_self,
    "stats": cmd_stats,
    "regions": cmd_regions,
    "det-map": cmd_det_map,
    "gen": cmd_gen,
    "render": cmd_render,
}


# --------------------------------------------------------------------------
# argument parsing


def _add(p, *flags, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def _common(p, *names):
    _add(p, "--out", help="output directory")
    _add(p, "--config", help="replay a run.json; explicit flags override it")
    if "manifest_a" in names:
        _add(p, "--manifest-a", "--manifest", dest="manifest_a", help="activation manifest (JSON)")
    if "manifest_b" in names:
        _add(p, "--manifest-b", dest="manifest_b", help="second activation manifest")
    if "metric" in names:
        _add(p, "--metric", choices=("cka", "linear_cka", "svcca", "pwcca"), help="default: cka")
        _add(p, "--variance-kept", dest="variance_kept", type=float, help="SVCCA variance threshold (0.99)")
    if "topology" in names:
        _add(p, "--topology", help="yolov3 (default), generic, or a topology JSON file")
    if "samples" in names:
        _add(p, "--samples", type=int, help="examples to use, subsampled with --seed (200)")
    if "seed" in names:
        _add(p, "--seed", type=int, help="run seed (0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repsim",
                                     description="Layer-wise representation similarity for detection networks.")
    parser.add_argument("--version", action="version", version=f"repsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="layer-wise similarity between two models")
    _common(p, "manifest_a", "manifest_b", "metric", "topology", "samples", "seed")
    _add(p, "--both-orders", dest="both_orders", action="store_true",
         help="also report the reversed argument order (meaningful for pwcca)")

    p = sub.add_parser("self", help="layer-vs-layer similarity within one model")
    _common(p, "manifest_a", "metric", "topology", "samples", "seed")

    p = sub.add_parser("stats", help="activation summary statistics")
    _common(p, "manifest_a", "manifest_b")
    _add(p, "--pooled", action="store_true", help="pool all activations instead of averaging per layer")

    p = sub.add_parser("regions", help="backbone/head/all means of a curve CSV")
    _common(p, "topology")
    _add(p, "--curve", help="curve.csv from compare/self")
    _add(p, "--column", help="score column to aggregate (default: all)")

    det = sub.add_parser("det", help="detection evaluation")
    det_sub = det.add_subparsers(dest="det_command", required=True)
    p = det_sub.add_parser("map", help="mAP@0.5 over JSON-lines box files")
    _common(p)
    _add(p, "--gt", help="ground-truth boxes (JSON lines)")
    _add(p, "--pred", help="predicted boxes with scores (JSON lines)")
    _add(p, "--label-map", dest="label_map", help="bdd, gtav, none, or a JSON file")
    _add(p, "--min-area", dest="min_area", type=float, help="drop ground truth below this area (100)")

    p = sub.add_parser("gen", help="write a synthetic model pair")
    _common(p, "topology", "seed")
    _add(p, "--spec", help="generator spec JSON")
    _add(p, "--scheme", choices=("independent", "shared_prefix", "planted_peaks"))
    _add(p, "--k", type=int, help="shared prefix length (13)")
    _add(p, "--peaks", help="comma-separated shared layers for planted_peaks")
    _add(p, "--n", type=int, help="examples per layer (200)")
    _add(p, "--layer-shape", dest="layer_shape", help="per-example shape, e.g. 1,1,64")
    _add(p, "--layers", type=int, help="layer count for --topology generic")

    p = sub.add_parser("render", help="SVG from matrix/curve CSV")
    _common(p, "topology")
    _add(p, "--matrix", help="matrix.csv")
    _add(p, "--curve", help="curve.csv")
    return parser


def resolve_config(args: argparse.Namespace) -> tuple[str, dict]:
    given = vars(args).copy()
    command = given.pop("command")
    if command == "det":
        command = "det-" + given.pop("det_command")
    cfg = dict(DEFAULTS[command])
    config_path = given.pop("config", None)
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read run config {config_path}: {exc}") from None
        if doc.get("subcommand") != command:
            raise InputError(f"{config_path} is a {doc.get('subcommand')!r} run, not {command!r}")
        cfg.update(doc.get("config", {}))
    cfg.update(given)
    missing = [k for k in REQUIRED[command] if not cfg.get(k)]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise InputError(f"{command}: missing required option(s) {flags}")
    return command, cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        command, cfg = resolve_config(args)
        out = _out_dir(cfg)
        _write_json(out, "run.json", {"tool": "repsim", "version": __version__,
                                      "subcommand": command, "config": cfg})
        return COMMANDS[command](cfg)
    except RepSimError as exc:
        print(f"repsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
