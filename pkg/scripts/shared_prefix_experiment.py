"""Region means of the per-layer CKA curve for synthetic model pairs.

Two copies of YOLOv3 that agree on their first k layers and are independent
afterwards.  Prints backbone/head/all means per k and, with --out, writes the
curve CSV/SVG and the layer-vs-layer heatmap for each k.

    python scripts/shared_prefix_experiment.py --k 0 13 40 75 --out runs/prefix
"""

import argparse
import time
from pathlib import Path

from repsim.analysis import compare_sets
from repsim.fixtures import GeneratorSpec, gen_model_pair
from repsim.render import curve_csv, render_curve, render_heatmap
from repsim.topology import region_means, yolov3_topology


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, nargs="+", default=[0, 13, 40, 75])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--width", type=int, default=64, help="channels per layer (1x1 spatial)")
    ap.add_argument("--metric", default="linear_cka", choices=("linear_cka", "svcca", "pwcca"))
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    topo = yolov3_topology()
    print(f"{'k':>4} {'backbone':>9} {'head':>9} {'all':>9} {'min(0..k-1)':>12} {'secs':>6}")
    for k in args.k:
        t0 = time.perf_counter()
        spec = GeneratorSpec.uniform(args.seed, topo, n=args.n, layer_shape=(1, 1, args.width),
                                     scheme="shared_prefix", k=k)
        a, b = gen_model_pair(spec)
        result = compare_sets(a, b, args.metric, topo_a=topo, topo_b=topo, full_matrix=args.out is not None)
        curve = result.curve
        m = region_means(curve, topo)
        head_min = min(curve[:k]) if k else float("nan")
        print(f"{k:>4} {m['backbone']:9.4f} {m['head']:9.4f} {m['all']:9.4f} {head_min:12.6f} "
              f"{time.perf_counter() - t0:6.1f}")
        if args.out:
            out = args.out / f"k{k:03d}"
            out.mkdir(parents=True, exist_ok=True)
            (out / "curve.csv").write_text(curve_csv({args.metric: curve}, result.layer_indices, topo))
            render_curve({f"shared prefix {k}": curve}, topo, out / "curve.svg")
            render_heatmap(result.matrix, topo, topo, out / "matrix.svg")


if __name__ == "__main__":
    main()
