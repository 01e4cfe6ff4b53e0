"""Do CKA, SVCCA and PWCCA agree on where two models share layers?

Plants shared layers at the residual (shortcut) indices of YOLOv3 and checks,
per metric, which local peaks of the per-layer curve land on residual layers.

    python scripts/metric_agreement.py --n 100 --width 32
"""

import argparse

from repsim.analysis import layer_curve
from repsim.fixtures import GeneratorSpec, gen_model_pair
from repsim.topology import annotate, region_means, yolov3_topology


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--width", type=int, default=32)
    args = ap.parse_args()

    topo = yolov3_topology()
    residual = topo.indices_of("residual")
    spec = GeneratorSpec.uniform(args.seed, topo, n=args.n, layer_shape=(1, 1, args.width),
                                 scheme="planted_peaks", peaks=tuple(residual))
    a, b = gen_model_pair(spec)
    for metric in ("linear_cka", "svcca", "pwcca"):
        curve = layer_curve(a, b, metric)
        report = annotate(curve, topo)
        found = len(report["residual_peaks"])
        extra = len(report["non_residual_peaks"])
        means = region_means(curve, topo)
        print(f"{metric:>10}: {found}/{len(residual)} residual peaks, {extra} other peaks, "
              f"backbone {means['backbone']:.3f} head {means['head']:.3f}")


if __name__ == "__main__":
    main()
