"""Constrained-inversion curves of the robust and standard desk models.

Writes ``<out>/sweep_robust.csv`` and ``<out>/sweep_standard.csv`` plus a
``floors.json`` with each model's unconstrained floor.
"""
import argparse
import json
import os

from robustrep.data import write_curve_csv
from robustrep.experiments import DeskConfig, cached_model, desk_test_split, measure_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/sweep-curves")
    ap.add_argument("--cache", default=None)
    ap.add_argument("--pairs", type=int, default=None, help="override the number of pairs")
    args = ap.parse_args()
    cfg = DeskConfig()
    if args.pairs:
        cfg.sweep_pairs = args.pairs
    os.makedirs(args.out, exist_ok=True)
    test = desk_test_split(cfg, args.cache)
    floors = {}
    for kind in ("robust", "standard"):
        curve, floor = measure_sweep(cached_model(cfg, kind, args.cache), test, cfg)
        write_curve_csv(curve, os.path.join(args.out, f"sweep_{kind}.csv"))
        floors[kind] = floor
        print(kind, " ".join(f"{r:g}:{m:.3f}" for r, m in zip(curve.radii, curve.mean)), f"floor {floor:.3f}")
    with open(os.path.join(args.out, "floors.json"), "w") as fh:
        json.dump(floors, fh, indent=2)


if __name__ == "__main__":
    main()
