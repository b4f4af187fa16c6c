"""Train the three desk models (cached) and measure every desk experiment.

    python scripts/desk_run.py --report runs/desk.json
    python scripts/desk_run.py --preregister tests/preregistered.yaml

``--preregister`` records the protocol (pair counts, budgets, seeds) and the
pass thresholds together with the values this run observed, so that the
acceptance suite is checked against numbers fixed before it was written.
"""
import argparse
import json
import logging
import os
import time

import yaml

from robustrep.experiments import (
    DESK_RADII,
    DeskConfig,
    desk_models,
    desk_test_split,
    measure_accuracy,
    measure_gray_visualization,
    measure_interpolation,
    measure_inversion_proxy,
    measure_manipulation,
    measure_sweep,
)

THRESHOLDS = {
    "adv_gap_points": 30.0,
    "sweep_monotone_tol": 0.02,
    "sweep_ratio_at_eps": 2.0,
    "floor_tol": 0.15,
    "proxy_gap_points": 25.0,
    "interp_endpoint_max": 0.05,
    "interp_monotone_tol": 0.05,
    "manip_violations": 0,
    "manip_success_min": 0.95,
    "noise_inversion_max": 0.05,
}


def run(cfg: DeskConfig, root=None) -> dict:
    t0 = time.time()
    nets = desk_models(cfg, root)
    test = desk_test_split(cfg, root)
    eps = cfg.eps
    report = {"trained_in_s": round(time.time() - t0, 1)}
    report["accuracy"] = measure_accuracy({k: nets[k] for k in ("robust", "standard")}, test, eps,
                                          steps=cfg.eval_steps)
    report["sweep"] = {}
    for kind in ("robust", "standard"):
        curve, floor = measure_sweep(nets[kind], test, cfg)
        report["sweep"][kind] = {"radii": curve.radii, "mean": curve.mean, "band_lo": curve.band_lo,
                                 "band_hi": curve.band_hi, "floor": floor}
    report["proxy"] = {kind: measure_inversion_proxy(nets[kind], nets["judge"], test, cfg)
                       for kind in ("robust", "standard")}
    report["interpolation"] = measure_interpolation(nets["robust"], test, cfg)
    report["manipulation"] = {kind: measure_manipulation(nets[kind], test, cfg)
                              for kind in ("robust", "standard")}
    report["gray_visualization"] = {kind: measure_gray_visualization(nets[kind], cfg)
                                    for kind in ("robust", "standard")}
    report["elapsed_s"] = round(time.time() - t0, 1)
    return report


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--cache", default=None, help="cache directory (default $ROBUSTREP_CACHE or ./.desk_cache)")
    ap.add_argument("--report", default=None, help="write the full report as JSON")
    ap.add_argument("--preregister", default=None, help="write protocol + thresholds YAML")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = DeskConfig()
    report = run(cfg, args.cache)
    text = json.dumps(report, indent=2)
    print(text)
    if args.report:
        os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    if args.preregister:
        record = {
            "protocol": cfg.protocol(),
            "radii": list(DESK_RADII),
            "thresholds": THRESHOLDS,
            "oracle_run": {
                "proxy_agreement": {k: v["agreement"] for k, v in report["proxy"].items()},
                "noise_inversion_distance": {k: v["mean_normalized_distance"]
                                             for k, v in report["proxy"].items()},
                "adversarial_accuracy": {k: v["adversarial"] for k, v in report["accuracy"].items()},
                "clean_accuracy": {k: v["clean"] for k, v in report["accuracy"].items()},
            },
        }
        with open(args.preregister, "w") as fh:
            yaml.safe_dump(record, fh, sort_keys=True)


if __name__ == "__main__":
    main()
