"""Cosine model-accuracy benchmark: RMSE, PVA and hyperparameter counts per kernel.

    python scripts/run_cosine_benchmark.py --seeds 5 --out-csv cosine.csv
"""
import argparse
import json
import warnings

from mixkpls.benchmarks import cosine_problem, run_model_benchmark
from mixkpls.gp import kernel_config

LABELS = {
    "GD": ("gd", {}),
    "CR": ("cr", {}),
    "EHH": ("ehh", {}),
    "HH": ("hh", {}),
    "HH_PLS(2x2)": ("hh-pls", {"pls_levels": 2}),
    "HH_PLS(3x3)": ("hh-pls", {"pls_levels": 3}),
    "EHH_PLS(2x2)": ("ehh-pls", {"pls_levels": 2}),
    "CR_PLS(2)": ("cr-pls", {"pls_components": 2}),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kernels", default="GD,CR,HH_PLS(2x2),HH",
                    help="comma list from: " + ", ".join(LABELS))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--doe-size", type=int, default=98)
    ap.add_argument("--starts", type=int, default=10)
    ap.add_argument("--max-evals-per-dim", type=int, default=150)
    ap.add_argument("--out-csv")
    args = ap.parse_args()
    warnings.simplefilter("ignore")

    kernels = {}
    for label in args.kernels.split(","):
        name, kw = LABELS[label]
        kernels[label] = kernel_config(name, **kw)
    report = run_model_benchmark(cosine_problem(), kernels, args.doe_size, list(range(args.seeds)),
                                 starts=args.starts, max_evals_per_dim=args.max_evals_per_dim)
    if args.out_csv:
        report.to_csv(args.out_csv)
    print(json.dumps(report.medians(), indent=2))


if __name__ == "__main__":
    main()
