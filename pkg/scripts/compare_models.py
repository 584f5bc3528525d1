"""HMM / HQMM / SHQMM comparison on the synthetic quantum process.

    python3 scripts/compare_models.py --repeats 3 --out runs/compare
"""
import argparse
import os

from shqmm.datagen import generate, split_dataset
from shqmm.experiment import ExperimentConfig, compare, write_compare

REFERENCE = {"hmm": 0.0327, "hqmm": 0.1303, "shqmm": 0.1700}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--data-seed", type=int, default=11)
    p.add_argument("--out", default="runs/compare")
    args = p.parse_args()

    ds = split_dataset(generate("synthetic-hqmm", 40, 3000, seed=args.data_seed), seed=args.data_seed)
    base = dict(m=args.m, dim_o=6, epochs=args.epochs, batches=4)
    configs = [
        ExperimentConfig.from_dict({**base, "family": "hmm", "n": 2, "name": "2,6-HMM"}),
        ExperimentConfig.from_dict({**base, "family": "hqmm", "w": 1, "name": f"{args.m},6,1-HQMM"}),
        ExperimentConfig.from_dict({**base, "family": "shqmm", "n_max": 3, "k": 1, "name": "3,AR-SHQMM"}),
    ]
    rows = compare(configs, ds.subset("train"), ds.subset("val"), ds.subset("test"), args.repeats)
    os.makedirs(args.out, exist_ok=True)
    write_compare(os.path.join(args.out, "compare.csv"), rows)
    print(f"{'model':14s} {'N_P':>4s} {'median DA':>10s} {'reference':>10s}")
    for row in rows:
        n_p = "" if row.n_params is None else str(row.n_params)
        print(f"{row.name:14s} {n_p:>4s} {row.median:10.4f} {REFERENCE[row.family]:10.4f}")


if __name__ == "__main__":
    main()
