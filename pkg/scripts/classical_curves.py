"""Validation-DA learning curves on the classical benchmark process.

Writes one CSV per seed (epoch, loss, val DA) for plotting.

    python3 scripts/classical_curves.py --seeds 0 1 2 --out runs/curves
"""
import argparse
import csv
import os

from shqmm.datagen import generate, split_dataset
from shqmm.learning import TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--length", type=int, default=500)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", default="runs/curves")
    args = p.parse_args()

    ds = split_dataset(generate("classical-hmm", 40, args.length, seed=7), seed=7)
    train_data, val = ds.subset("train"), ds.subset("val")
    os.makedirs(args.out, exist_ok=True)
    for seed in args.seeds:
        cfg = TrainConfig(m=6, dim_o=6, n_max=args.n_max, k=args.k, epochs=args.epochs, seed=seed)
        _, hist = train(cfg, train_data, val)
        path = os.path.join(args.out, f"seed{seed}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "val_da"])
            for e, (loss, da) in enumerate(zip(hist.epoch_loss, hist.val_da), start=1):
                w.writerow([e, loss, da])
        print(f"seed {seed}: final val DA {hist.val_da[-1]:.4f} ({hist.wall_time:.0f}s) -> {path}")


if __name__ == "__main__":
    main()
