"""Final validation DA against the distance between initial Kraus points.

Trains one SHQMM per seed from different Stiefel initialisations and reports
the spread of final DA together with each start's distance from seed 0.
"""
import argparse

import numpy as np

from shqmm.datagen import generate, split_dataset
from shqmm.learning import TrainConfig, stiefel_distance, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--length", type=int, default=500)
    p.add_argument("--epochs", type=int, default=30)
    args = p.parse_args()

    ds = split_dataset(generate("classical-hmm", 40, args.length, seed=7), seed=7)
    train_data, val = ds.subset("train"), ds.subset("val")
    finals, starts = [], []
    for seed in range(args.seeds):
        cfg = TrainConfig(m=6, dim_o=6, n_max=3, k=1, epochs=args.epochs, seed=seed)
        _, hist = train(cfg, train_data, val)
        starts.append(hist.kappa0)
        finals.append(hist.val_da[-1])
        print(f"seed {seed}: d(init, init_0) = {stiefel_distance(starts[0], hist.kappa0):.3f}, "
              f"final val DA {finals[-1]:.4f}")
    print(f"mean {np.mean(finals):.4f}  STD {np.std(finals):.4f}")


if __name__ == "__main__":
    main()
