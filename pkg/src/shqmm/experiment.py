"""Experiment configuration, checkpoints and the train/evaluate/compare runners
behind the command line.

Checkpoints are JSON documents. Complex arrays are nested lists ending in
``[real, imag]`` pairs; Python's shortest round-trip float repr makes the
save/load cycle exact.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import datagen
from .dynamics import HmmModel, HqmmModel, ShqmmModel, hmm_logliks, sequence_logliks
from .learning import TrainConfig, baum_welch_train, fit, initial_hqmm, initial_shqmm, validation_da
from .metrics import DaReport, da_report
from .quantum_core import ConditionalDensityEnsemble, param_count, split_ops, split_point, stack_ops

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
FAMILIES = ("hmm", "hqmm", "shqmm")
METRICS_HEADER = ["epoch", "mean_batch_loss", "val_da", "elapsed_s", "tau"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    family: str = "shqmm"
    name: str = ""
    # structure
    m: int = 2
    dim_o: int = 6
    n_max: int = 3
    k: int = 1
    boundary: str = "periodic"
    w: int = 1
    n: int = 2  # HMM hidden states
    # optimiser
    tau: float = 0.95
    alpha: float = 0.95
    beta: float = 0.90
    epochs: int = 30
    batches: int = 4
    seed: int = 0
    ensemble_init: str = "uniform-mixed"
    loss_scale: str = "symbol"
    bw_iters: int = 30
    # data
    dataset: str | None = None
    split: str | None = None
    generator: dict = field(default_factory=dict)
    out: str = "."

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.family == "hmm":
            return f"{self.n},{self.dim_o}-HMM"
        if self.family == "hqmm":
            return f"{self.m},{self.dim_o},{self.w}-HQMM"
        return f"{self.n_max},k={self.k}-SHQMM(m={self.m})"

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.dim_o < 2:
            raise ConfigError(f"dim_o must be >= 2, got {self.dim_o}")
        if self.family == "hmm":
            if self.n < 1 or self.bw_iters < 0:
                raise ConfigError("hmm needs n >= 1 and bw_iters >= 0")
            return
        self.train_config()

    def train_config(self) -> TrainConfig:
        n_max, k = (self.n_max, self.k) if self.family == "shqmm" else (1, 0)
        try:
            return TrainConfig(
                tau=self.tau, alpha=self.alpha, beta=self.beta, epochs=self.epochs,
                batches=self.batches, n_max=n_max, k=k, m=self.m, dim_o=self.dim_o,
                boundary=self.boundary, seed=self.seed, ensemble_init=self.ensemble_init,
                w=self.w, loss_scale=self.loss_scale,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def n_params(self):
        if self.family == "shqmm":
            return param_count(self.m, 2 * self.k + 1)
        if self.family == "hqmm":
            return self.m * self.m * self.w
        return None


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _encode_complex(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _decode_complex(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def model_to_dict(model, cfg: ExperimentConfig, metrics: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "family": cfg.family,
        "seed": cfg.seed,
        "structure": {},
        "hyperparameters": {
            key: getattr(cfg, key)
            for key in ("tau", "alpha", "beta", "epochs", "batches", "ensemble_init", "loss_scale", "bw_iters")
        },
        "metrics": metrics or {},
    }
    if isinstance(model, HmmModel):
        doc["structure"] = {"n": model.n, "s": model.s}
        doc["T"] = model.T.tolist()
        doc["C"] = model.C.tolist()
        doc["x0"] = model.x0.tolist()
        return doc
    dim_o, j, m, _ = model.ops.shape
    doc["structure"] = {"m": m, "dim_o": dim_o}
    if isinstance(model, ShqmmModel):
        doc["structure"].update(n_max=model.n_max, k=model.k, boundary=model.boundary)
    else:
        doc["structure"]["w"] = j
    doc["kappa"] = _encode_complex(stack_ops(model.ops))
    doc["ensemble0"] = _encode_complex(model.rho0)
    return doc


def model_from_dict(doc: dict):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('format_version')}")
    fam = doc["family"]
    st = doc["structure"]
    if fam == "hmm":
        return HmmModel(np.array(doc["T"]), np.array(doc["C"]), np.array(doc["x0"]))
    kappa = _decode_complex(doc["kappa"])
    ens = _decode_complex(doc["ensemble0"])
    if fam == "shqmm":
        bundle = split_point(kappa, st["dim_o"], 2 * st["k"] + 1, st["m"])
        return ShqmmModel(bundle, ConditionalDensityEnsemble(ens), st["boundary"])
    if fam == "hqmm":
        return HqmmModel(split_ops(kappa, st["dim_o"], st["w"], st["m"]), ens[0])
    raise ConfigError(f"unknown family {fam!r}")


def save_checkpoint(path, model, cfg: ExperimentConfig, metrics: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, cfg, metrics), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        try:
            return model_from_dict(json.load(fh))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: malformed checkpoint ({exc})") from None


def checkpoint_kappa(path) -> np.ndarray:
    with open(path) as fh:
        doc = json.load(fh)
    if "kappa" not in doc:
        raise ConfigError(f"{path}: not a quantum-model checkpoint")
    return _decode_complex(doc["kappa"])


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def model_logliks(model, seqs) -> np.ndarray:
    if isinstance(model, HmmModel):
        return hmm_logliks(model, seqs)
    return sequence_logliks(model, seqs)


def model_dim_o(model) -> int:
    return model.s if isinstance(model, HmmModel) else model.dim_o


def evaluate(model, seqs) -> DaReport:
    dim_o = model_dim_o(model)
    return da_report(model_logliks(model, seqs), [len(s) for s in seqs], dim_o)


def load_data(cfg: ExperimentConfig, dataset: str | None = None, split: str | None = None):
    """Return ``(train, val, test)`` sequence lists for a config."""
    path = dataset or cfg.dataset
    if path is None:
        raise ConfigError("no dataset given")
    ds = datagen.read_dataset(path)
    if ds.dim_o != cfg.dim_o:
        raise ConfigError(f"dataset dimO={ds.dim_o} but config dim_o={cfg.dim_o}")
    split = split or cfg.split or _sibling_split(path)
    if split is None:
        return ds.sequences, [], []
    ds = datagen.read_split(split, ds)
    return ds.subset("train"), ds.subset("val"), ds.subset("test")


def _sibling_split(path):
    import os

    candidate = os.path.splitext(path)[0] + ".split"
    return candidate if os.path.exists(candidate) else None


def run_training(cfg: ExperimentConfig, train, val):
    """Train one model; returns ``(model, history_rows)``."""
    if cfg.family == "hmm":
        model, hist = baum_welch_train(train, cfg.n, cfg.dim_o, cfg.bw_iters, cfg.seed, return_history=True)
        val_da = evaluate(model, val).mean if val else float("nan")
        rows = [[i + 1, -ll / len(train), val_da if i == len(hist) - 1 else "", "", ""] for i, ll in enumerate(hist)]
        return model, rows
    tc = cfg.train_config()
    start = initial_shqmm(tc) if cfg.family == "shqmm" else initial_hqmm(tc)
    model, hist = fit(start, tc, train, val or None)
    rows = []
    for e in range(len(hist.epoch_loss)):
        rows.append([
            e + 1,
            hist.epoch_loss[e],
            hist.val_da[e] if hist.val_da else "",
            round(hist.elapsed[e], 3),
            hist.tau[e],
        ])
    return model, rows


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def write_report(path, report: DaReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "length", "da"])
        for i, (n, v) in enumerate(zip(report.lengths, report.values)):
            w.writerow([i, int(n), repr(float(v))])
        w.writerow(["mean", "", repr(report.mean)])
        w.writerow(["std", "", repr(report.std)])


@dataclass
class CompareRow:
    name: str
    family: str
    n_params: int | None
    test_da: list  # one mean DA per repetition
    test_std: list
    val_da: list

    @property
    def median(self) -> float:
        return float(np.median(self.test_da))

    def as_csv(self):
        return [
            self.name,
            self.family,
            "" if self.n_params is None else self.n_params,
            float(np.mean(self.test_da)),
            float(np.mean(self.test_std)),
            self.median,
            float(np.mean(self.val_da)) if self.val_da else "",
            len(self.test_da),
        ]


COMPARE_HEADER = ["model", "family", "n_params", "test_da_mean", "test_da_std", "test_da_median", "val_da_mean", "repeats"]


def compare(configs, train, val, test, repeats: int = 1, seed_offset: int = 0):
    """Train each config ``repeats`` times (seeds ``seed + r``) and score on ``test``."""
    rows = []
    for cfg in configs:
        row = CompareRow(cfg.label, cfg.family, cfg.n_params(), [], [], [])
        for r in range(repeats):
            rc = ExperimentConfig(**{**asdict(cfg), "seed": cfg.seed + seed_offset + r})
            model, _ = run_training(rc, train, val)
            rep = evaluate(model, test)
            row.test_da.append(rep.mean)
            row.test_std.append(rep.std)
            if val:
                row.val_da.append(evaluate(model, val).mean)
            log.info("%s seed %d: test DA %.4f", cfg.label, rc.seed, rep.mean)
        rows.append(row)
    return rows


def write_compare(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_HEADER)
        for row in rows:
            w.writerow(row.as_csv())


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "compare",
    "evaluate",
    "load_checkpoint",
    "save_checkpoint",
    "run_training",
    "validation_da",
]
