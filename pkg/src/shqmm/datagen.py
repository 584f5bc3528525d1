"""Seeded dataset generation, splitting and the plain-text dataset format.

File format: a header line ``# dimO=<s> count=<W> length=<l>`` followed by one
sequence per line as space-separated decimal symbols. ``length`` is the common
sequence length, or ``-1`` when lengths differ.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import HmmModel, HqmmModel, apply_channel, _ens_trace

SPLITS = ("train", "val", "test")

# Transition (column = current state) and emission (row = symbol) matrices of
# the classical benchmark process.
BENCH_T = np.array([
    [0.80, 0.01, 0.00, 0.10, 0.30, 0.00],
    [0.02, 0.02, 0.10, 0.15, 0.05, 0.00],
    [0.08, 0.03, 0.10, 0.40, 0.05, 0.50],
    [0.05, 0.04, 0.50, 0.35, 0.00, 0.50],
    [0.03, 0.50, 0.03, 0.00, 0.60, 0.00],
    [0.02, 0.40, 0.27, 0.00, 0.00, 0.00],
])
BENCH_C = np.array([
    [0.20, 0.00, 0.05, 0.95, 0.01, 0.05],
    [0.70, 0.10, 0.05, 0.01, 0.05, 0.05],
    [0.05, 0.80, 0.10, 0.02, 0.05, 0.04],
    [0.04, 0.04, 0.02, 0.00, 0.84, 0.11],
    [0.01, 0.03, 0.70, 0.01, 0.02, 0.20],
    [0.00, 0.03, 0.08, 0.01, 0.03, 0.55],
])

SYNTHETIC_QUANTUM_SEED = 2024


class DatasetError(ValueError):
    pass


@dataclass
class ObservationDataset:
    dim_o: int
    sequences: list
    tags: list | None = field(default=None)

    def __post_init__(self):
        self.sequences = [np.asarray(s, dtype=np.int64) for s in self.sequences]
        for i, s in enumerate(self.sequences):
            if s.ndim != 1 or s.size == 0:
                raise DatasetError(f"sequence {i} is empty")
            if s.min() < 0 or s.max() >= self.dim_o:
                raise DatasetError(f"sequence {i} has symbols outside 0..{self.dim_o - 1}")
        if self.tags is not None and len(self.tags) != len(self.sequences):
            raise DatasetError("one tag per sequence required")

    def __len__(self):
        return len(self.sequences)

    def subset(self, tag: str) -> list:
        if self.tags is None:
            raise DatasetError("dataset has no split tags")
        return [s for s, t in zip(self.sequences, self.tags) if t == tag]

    @property
    def length(self) -> int:
        lengths = {len(s) for s in self.sequences}
        return lengths.pop() if len(lengths) == 1 else -1


def paper_classical() -> HmmModel:
    """Six-state, six-symbol classical benchmark HMM (starts in state 0)."""
    x0 = np.zeros(6)
    x0[0] = 1.0
    # HmmModel checks column-stochasticity, guarding the transcription
    return HmmModel(BENCH_T, BENCH_C, x0)


def synthetic_quantum(seed: int = SYNTHETIC_QUANTUM_SEED, m: int = 6, dim_o: int = 6) -> HqmmModel:
    """Seeded random HQMM with one Kraus operator per symbol.

    ``K_y = U_y P_y`` with ``P_y`` the square root of a random partition of
    unity and ``U_y`` Haar unitaries, so ``sum K_y^H K_y = sum P_y^2 = I`` holds by
    construction. The partition is drawn with a low Dirichlet concentration,
    which makes each symbol prefer a distinct region of state space and gives
    the process memory.
    """
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.full(dim_o, 0.3), size=m).T  # (dim_o, m), columns sum to 1
    basis = _haar_unitary(rng, m)
    ops = np.empty((dim_o, 1, m, m), dtype=np.complex128)
    for y in range(dim_o):
        P = basis @ np.diag(np.sqrt(weights[y])) @ basis.conj().T
        ops[y, 0] = _haar_unitary(rng, m) @ P
    return HqmmModel(ops, np.eye(m) / m)


def _haar_unitary(rng, m):
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


PRESETS = {"paper-classical": paper_classical, "synthetic-quantum": synthetic_quantum}


def _draw(rng, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs`` (rows sum to 1)."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    out = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(out, probs.shape[1] - 1)


def sample_hmm(model: HmmModel, count: int, length: int, seed: int) -> ObservationDataset:
    """Draw ``count`` sequences: hidden transition, then emission, per step."""
    if count < 1 or length < 1:
        raise ValueError("count and length must be >= 1")
    rng = np.random.default_rng(seed)
    h = _draw(rng, np.broadcast_to(model.x0, (count, model.n)))
    out = np.empty((count, length), dtype=np.int64)
    for t in range(length):
        h = _draw(rng, model.T[:, h].T)
        out[:, t] = _draw(rng, model.C[:, h].T)
    return ObservationDataset(model.s, list(out))


def sample_hqmm(model: HqmmModel, count: int, length: int, seed: int) -> ObservationDataset:
    """Sample by filtering: draw ``y`` from the symbol distribution, then update."""
    if count < 1 or length < 1:
        raise ValueError("count and length must be >= 1")
    rng = np.random.default_rng(seed)
    dim_o = model.dim_o
    rho = np.broadcast_to(model.rho, (count, 1) + model.rho.shape).copy()
    out = np.empty((count, length), dtype=np.int64)
    rows = np.arange(count)
    for t in range(length):
        # (count, dim_o, 1, m, m): unnormalised posterior for every symbol
        nxt = apply_channel(model.ops[None], rho[:, None], model.shifts, True)
        p = _ens_trace(nxt)
        y = _draw(rng, p / p.sum(axis=1, keepdims=True))
        out[:, t] = y
        rho = nxt[rows, y] / p[rows, y][:, None, None, None]
    return ObservationDataset(dim_o, list(out))


def generate(kind: str, count: int, length: int, seed: int, preset: str | None = None, model=None) -> ObservationDataset:
    if model is None:
        preset = preset or ("paper-classical" if kind == "classical-hmm" else "synthetic-quantum")
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}")
        model = PRESETS[preset]()
    if isinstance(model, HmmModel):
        return sample_hmm(model, count, length, seed)
    return sample_hqmm(model, count, length, seed)


def split_dataset(ds: ObservationDataset, proportions=(20, 10, 10), seed: int = 0) -> ObservationDataset:
    """Tag sequences train/val/test by a seeded shuffle."""
    proportions = tuple(int(p) for p in proportions)
    if len(proportions) != 3 or min(proportions) < 0 or sum(proportions) != len(ds):
        raise DatasetError(f"proportions {proportions} do not sum to {len(ds)} sequences")
    order = np.random.default_rng(seed).permutation(len(ds))
    tags = [None] * len(ds)
    start = 0
    for tag, n in zip(SPLITS, proportions):
        for i in order[start : start + n]:
            tags[i] = tag
        start += n
    return ObservationDataset(ds.dim_o, ds.sequences, tags)


def write_dataset(ds: ObservationDataset, path) -> None:
    lines = [f"# dimO={ds.dim_o} count={len(ds)} length={ds.length}"]
    lines += [" ".join(map(str, s.tolist())) for s in ds.sequences]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_split(ds: ObservationDataset, path) -> None:
    """One tag per line, aligned with the dataset file."""
    with open(path, "w") as fh:
        fh.write("".join(f"{t}\n" for t in ds.tags))


def read_split(path, ds: ObservationDataset) -> ObservationDataset:
    with open(path) as fh:
        tags = [ln.strip() for ln in fh if ln.strip()]
    bad = [t for t in tags if t not in SPLITS]
    if bad:
        raise DatasetError(f"{path}: unknown split tag {bad[0]!r}")
    return ObservationDataset(ds.dim_o, ds.sequences, tags)


def read_dataset(path, dim_o: int | None = None) -> ObservationDataset:
    """Parse a dataset file; errors name the offending line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = {}
    body_start = 0
    if lines and lines[0].startswith("#"):
        body_start = 1
        for tok in lines[0][1:].split():
            key, _, val = tok.partition("=")
            try:
                header[key] = int(val)
            except ValueError:
                raise DatasetError(f"{path}:1: bad header field {tok!r}") from None
    if dim_o is None:
        if "dimO" not in header:
            raise DatasetError(f"{path}: missing dimO (no header and none given)")
        dim_o = header["dimO"]
    seqs = []
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        try:
            seq = [int(tok) for tok in line.split()]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-integer symbol") from None
        bad = [v for v in seq if not 0 <= v < dim_o]
        if bad:
            raise DatasetError(f"{path}:{lineno}: symbol {bad[0]} outside 0..{dim_o - 1}")
        seqs.append(seq)
    if not seqs:
        raise DatasetError(f"{path}: empty dataset")
    if "count" in header and header["count"] != len(seqs):
        raise DatasetError(f"{path}: header count {header['count']} but {len(seqs)} sequences")
    return ObservationDataset(dim_o, seqs)


def dataset_paths(out_dir, name: str = "dataset"):
    return os.path.join(out_dir, f"{name}.txt"), os.path.join(out_dir, f"{name}.split")
