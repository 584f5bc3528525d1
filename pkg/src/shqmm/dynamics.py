"""State evolution, filtering and sequence likelihoods for HMM, HQMM and SHQMM.

The quantum models share one engine. A model is reduced to a Kraus array
``ops`` of shape ``(dim_o, j, m, m)``, one integer shift per class and an
initial ensemble of shape ``(n_max, m, m)``. One step under symbol ``y`` maps

    rho'^(i) = sum_c ops[y, c] rho^(i - shift[c]) ops[y, c]^H

with ``i - shift[c]`` wrapped modulo ``n_max`` (periodic) or dropped when out of
range (open). An HQMM with ``w`` operators per symbol is the special case
``n_max = 1`` with all shifts zero.

Sequence likelihoods are accumulated as sums of log step traces; the filtered
ensemble is renormalised every step so long sequences do not underflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantum_core import (
    ConditionalDensityEnsemble,
    KrausBundle,
    ShapeError,
    dagger,
    stack_ops,
)

UNDERFLOW = 1e-300
BOUNDARY_MODES = ("periodic", "open")


class UnderflowError(ArithmeticError):
    """A symbol had probability below the underflow threshold."""


class SymbolError(ValueError):
    """A symbol is outside ``0..dim_o-1``."""


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HmmModel:
    """Moore HMM ``x' = T x``, symbol drawn from column ``x'`` of ``C``.

    ``T`` is ``n x n`` and ``C`` is ``s x n``, both column-stochastic.
    """

    T: np.ndarray
    C: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        C = np.asarray(self.C, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        n = T.shape[0]
        if T.shape != (n, n) or C.ndim != 2 or C.shape[1] != n or x0.shape != (n,):
            raise ShapeError(f"inconsistent HMM shapes T{T.shape} C{C.shape} x0{x0.shape}")
        for name, a in (("T", T), ("C", C)):
            if np.any(a < 0) or np.max(np.abs(a.sum(axis=0) - 1)) > 1e-12:
                raise ValueError(f"{name} must be column-stochastic")
        if np.any(x0 < 0) or abs(x0.sum() - 1) > 1e-12:
            raise ValueError("x0 must lie on the simplex")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def s(self) -> int:
        return self.C.shape[0]


class _QuantumModel:
    ops: np.ndarray
    shifts: np.ndarray
    periodic: bool
    rho0: np.ndarray  # (n_max, m, m)

    @property
    def dim_o(self) -> int:
        return self.ops.shape[0]

    @property
    def m(self) -> int:
        return self.ops.shape[2]

    @property
    def kappa(self) -> np.ndarray:
        return stack_ops(self.ops)


@dataclass(frozen=True)
class HqmmModel(_QuantumModel):
    """HQMM with ``w`` Kraus operators per symbol; ``ops`` is ``(dim_o, w, m, m)``."""

    ops: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=np.complex128)
        rho = np.asarray(self.rho, dtype=np.complex128)
        if ops.ndim != 4 or rho.shape != ops.shape[2:]:
            raise ShapeError(f"ops {ops.shape} and rho {rho.shape} do not agree")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "rho", rho)

    @property
    def w(self) -> int:
        return self.ops.shape[1]

    @property
    def shifts(self) -> np.ndarray:
        return np.zeros(self.w, dtype=int)

    @property
    def periodic(self) -> bool:
        return True

    @property
    def rho0(self) -> np.ndarray:
        return self.rho[None]


@dataclass(frozen=True)
class ShqmmModel(_QuantumModel):
    bundle: KrausBundle
    ensemble0: ConditionalDensityEnsemble
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.bundle.m != self.ensemble0.m:
            raise ShapeError("bundle and ensemble dimensions differ")
        if 2 * self.bundle.k + 1 > self.ensemble0.n_max:
            raise ValueError(
                f"2k+1={2 * self.bundle.k + 1} exceeds n_max={self.ensemble0.n_max}"
            )

    @property
    def ops(self) -> np.ndarray:
        return self.bundle.ops

    @property
    def k(self) -> int:
        return self.bundle.k

    @property
    def n_max(self) -> int:
        return self.ensemble0.n_max

    @property
    def shifts(self) -> np.ndarray:
        # class c acts on rho^(i - (c - k))
        return np.arange(self.bundle.j) - self.bundle.k

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def rho0(self) -> np.ndarray:
        return self.ensemble0.members


@dataclass(frozen=True)
class StepResult:
    ensemble: ConditionalDensityEnsemble  # unnormalised
    trace: float


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def shift_index(ens: np.ndarray, s: int, periodic: bool) -> np.ndarray:
    """Return ``out`` with ``out[..., i, :, :] = ens[..., i - s, :, :]``.

    ``ens`` has the ensemble index on axis -3. Out-of-range sources are zero
    unless ``periodic``.
    """
    n = ens.shape[-3]
    if s == 0:
        return ens
    if periodic:
        return np.roll(ens, s, axis=-3)
    out = np.zeros_like(ens)
    if abs(s) >= n:
        return out
    if s > 0:
        out[..., s:, :, :] = ens[..., : n - s, :, :]
    else:
        out[..., : n + s, :, :] = ens[..., -s:, :, :]
    return out


def apply_channel(K: np.ndarray, ens: np.ndarray, shifts, periodic: bool) -> np.ndarray:
    """Unnormalised update. ``K`` is ``(..., j, m, m)``, ``ens`` is ``(..., n, m, m)``."""
    out = 0
    for c, s in enumerate(shifts):
        Kc = K[..., c : c + 1, :, :]
        out = out + Kc @ shift_index(ens, int(s), periodic) @ dagger(Kc)
    return out


def _ens_trace(ens: np.ndarray) -> np.ndarray:
    return np.einsum("...nii->...", ens).real


def _check_symbols(seq, dim_o: int) -> np.ndarray:
    arr = np.asarray(seq)
    if arr.size and (arr.min() < 0 or arr.max() >= dim_o):
        bad = arr[(arr < 0) | (arr >= dim_o)][0]
        raise SymbolError(f"symbol {bad} outside 0..{dim_o - 1}")
    return arr.astype(np.intp)


def group_by_length(seqs) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Map length -> (indices into ``seqs``, stacked ``(S, L)`` array)."""
    groups: dict[int, list[int]] = {}
    for idx, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(idx)
    return {
        L: (np.array(ix), np.array([np.asarray(seqs[i]) for i in ix], dtype=np.intp).reshape(len(ix), L))
        for L, ix in groups.items()
    }


def forward_pass(model: _QuantumModel, Y: np.ndarray, store: bool = False):
    """Filter ``S`` equal-length sequences ``Y`` (shape ``(S, L)``) in parallel.

    Returns ``(traces, states)``: per-step probabilities ``(S, L)`` and, when
    ``store``, the normalised ensembles before each step ``(L, S, n, m, m)``.
    """
    S, L = Y.shape
    ops, shifts, periodic = model.ops, model.shifts, model.periodic
    ens = np.broadcast_to(model.rho0, (S,) + model.rho0.shape).copy()
    traces = np.empty((S, L))
    states = np.empty((L,) + ens.shape, dtype=np.complex128) if store else None
    for t in range(L):
        if store:
            states[t] = ens
        ens = apply_channel(ops[Y[:, t]], ens, shifts, periodic)
        st = _ens_trace(ens)
        if np.any(st < UNDERFLOW):
            raise UnderflowError(f"step {t}: probability {st.min():.3g} below {UNDERFLOW}")
        traces[:, t] = st
        ens /= st[:, None, None, None]
    return traces, states


def sequence_logliks(model: _QuantumModel, seqs) -> np.ndarray:
    """Natural-log likelihood of each sequence under a quantum model."""
    seqs = [_check_symbols(s, model.dim_o) for s in seqs]
    out = np.empty(len(seqs))
    for L, (ix, Y) in group_by_length(seqs).items():
        if L == 0:
            out[ix] = 0.0
            continue
        traces, _ = forward_pass(model, Y)
        out[ix] = np.log(traces).sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def hmm_forward_loglik(model: HmmModel, seq) -> float:
    """``ln P(seq | model)`` by the scaled forward recursion ``x <- diag(C_y) T x``."""
    seq = _check_symbols(seq, model.s)
    x = model.x0
    total = 0.0
    for y in seq:
        x = model.C[y] * (model.T @ x)
        c = x.sum()
        if c < UNDERFLOW:
            raise UnderflowError(f"symbol {y} has probability {c:.3g}")
        total += np.log(c)
        x = x / c
    return float(total)


def hmm_logliks(model: HmmModel, seqs) -> np.ndarray:
    return np.array([hmm_forward_loglik(model, s) for s in seqs])


def hqmm_filter(model: HqmmModel, rho, y: int):
    """Posterior density matrix and probability of observing ``y``."""
    _check_symbols([y], model.dim_o)
    K = model.ops[y]
    num = np.einsum("wab,bc,wdc->ad", K, rho, K.conj())
    p = float(np.trace(num).real)
    if p < UNDERFLOW:
        raise UnderflowError(f"symbol {y} has probability {p:.3g}")
    return num / p, p


def shqmm_step(model: ShqmmModel, ensemble: ConditionalDensityEnsemble, y: int) -> StepResult:
    if ensemble.n_max != model.n_max:
        raise ShapeError(f"ensemble n_max {ensemble.n_max} != model n_max {model.n_max}")
    _check_symbols([y], model.dim_o)
    out = apply_channel(model.ops[y], ensemble.members, model.shifts, model.periodic)
    return StepResult(ConditionalDensityEnsemble(out), float(_ens_trace(out)))


def shqmm_filter(model: ShqmmModel, ensemble: ConditionalDensityEnsemble, y: int):
    """Bayes update: posterior ensemble and probability of ``y``."""
    res = shqmm_step(model, ensemble, y)
    if res.trace < UNDERFLOW:
        raise UnderflowError(f"symbol {y} has probability {res.trace:.3g}")
    return ConditionalDensityEnsemble(res.ensemble.members / res.trace), res.trace


def symbol_distribution(model: _QuantumModel, ensemble) -> np.ndarray:
    """Probability of each symbol given the current (normalised) state."""
    ens = ensemble.members if isinstance(ensemble, ConditionalDensityEnsemble) else np.asarray(ensemble)
    if ens.ndim == 2:
        ens = ens[None]
    # broadcast the ensemble against every symbol at once
    out = apply_channel(model.ops, np.broadcast_to(ens, (model.dim_o,) + ens.shape), model.shifts, model.periodic)
    return _ens_trace(out)


def shqmm_sequence_loglik(model: _QuantumModel, seq) -> float:
    return float(sequence_logliks(model, [seq])[0])


hqmm_sequence_loglik = shqmm_sequence_loglik


def aggregate_density(ensemble: ConditionalDensityEnsemble) -> np.ndarray:
    """Sum of the conditional density matrices."""
    return ensemble.total()


def as_hqmm(model: ShqmmModel) -> HqmmModel:
    """HQMM with the ``2k+1`` class operators of each symbol as its Kraus set.

    Acting on the aggregated density matrix, it reproduces the index-summed
    evolution of a periodic SHQMM.
    """
    return HqmmModel(model.ops, aggregate_density(model.ensemble0))
