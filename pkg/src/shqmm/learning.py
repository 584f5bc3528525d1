"""Maximum-likelihood training on the Stiefel manifold.

The stacked Kraus point ``kappa`` is moved with the Cayley retraction

    kappa <- kappa - tau U (I + tau/2 V^H U)^{-1} V^H kappa,
    U = [G, kappa],  V = [kappa, -G]

where ``G`` is the Wirtinger gradient of the loss with respect to
``conj(kappa)``. Gradients come from an adjoint sweep over the filtering
recursion, so one loss/gradient evaluation costs about three forward passes.

Also here: the Stiefel initialiser, the Stiefel distance and a Baum-Welch
baseline for the classical HMM.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    BOUNDARY_MODES,
    HmmModel,
    HqmmModel,
    ShqmmModel,
    UnderflowError,
    _check_symbols,
    dagger,
    forward_pass,
    group_by_length,
    sequence_logliks,
    shift_index,
)
from .metrics import da_report
from .quantum_core import (
    ConditionalDensityEnsemble,
    ShapeError,
    split_ops,
    split_point,
    stack_ops,
    stiefel_residual,
)

log = logging.getLogger(__name__)

ENSEMBLE_SCHEMES = ("uniform-mixed", "random-psd")
MAX_STEP_RETRIES = 8


class StepFailure(ArithmeticError):
    """The inner ``2m x 2m`` Cayley system was singular or lost orthonormality."""


class TrainingAborted(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.95
    alpha: float = 0.95
    beta: float = 0.90
    epochs: int = 30
    batches: int = 4
    n_max: int = 3
    k: int = 1
    m: int = 2
    dim_o: int = 6
    boundary: str = "periodic"
    seed: int = 0
    ensemble_init: str = "uniform-mixed"
    w: int = 1  # Kraus operators per symbol, HQMM only
    # "symbol": step along the per-symbol gradient (mean loss / mean length)
    loss_scale: str = "symbol"

    def __post_init__(self):
        errors = []
        if not self.tau >= 0:
            errors.append(f"tau must be >= 0, got {self.tau}")
        if not 0 < self.alpha <= 1:
            errors.append(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.beta < 1:
            errors.append(f"beta must be in [0, 1), got {self.beta}")
        for name in ("epochs", "batches", "m", "dim_o", "n_max", "w"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if self.k < 0:
            errors.append("k must be >= 0")
        elif 2 * self.k + 1 > self.n_max:
            errors.append(f"2k+1={2 * self.k + 1} exceeds n_max={self.n_max}")
        if self.boundary not in BOUNDARY_MODES:
            errors.append(f"boundary must be one of {BOUNDARY_MODES}")
        if self.ensemble_init not in ENSEMBLE_SCHEMES:
            errors.append(f"ensemble_init must be one of {ENSEMBLE_SCHEMES}")
        if self.loss_scale not in ("sequence", "symbol"):
            errors.append("loss_scale must be 'sequence' or 'symbol'")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def j(self) -> int:
        return 2 * self.k + 1


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)  # one per (epoch, batch)
    epoch_loss: list = field(default_factory=list)
    val_da: list = field(default_factory=list)
    tau: list = field(default_factory=list)  # after decay
    elapsed: list = field(default_factory=list)
    kappa0: np.ndarray | None = None
    kappa: np.ndarray | None = None
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# loss and gradient
# ---------------------------------------------------------------------------


def with_kappa(model, kappa: np.ndarray):
    """Same model with its Kraus operators replaced by ``split(kappa)``."""
    dim_o, j, m, _ = model.ops.shape
    if isinstance(model, ShqmmModel):
        return replace(model, bundle=split_point(kappa, dim_o, j, m))
    return replace(model, ops=split_ops(kappa, dim_o, j, m))


def batch_loss(model, batch) -> float:
    """Mean negative log-likelihood over the sequences of ``batch``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return float(-np.mean(sequence_logliks(model, batch)))


def _adjoint_grads(model, Y: np.ndarray):
    """Per-sequence ``d(-ln P)/d conj(ops)`` for equal-length sequences ``Y``.

    Returns ``(grads, logliks)`` with ``grads`` of shape ``(S,) + ops.shape``.
    """
    traces, states = forward_pass(model, Y, store=True)
    S, L = Y.shape
    ops, shifts, periodic = model.ops, model.shifts, model.periodic
    n, m = model.rho0.shape[0], model.m
    grads = np.zeros((S,) + ops.shape, dtype=np.complex128)
    rows = np.arange(S)
    # scaled adjoint of Tr(sum_i rho_T^(i)); Tr(E_t rho_t) = 1 for every t
    E = np.broadcast_to(np.eye(m, dtype=np.complex128), (S, n, m, m))
    for t in range(L - 1, -1, -1):
        K = ops[Y[:, t]]
        rho = states[t]
        st = traces[:, t]
        E_prev = np.zeros((S, n, m, m), dtype=np.complex128)
        for c, s in enumerate(shifts):
            s = int(s)
            Kc = K[:, c : c + 1]
            contrib = (E @ Kc @ shift_index(rho, s, periodic)).sum(axis=1)
            grads[rows, Y[:, t], c] -= contrib / st[:, None, None]
            E_prev += dagger(Kc) @ shift_index(E, -s, periodic) @ Kc
        E = E_prev / st[:, None, None, None]
    return grads, np.log(traces).sum(axis=1)


def loss_and_grad(model, batch):
    """Mean loss and its gradient (in ``kappa`` layout) over ``batch``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    batch = [_check_symbols(s, model.dim_o) for s in batch]
    total = np.zeros(model.ops.shape, dtype=np.complex128)
    ll = np.empty(len(batch))
    for L, (ix, Y) in group_by_length(batch).items():
        if L == 0:
            ll[ix] = 0.0
            continue
        g, ll[ix] = _adjoint_grads(model, Y)
        total += g.sum(axis=0)
    return float(-ll.mean()), stack_ops(total / len(batch))


def grad_kappa(model, batch) -> np.ndarray:
    """Wirtinger gradient ``dL/d conj(kappa)`` of :func:`batch_loss`.

    For a perturbation ``d``: ``L(kappa + eps d) - L(kappa) ~ 2 eps Re<G, d>``.
    """
    return loss_and_grad(model, batch)[1]


# ---------------------------------------------------------------------------
# Stiefel geometry
# ---------------------------------------------------------------------------


def cayley_update(kappa: np.ndarray, G: np.ndarray, tau: float) -> np.ndarray:
    """One Cayley-retraction step from ``kappa`` along ``-G``."""
    if kappa.shape != G.shape:
        raise ShapeError(f"kappa {kappa.shape} and G {G.shape} differ")
    if tau == 0 or not np.any(G):
        return kappa.copy()
    if not np.all(np.isfinite(G)):
        raise StepFailure("non-finite gradient")
    m = kappa.shape[1]
    U = np.hstack([G, kappa])
    V = np.hstack([kappa, -G])
    Vh = V.conj().T
    M = np.eye(2 * m) + (tau / 2) * (Vh @ U)
    try:
        X = np.linalg.solve(M, Vh @ kappa)
    except np.linalg.LinAlgError as exc:
        raise StepFailure(f"singular Cayley system at tau={tau}") from exc
    if np.linalg.cond(M) > 1e12:
        raise StepFailure(f"ill-conditioned Cayley system at tau={tau}")
    out = kappa - tau * (U @ X)
    if not np.all(np.isfinite(out)) or stiefel_residual(out) > 1e-9:
        raise StepFailure(f"Cayley step left the manifold at tau={tau}")
    return out


def stiefel_distance(k1: np.ndarray, k2: np.ndarray) -> float:
    """Spectral norm of ``k1^H k2 - I``; zero iff the points coincide."""
    if k1.shape != k2.shape:
        raise ShapeError(f"shapes {k1.shape} and {k2.shape} differ")
    m = k1.shape[1]
    return float(np.linalg.norm(k1.conj().T @ k2 - np.eye(m), 2))


def _gram_schmidt_column(basis: np.ndarray, v: np.ndarray) -> np.ndarray | None:
    norm0 = np.linalg.norm(v)
    for _ in range(2):  # second pass removes cancellation error
        v = v - basis @ (basis.conj().T @ v)
    norm = np.linalg.norm(v)
    if norm < 1e-8 * norm0:
        return None
    return v / norm


def _orthonormal_columns(rng, rows: int, cols: int, complex_: bool) -> np.ndarray:
    basis = np.zeros((rows, 0), dtype=np.complex128 if complex_ else float)
    while basis.shape[1] < cols:
        for _ in range(100):
            v = rng.standard_normal(rows)
            if complex_:
                v = v + 1j * rng.standard_normal(rows)
            v = _gram_schmidt_column(basis, v)
            if v is not None:
                break
        else:
            raise RuntimeError("could not draw an independent column")
        basis = np.column_stack([basis, v])
    return basis


def init_stiefel(m: int, j: int, dim_o: int, seed: int) -> np.ndarray:
    """Random complex Stiefel point of shape ``(m * j * dim_o, m)``.

    Draws ``2m`` real orthonormal columns by Gram-Schmidt and uses the first
    ``m`` as the real part and the last ``m`` as the imaginary part, each
    scaled by ``1/sqrt(2)``. When ``m * j * dim_o < 2m`` there is no room for
    ``2m`` real columns and ``m`` complex columns are drawn instead.
    """
    if min(m, j, dim_o) < 1:
        raise ValueError("dimensions must be >= 1")
    rows = m * j * dim_o
    rng = np.random.default_rng(seed)
    if rows >= 2 * m:
        q = _orthonormal_columns(rng, rows, 2 * m, complex_=False)
        kappa = (q[:, :m] + 1j * q[:, m:]) / np.sqrt(2)
    else:
        kappa = _orthonormal_columns(rng, rows, m, complex_=True)
    # polar clean-up: kappa (kappa^H kappa)^{-1/2}
    w, v = np.linalg.eigh(kappa.conj().T @ kappa)
    return kappa @ (v / np.sqrt(w)) @ v.conj().T


def init_ensemble(m: int, n_max: int, scheme: str = "uniform-mixed", seed: int = 0) -> ConditionalDensityEnsemble:
    if scheme == "uniform-mixed":
        members = np.broadcast_to(np.eye(m) / (m * n_max), (n_max, m, m))
    elif scheme == "random-psd":
        rng = np.random.default_rng([seed, 2])
        A = rng.standard_normal((n_max, m, m)) + 1j * rng.standard_normal((n_max, m, m))
        members = A @ dagger(A)
        members = (members + dagger(members)) / 2
        members = members / np.einsum("nii->", members).real
    else:
        raise ValueError(f"unknown ensemble scheme {scheme!r}")
    return ConditionalDensityEnsemble(np.array(members, dtype=np.complex128))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def initial_shqmm(config: TrainConfig) -> ShqmmModel:
    kappa = init_stiefel(config.m, config.j, config.dim_o, config.seed)
    ens = init_ensemble(config.m, config.n_max, config.ensemble_init, config.seed)
    return ShqmmModel(split_point(kappa, config.dim_o, config.j, config.m), ens, config.boundary)


def initial_hqmm(config: TrainConfig) -> HqmmModel:
    kappa = init_stiefel(config.m, config.w, config.dim_o, config.seed)
    ens = init_ensemble(config.m, 1, config.ensemble_init, config.seed)
    return HqmmModel(split_ops(kappa, config.dim_o, config.w, config.m), ens.members[0])


def validation_da(model, data) -> float:
    ll = sequence_logliks(model, data)
    return da_report(ll, [len(s) for s in data], model.dim_o).mean


def fit(model, config: TrainConfig, train_data, val_data=None, callback=None):
    """Run the momentum Cayley descent from ``model``; returns ``(model, history)``."""
    train_data = [np.asarray(s, dtype=np.intp) for s in train_data]
    if not train_data:
        raise ValueError("no training data")
    for s in train_data:
        _check_symbols(s, model.dim_o)
    n_batches = min(config.batches, len(train_data))
    shuffle_rng = np.random.default_rng([config.seed, 1])
    kappa = model.kappa
    hist = TrainHistory(kappa0=kappa.copy())
    g_old = np.zeros_like(kappa)
    tau = config.tau
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_data))
        epoch_losses = []
        for batch_ix in np.array_split(order, n_batches):
            # random membership, stable order inside the batch
            batch = [train_data[i] for i in np.sort(batch_ix)]
            model = with_kappa(model, kappa)
            try:
                loss, G = loss_and_grad(model, batch)
            except UnderflowError as exc:
                hist.kappa = kappa
                raise TrainingAborted(str(exc), hist) from exc
            if config.loss_scale == "symbol":
                G = G / np.mean([len(s) for s in batch])
            G = config.beta * g_old + (1 - config.beta) * G
            g_old = G
            kappa = _retry_step(kappa, G, tau, hist)
            hist.losses.append(loss)
            epoch_losses.append(loss)
        tau *= config.alpha
        model = with_kappa(model, kappa)
        hist.epoch_loss.append(float(np.mean(epoch_losses)))
        hist.tau.append(tau)
        if val_data is not None and len(val_data):
            hist.val_da.append(validation_da(model, val_data))
        hist.elapsed.append(time.perf_counter() - t0)
        log.info(
            "epoch %d loss %.6g val DA %s tau %.4g",
            epoch + 1,
            hist.epoch_loss[-1],
            f"{hist.val_da[-1]:.4f}" if hist.val_da else "-",
            tau,
        )
        if callback is not None:
            callback(epoch, model, hist)
    hist.kappa = kappa
    hist.wall_time = time.perf_counter() - t0
    return model, hist


def _retry_step(kappa, G, tau, hist):
    step = tau
    for _ in range(MAX_STEP_RETRIES + 1):
        try:
            return cayley_update(kappa, G, step)
        except StepFailure:
            log.warning("Cayley step failed at tau=%g, halving", step)
            step /= 2
    hist.kappa = kappa
    raise TrainingAborted(f"Cayley step failed after {MAX_STEP_RETRIES} retries", hist)


def train(config: TrainConfig, train_data, val_data=None, callback=None):
    """Train an SHQMM from the seeded initial point."""
    return fit(initial_shqmm(config), config, train_data, val_data, callback)


def train_hqmm(config: TrainConfig, train_data, val_data=None, callback=None):
    """Train an HQMM with ``config.w`` Kraus operators per symbol."""
    return fit(initial_hqmm(config), config, train_data, val_data, callback)


# ---------------------------------------------------------------------------
# Baum-Welch
# ---------------------------------------------------------------------------


def _random_stochastic(rng, rows, cols):
    a = rng.gamma(1.0, size=(rows, cols)) + 1e-3
    return a / a.sum(axis=0)


def _bw_statistics(model: HmmModel, Y: np.ndarray):
    """Expected counts for equal-length sequences ``Y`` of shape ``(S, L)``."""
    T, C = model.T, model.C
    S, L = Y.shape
    n = model.n
    alpha = np.empty((L + 1, S, n))
    scale = np.empty((L, S))
    alpha[0] = model.x0
    for t in range(L):
        a = C[Y[:, t]] * (alpha[t] @ T.T)
        scale[t] = a.sum(axis=1)
        if np.any(scale[t] < 1e-300):
            raise UnderflowError("zero-probability symbol under current HMM")
        alpha[t + 1] = a / scale[t][:, None]
    beta = np.ones((S, n))
    trans = np.zeros((n, n))
    emit = np.zeros((model.s, n))
    for t in range(L, 0, -1):
        cb = C[Y[:, t - 1]] * beta / scale[t - 1][:, None]  # (S, n) over target state
        # xi[s, i, j] = alpha_{t-1}(j) T[i, j] C[y_t, i] beta_t(i) / c_t
        trans += T * np.einsum("si,sj->ij", cb, alpha[t - 1])
        gamma = alpha[t] * beta
        np.add.at(emit, Y[:, t - 1], gamma)
        beta = cb @ T
    x0 = (alpha[0] * beta).sum(axis=0)
    return trans, emit, x0, np.log(scale).sum()


def baum_welch_train(data, n: int, s: int, iters: int = 20, seed: int = 0, return_history: bool = False):
    """Fit a Moore HMM by expectation-maximisation.

    With ``return_history`` also returns the training log-likelihood before
    each iteration plus the final one (``iters + 1`` values, non-decreasing).
    """
    if n < 1 or s < 1:
        raise ValueError("n and s must be >= 1")
    data = [_check_symbols(seq, s) for seq in data]
    if not data or all(len(seq) == 0 for seq in data):
        raise ValueError("empty data")
    rng = np.random.default_rng(seed)
    x0 = rng.gamma(1.0, size=n) + 1e-3
    model = HmmModel(_random_stochastic(rng, n, n), _random_stochastic(rng, s, n), x0 / x0.sum())
    groups = [Y for L, (_, Y) in group_by_length(data).items() if L > 0]
    history = []
    for it in range(iters + 1):
        trans = np.zeros((n, n))
        emit = np.zeros((s, n))
        x0 = np.zeros(n)
        ll = 0.0
        for Y in groups:
            tr, em, x, l = _bw_statistics(model, Y)
            trans += tr
            emit += em
            x0 += x
            ll += l
        history.append(float(ll))
        if it == iters:
            break
        model = HmmModel(
            _normalise_columns(trans, model.T),
            _normalise_columns(emit, model.C),
            x0 / x0.sum(),
        )
    return (model, history) if return_history else model


def _normalise_columns(counts, fallback):
    tot = counts.sum(axis=0)
    out = np.where(tot > 0, counts / np.where(tot > 0, tot, 1), fallback)
    # exact column sums for the model invariant
    return out / out.sum(axis=0)
