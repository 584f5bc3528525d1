import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_hqmm, make_shqmm
from oracles import cayley_mp, random_stiefel, spectral_norm_mp
from shqmm.dynamics import HmmModel, ShqmmModel, hmm_logliks, shqmm_sequence_loglik
from shqmm.learning import (
    StepFailure,
    TrainConfig,
    _adjoint_grads,
    baum_welch_train,
    batch_loss,
    cayley_update,
    grad_kappa,
    init_ensemble,
    init_stiefel,
    initial_shqmm,
    loss_and_grad,
    stiefel_distance,
    train,
    train_hqmm,
    with_kappa,
)
from shqmm.quantum_core import KrausBundle, stack_ops, stiefel_residual


def tangent(rng, kappa):
    z = rng.standard_normal(kappa.shape) + 1j * rng.standard_normal(kappa.shape)
    sym = kappa.conj().T @ z
    return z - kappa @ (sym + sym.conj().T) / 2


def fd_check(model, batch, G, rng, n_dirs, eps=1e-6):
    kappa = model.kappa
    errs = []
    for _ in range(n_dirs):
        d = tangent(rng, kappa)
        plus = batch_loss(with_kappa(model, kappa + eps * d), batch)
        minus = batch_loss(with_kappa(model, kappa - eps * d), batch)
        fd = (plus - minus) / (2 * eps)
        an = 2 * np.real(np.vdot(G, d))
        errs.append(abs(fd - an) / max(abs(an), 1e-12))
    return max(errs)


# --- loss ------------------------------------------------------------------


def test_batch_loss_scaled_identity():
    ops = np.zeros((2, 1, 2, 2), dtype=complex)
    ops[:, 0] = np.eye(2) / math.sqrt(2)
    model = ShqmmModel(KrausBundle(ops), init_ensemble(2, 1))
    assert batch_loss(model, [np.zeros(7, int)]) == pytest.approx(7 * math.log(2))


def test_batch_loss_of_duplicates():
    model = make_shqmm(1)
    seq = np.array([0, 1, 1, 0, 1])
    assert batch_loss(model, [seq, seq]) == pytest.approx(batch_loss(model, [seq]), abs=1e-14)


def test_batch_loss_is_mean():
    model = make_shqmm(2)
    rng = np.random.default_rng(2)
    batch = [rng.integers(0, 2, n) for n in (4, 9, 9)]
    expected = -np.mean([shqmm_sequence_loglik(model, s) for s in batch])
    assert batch_loss(model, batch) == pytest.approx(expected, abs=1e-12)
    assert loss_and_grad(model, batch)[0] == pytest.approx(expected, abs=1e-12)


def test_empty_batch():
    with pytest.raises(ValueError):
        batch_loss(make_shqmm(0), [])


# --- gradient --------------------------------------------------------------


def test_constant_likelihood_gives_normal_gradient():
    model = ShqmmModel(KrausBundle(np.eye(2)[None, None] + 0j), init_ensemble(2, 1, "random-psd", 3))
    G = grad_kappa(model, [np.zeros(6, int)])
    kappa = model.kappa
    A = G @ kappa.conj().T - kappa @ G.conj().T
    assert np.abs(A @ kappa).max() < 1e-12


@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_gradient_finite_differences(boundary):
    model = make_shqmm(17, m=2, dim_o=2, n_max=3, k=1, boundary=boundary)
    rng = np.random.default_rng(17)
    batch = [rng.integers(0, 2, 12)]
    G = grad_kappa(model, batch)
    assert fd_check(model, batch, G, rng, 20) < 1e-5


@settings(max_examples=10, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    m=st.integers(1, 3),
    k=st.integers(0, 1),
    extra=st.integers(0, 1),
    length=st.integers(1, 20),
    boundary=st.sampled_from(["periodic", "open"]),
)
def test_gradient_property(seed, m, k, extra, length, boundary):
    model = make_shqmm(seed, m=m, dim_o=2, n_max=2 * k + 1 + extra, k=k, boundary=boundary)
    rng = np.random.default_rng(seed)
    batch = [rng.integers(0, 2, length), rng.integers(0, 2, max(1, length // 2))]
    G = grad_kappa(model, batch)
    assert fd_check(model, batch, G, rng, 3) < 1e-5


def test_hqmm_gradient_finite_differences():
    model = make_hqmm(5, m=3, dim_o=3, w=2)
    rng = np.random.default_rng(5)
    batch = [rng.integers(0, 3, 15)]
    assert fd_check(model, batch, grad_kappa(model, batch), rng, 10) < 1e-5


def test_batch_gradient_is_mean():
    model = make_shqmm(9, m=2, dim_o=3, n_max=3, k=1)
    rng = np.random.default_rng(9)
    batch = [rng.integers(0, 3, n) for n in (6, 6, 11)]
    per = [grad_kappa(model, [s]) for s in batch]
    np.testing.assert_allclose(grad_kappa(model, batch), np.mean(per, axis=0), atol=1e-12, rtol=0)
    Y = np.array(batch[:2])
    g, _ = _adjoint_grads(model, Y)
    np.testing.assert_allclose(stack_ops(g[1]), per[1], atol=1e-12, rtol=0)


# --- Cayley ----------------------------------------------------------------


def test_cayley_zero_gradient_and_step():
    rng = np.random.default_rng(0)
    kappa = random_stiefel(rng, 12, 2)
    G = rng.standard_normal(kappa.shape) + 0j
    np.testing.assert_array_equal(cayley_update(kappa, np.zeros_like(kappa), 0.5), kappa)
    np.testing.assert_array_equal(cayley_update(kappa, G, 0.0), kappa)


@pytest.mark.parametrize("seed", range(3))
def test_cayley_matches_extended_precision(seed):
    rng = np.random.default_rng(seed)
    kappa = random_stiefel(rng, 12, 2)
    G = rng.standard_normal(kappa.shape) + 1j * rng.standard_normal(kappa.shape)
    out = cayley_update(kappa, G, 0.1)
    assert stiefel_residual(out) < 1e-10
    np.testing.assert_allclose(out, cayley_mp(kappa, G, 0.1), atol=1e-10, rtol=0)


def test_cayley_decreases_loss_for_small_step():
    model = make_shqmm(3, m=2, dim_o=2)
    batch = [np.random.default_rng(3).integers(0, 2, 30)]
    loss, G = loss_and_grad(model, batch)
    new = with_kappa(model, cayley_update(model.kappa, G, 1e-3))
    assert batch_loss(new, batch) < loss


def test_cayley_inner_system_never_singular():
    # V^H U shares its nonzero spectrum with the skew-Hermitian U V^H
    kappa = np.eye(2, 1, dtype=complex)
    G = np.array([[0.0], [1.0]], dtype=complex)
    for tau in (0.5, 2.0, 1e6):
        assert stiefel_residual(cayley_update(kappa, G, tau)) < 1e-9


def test_cayley_non_finite_gradient():
    kappa = np.eye(2, 1, dtype=complex)
    with pytest.raises(StepFailure):
        cayley_update(kappa, np.array([[np.inf], [1.0]], dtype=complex), 0.1)


def test_manifold_preservation_long_run():
    rng = np.random.default_rng(4)
    kappa = random_stiefel(rng, 18, 3)
    for _ in range(1000):
        G = rng.standard_normal(kappa.shape) + 1j * rng.standard_normal(kappa.shape)
        kappa = cayley_update(kappa, G, 0.1)
    assert stiefel_residual(kappa) < 1e-8


# --- initialisation and distance -------------------------------------------


def test_init_stiefel_deterministic():
    np.testing.assert_array_equal(init_stiefel(3, 3, 2, 5), init_stiefel(3, 3, 2, 5))


def test_init_stiefel_orthonormal_over_seeds():
    worst = max(stiefel_residual(init_stiefel(3, 3, 2, s)) for s in range(100))
    assert worst < 1e-12


@pytest.mark.parametrize("m,j,dim_o", [(1, 1, 1), (2, 1, 1), (4, 1, 1), (6, 3, 6), (1, 3, 2)])
def test_init_stiefel_shapes(m, j, dim_o):
    kappa = init_stiefel(m, j, dim_o, 0)
    assert kappa.shape == (m * j * dim_o, m)
    assert stiefel_residual(kappa) < 1e-12


def test_init_stiefel_uses_imaginary_part():
    kappa = init_stiefel(2, 3, 2, 0)
    assert np.abs(kappa.imag).max() > 0.1


def test_distinct_seeds_are_apart():
    assert stiefel_distance(init_stiefel(2, 3, 2, 0), init_stiefel(2, 3, 2, 1)) > 0


def test_distance_identities():
    rng = np.random.default_rng(6)
    kappa = random_stiefel(rng, 12, 3)
    assert stiefel_distance(kappa, kappa) < 1e-12
    U = random_stiefel(rng, 3, 3)
    assert stiefel_distance(kappa, kappa @ U) == pytest.approx(np.linalg.norm(U - np.eye(3), 2), abs=1e-12)


def test_distance_extended_precision():
    rng = np.random.default_rng(7)
    k1, k2 = random_stiefel(rng, 12, 3), random_stiefel(rng, 12, 3)
    ref = spectral_norm_mp(k1.conj().T @ k2 - np.eye(3))
    assert stiefel_distance(k1, k2) == pytest.approx(ref, abs=1e-10)


def test_distance_shape_mismatch():
    with pytest.raises(ValueError):
        stiefel_distance(np.eye(4)[:, :2], np.eye(6)[:, :2])


def test_init_ensemble_uniform():
    ens = init_ensemble(2, 2, "uniform-mixed")
    np.testing.assert_allclose(ens.members, [np.eye(2) / 4] * 2)


@pytest.mark.parametrize("seed", range(5))
def test_init_ensemble_random_psd(seed):
    ens = init_ensemble(3, 4, "random-psd", seed)
    assert np.trace(ens.total()).real == pytest.approx(1.0, abs=1e-12)
    assert min(np.linalg.eigvalsh(r).min() for r in ens.members) >= -1e-12
    ens.check()


# --- training loop ---------------------------------------------------------


@pytest.fixture(scope="module")
def small_data():
    rng = np.random.default_rng(0)
    return [rng.integers(0, 2, 25) for _ in range(6)]


def small_config(**kw):
    base = dict(m=2, dim_o=2, n_max=3, k=1, epochs=3, batches=2, seed=1)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_learning_rate_keeps_point(small_data):
    cfg = small_config(tau=0.0)
    _, hist = train(cfg, small_data)
    np.testing.assert_array_equal(hist.kappa, hist.kappa0)
    np.testing.assert_array_equal(hist.kappa0, initial_shqmm(cfg).kappa)
    assert len(set(hist.epoch_loss)) == 1
    assert len(hist.losses) == cfg.epochs * cfg.batches


def test_single_step_is_one_cayley_update(small_data):
    cfg = small_config(epochs=1, batches=1, beta=0.0, tau=0.3, loss_scale="sequence")
    model0 = initial_shqmm(cfg)
    _, hist = train(cfg, small_data)
    expected = cayley_update(model0.kappa, grad_kappa(model0, small_data), 0.3)
    np.testing.assert_array_equal(hist.kappa, expected)


def test_plain_descent_matches_hand_loop(small_data):
    cfg = small_config(epochs=4, batches=1, beta=0.0, tau=0.2, alpha=0.8)
    model = initial_shqmm(cfg)
    kappa, tau = model.kappa, cfg.tau
    mean_len = np.mean([len(s) for s in small_data])
    for _ in range(cfg.epochs):
        G = grad_kappa(with_kappa(model, kappa), small_data) / mean_len
        kappa = cayley_update(kappa, G, tau)
        tau *= cfg.alpha
    _, hist = train(cfg, small_data)
    np.testing.assert_array_equal(hist.kappa, kappa)


def test_training_is_deterministic(small_data):
    cfg = small_config(ensemble_init="random-psd")
    _, h1 = train(cfg, small_data, small_data[:2])
    _, h2 = train(cfg, small_data, small_data[:2])
    assert h1.losses == h2.losses
    assert h1.val_da == h2.val_da
    np.testing.assert_array_equal(h1.kappa, h2.kappa)


def test_training_reduces_loss(small_data):
    _, hist = train(small_config(epochs=8), small_data)
    assert hist.epoch_loss[-1] < hist.epoch_loss[0]
    assert stiefel_residual(hist.kappa) < 1e-9


def test_hqmm_degenerates_from_shqmm(small_data):
    _, hs = train(small_config(n_max=1, k=0), small_data)
    _, hh = train_hqmm(small_config(n_max=1, k=0, w=1), small_data)
    assert hs.losses == hh.losses
    np.testing.assert_array_equal(hs.kappa, hh.kappa)


def test_hqmm_zero_rate(small_data):
    cfg = small_config(tau=0.0, w=2)
    model, hist = train_hqmm(cfg, small_data)
    np.testing.assert_array_equal(model.kappa, hist.kappa0)


def test_hqmm_loss_mostly_decreases():
    rng = np.random.default_rng(3)
    data = [rng.integers(0, 3, 60) for _ in range(8)]
    cfg = TrainConfig(m=2, dim_o=3, n_max=1, k=0, epochs=5, batches=2, seed=3, w=1)
    _, hist = train_hqmm(cfg, data)
    drops = sum(b <= a for a, b in zip(hist.epoch_loss, hist.epoch_loss[1:]))
    assert drops >= 4


@pytest.mark.parametrize(
    "kw",
    [dict(tau=-1.0), dict(alpha=0.0), dict(alpha=1.5), dict(beta=1.0), dict(epochs=0), dict(batches=0),
     dict(k=2, n_max=3), dict(boundary="mirror"), dict(ensemble_init="zeros")],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        small_config(**kw)


# --- Baum-Welch ------------------------------------------------------------


def test_baum_welch_single_state():
    C = np.array([[0.2], [0.5], [0.3]])
    data = [np.array([1, 1, 1, 1])]  # deterministic world: symbol 1 only
    model = baum_welch_train(data, 1, 3, 5, seed=0)
    np.testing.assert_allclose(model.C[:, 0], [0, 1, 0], atol=1e-6)
    del C


def test_baum_welch_monotone_random_data():
    rng = np.random.default_rng(1)
    data = [rng.integers(0, 4, 80) for _ in range(5)]
    _, hist = baum_welch_train(data, 3, 4, 20, seed=2, return_history=True)
    assert all(b >= a - 1e-9 for a, b in zip(hist, hist[1:]))


def test_baum_welch_beats_generator():
    T = np.array([[0.9, 0.2], [0.1, 0.8]])
    C = np.array([[0.7, 0.1], [0.2, 0.3], [0.1, 0.6]])
    gen = HmmModel(T, C, np.array([0.5, 0.5]))
    from shqmm.datagen import sample_hmm

    data = sample_hmm(gen, 10, 200, seed=3).sequences
    fitted, hist = baum_welch_train(data, 2, 3, 60, seed=0, return_history=True)
    assert hmm_logliks(fitted, data).sum() >= hmm_logliks(gen, data).sum() - 1e-6
    assert hmm_logliks(fitted, data).sum() == pytest.approx(hist[-1], abs=1e-8)


def test_baum_welch_empty():
    with pytest.raises(ValueError):
        baum_welch_train([], 2, 2)
