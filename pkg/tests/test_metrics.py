import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shqmm.metrics import da_report, da_score, f_nonlinear


def test_f_anchors():
    assert f_nonlinear(0.0) == 0.0
    assert f_nonlinear(1.0) == 1.0
    e = math.e
    assert f_nonlinear(-4.0) == pytest.approx((1 - e) / (1 + e), abs=1e-15)
    assert f_nonlinear(-4.0) == pytest.approx(-0.462117, abs=1e-6)


def test_f_domain_error():
    with pytest.raises(ValueError):
        f_nonlinear(1.0 + 1e-9)


def test_f_continuous_at_zero():
    assert abs(f_nonlinear(1e-12) - f_nonlinear(-1e-12)) < 1e-11


@given(st.floats(-500, 1), st.floats(-500, 1))
def test_f_strictly_increasing(a, b):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    # saturation in double precision can flatten the far tail
    assert f_nonlinear(lo) <= f_nonlinear(hi)
    if lo > -100:
        assert f_nonlinear(lo) < f_nonlinear(hi)


@given(st.floats(-1e6, 1))
def test_f_range(x):
    v = f_nonlinear(x)
    assert -1 <= v <= 1
    if x > -100:
        assert v > -1


def test_da_perfect_predictor():
    assert da_score(0.0, 50, 6) == 1.0


@pytest.mark.parametrize("iota,length", [(2, 1), (6, 500), (6, 3000), (3, 17)])
def test_da_uniform_predictor(iota, length):
    assert abs(da_score(-length * math.log(iota), length, iota)) < 1e-12


def test_da_rejects_small_alphabet():
    with pytest.raises(ValueError):
        da_score(-1.0, 3, 1)


def test_da_rejects_positive_loglik():
    with pytest.raises(ValueError):
        da_score(0.5, 3, 2)


@given(st.floats(-1e4, 0), st.floats(-1e4, 0), st.integers(1, 1000), st.integers(2, 10))
def test_da_monotone(a, b, length, iota):
    lo, hi = min(a, b), max(a, b)
    assert da_score(lo, length, iota) <= da_score(hi, length, iota)


@given(st.floats(-1e4, 0), st.integers(1, 1000), st.integers(2, 10))
def test_da_one_iff_perfect(ll, length, iota):
    assert (da_score(ll, length, iota) == 1.0) == (1 + ll / math.log(iota) / length == 1.0)
    if ll < -1e-9 * length:
        assert da_score(ll, length, iota) < 1.0


def test_report_identical_values():
    rep = da_report([-3.0] * 5, [10] * 5, 2)
    assert rep.std == 0.0


def test_report_zero_and_one():
    rep = da_report([-4 * math.log(2), 0.0], [4, 4], 2)
    assert rep.mean == pytest.approx(0.5, abs=1e-15)
    assert rep.std == pytest.approx(0.5, abs=1e-15)


def test_report_recompute():
    rng = np.random.default_rng(0)
    lengths = rng.integers(1, 200, 30)
    ll = -rng.random(30) * lengths * 3
    rep = da_report(ll, lengths, 6)
    vals = []
    for a, n in zip(ll, lengths):
        x = 1 + a / (n * math.log(6))
        vals.append(x if x >= 0 else (1 - math.exp(-x / 4)) / (1 + math.exp(-x / 4)))
    assert abs(rep.mean - sum(vals) / len(vals)) < 1e-12
    assert rep.std >= 0
    assert np.all(rep.values > -1) and np.all(rep.values <= 1)


def test_report_empty():
    with pytest.raises(ValueError):
        da_report([], [], 2)


def test_f_saturates():
    assert f_nonlinear(-1e6) == pytest.approx(-1.0)
