"""Description accuracy (DA) scoring.

``DA = f(1 + log_iota P(D|M) / l)`` where ``iota`` is the alphabet size and
``l`` the sequence length. ``f`` is the identity on ``[0, 1]`` and squashes
negative arguments into ``(-1, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def f_nonlinear(x: float) -> float:
    if x > 1:
        raise ValueError(f"f is defined on (-inf, 1], got {x}")
    if x >= 0:
        return float(x)
    # (1 - e^{-x/4}) / (1 + e^{-x/4}) == tanh(x/8), without the overflow
    return math.tanh(x / 8)


def da_score(loglik: float, length: int, iota: int) -> float:
    """DA of one sequence from its natural-log likelihood."""
    if iota < 2:
        raise ValueError(f"alphabet size must be >= 2, got {iota}")
    if length < 1:
        raise ValueError("sequence length must be positive")
    if loglik > 1e-12 * length:
        raise ValueError(f"log-likelihood must be <= 0, got {loglik}")
    # round-off can leave a perfect predictor a hair above zero
    loglik = min(loglik, 0.0)
    return f_nonlinear(1 + loglik / math.log(iota) / length)


@dataclass(frozen=True)
class DaReport:
    values: np.ndarray
    lengths: np.ndarray
    iota: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        # population STD
        return float(np.std(self.values))


def da_report(logliks, lengths, iota: int) -> DaReport:
    logliks = np.asarray(logliks, dtype=float)
    lengths = np.asarray(lengths, dtype=int)
    if logliks.size == 0:
        raise ValueError("empty dataset")
    values = np.array([da_score(ll, n, iota) for ll, n in zip(logliks, lengths)])
    return DaReport(values, lengths, iota)
