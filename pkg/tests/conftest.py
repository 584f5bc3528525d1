import numpy as np
import pytest

from oracles import random_ensemble, random_stiefel
from shqmm.dynamics import HqmmModel, ShqmmModel
from shqmm.quantum_core import ConditionalDensityEnsemble, split_ops, split_point

_ACCEPTANCE = []


def make_shqmm(seed, m=2, dim_o=2, n_max=3, k=1, boundary="periodic"):
    rng = np.random.default_rng(seed)
    j = 2 * k + 1
    kappa = random_stiefel(rng, dim_o * j * m, m)
    ens = ConditionalDensityEnsemble(random_ensemble(rng, n_max, m))
    return ShqmmModel(split_point(kappa, dim_o, j, m), ens, boundary)


def make_hqmm(seed, m=2, dim_o=2, w=1):
    rng = np.random.default_rng(seed)
    kappa = random_stiefel(rng, dim_o * w * m, m)
    return HqmmModel(split_ops(kappa, dim_o, w, m), random_ensemble(rng, 1, m)[0])


@pytest.fixture
def acceptance_log():
    """Record one pass/fail line per acceptance criterion for the summary."""

    def record(number, name, passed, detail=""):
        _ACCEPTANCE.append((number, name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {name}: {detail}")
