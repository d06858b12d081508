import numpy as np
import pytest

from qthermo.common.opalg import AnalysisConfig, Tolerances
from qthermo.data_io import generators


@pytest.fixture
def tol():
    return Tolerances()


@pytest.fixture
def cfg():
    return AnalysisConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def qutrit_instrument():
    return generators.qutrit_remark_instrument()


@pytest.fixture
def depolarize():
    return generators.depolarize_to_pure(lam=0.5)


@pytest.fixture
def rank_drop():
    return generators.rank_drop_d3()


@pytest.fixture
def plus_minus():
    """|+> and |-> of the qutrit instrument, as vectors."""
    plus = np.array([0, 1, 1], dtype=complex) / np.sqrt(2)
    minus = np.array([0, 1, -1], dtype=complex) / np.sqrt(2)
    return plus, minus
