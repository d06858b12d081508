"""Catalog of built-in maps, instruments and processes.

Builders take keyword parameters only, so the catalog can be driven from an
ini file or the command line:

>>> build("luders", effect=[1, 0.5])
>>> build("random_instrument", seed=3, outcomes=3, dim=2)

Matrix parameters accept a flat list (read as a diagonal), a nested list of
numbers, or a nested list of [re, im] pairs.
"""

import logging

import numpy as np

from qthermo.common import array_utils
from qthermo.common.errors import UnknownGenerator
from qthermo.maps import qmaps
from qthermo.measure import measurements, processes

logger = logging.getLogger(__name__)


def _matrix(value, name="matrix"):
    arr = np.asarray(value)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    elif arr.ndim == 1:
        arr = np.diag(arr)
    if arr.ndim != 2:
        raise ValueError("{} must be a matrix, got shape {}".format(name, arr.shape))
    return arr.astype(complex)


def _vector(value, name="vector"):
    arr = np.asarray(value)
    if arr.ndim == 2 and arr.shape[-1] == 2:
        arr = arr[:, 0] + 1j * arr[:, 1]
    arr = arr.astype(complex).ravel()
    norm = np.linalg.norm(arr)
    if norm == 0:
        raise ValueError("{} must be nonzero".format(name))
    return arr / norm


def _split_isometry(iso, dim, pieces):
    return [iso[i * dim : (i + 1) * dim, :] for i in range(pieces)]


################################################################################
# Builders
################################################################################


def identity(dim=2):
    return qmaps.identity_map(dim)


def unitary(unitary=None, dim=2, seed=0):
    if unitary is None:
        return qmaps.unitary_map(array_utils.random_unitary(dim, seed))
    return qmaps.unitary_map(_matrix(unitary, "unitary"))


def luders(effect=None, effects=None, labels=None):
    """Luders operation of one effect, or Luders instrument of an observable."""
    if effects is not None:
        effects = tuple(_matrix(e, "effect") for e in effects)
        labels = tuple(str(i) for i in range(len(effects))) if labels is None else labels
        return measurements.luders_instrument(measurements.Observable(tuple(labels), effects))
    if effect is None:
        raise ValueError("luders needs an effect or a list of effects")
    return qmaps.luders_map(_matrix(effect, "effect"))


def prepare(sigma, effect=None):
    effect = None if effect is None else _matrix(effect, "effect")
    return qmaps.prepare_map(_matrix(sigma, "sigma"), effect)


def swap_process(effect, xi):
    return processes.swap_process(_matrix(effect, "effect"), _matrix(xi, "xi"))


def depolarize_to_pure(lam=0.5, phi=None, dim=2):
    """rho -> lam * rho + (1 - lam) * tr[rho] |phi><phi|, phi = |0> by default."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1], got {}".format(lam))
    phi = array_utils.ket(0, dim) if phi is None else _vector(phi, "phi")
    dim = phi.shape[0]
    kraus = [np.sqrt(lam) * np.eye(dim, dtype=complex)]
    kraus += [
        np.sqrt(1 - lam) * np.outer(phi, array_utils.ket(i, dim)) for i in range(dim)
    ]
    return qmaps.canonical(qmaps.from_kraus(kraus))


def qutrit_remark_instrument():
    """Binary instrument on C^3 with basis |0>, |+>, |->.

    I_pm(rho) = <pm|rho|pm> |pm><pm| + <0|rho|0> 1/6, where
    |pm> = (|1> +- |2>)/sqrt(2). The effects are |pm><pm| + 1/2 |0><0|.
    """
    dim = 3
    zero = array_utils.ket(0, dim)
    ops = []
    for sign in (1, -1):
        v = (array_utils.ket(1, dim) + sign * array_utils.ket(2, dim)) / np.sqrt(2)
        kraus = [np.outer(v, v.conj())]
        kraus += [np.outer(array_utils.ket(k, dim), zero) / np.sqrt(6) for k in range(dim)]
        ops.append(qmaps.from_kraus(kraus))
    return measurements.Instrument(("+", "-"), tuple(ops))


def rank_drop_d3():
    """rho -> tr[P01 rho] |0><0| + <2|rho|2> 1/3 on C^3.

    Strictly positive, but P01 / 2 of rank 2 is sent to a pure state.
    """
    dim = 3
    ket = [array_utils.ket(i, dim) for i in range(dim)]
    kraus = [np.outer(ket[0], ket[0]), np.outer(ket[0], ket[1])]
    kraus += [np.outer(ket[k], ket[2]) / np.sqrt(3) for k in range(dim)]
    return qmaps.from_kraus(kraus)


def random_channel(seed=0, dim=2, kraus_rank=None):
    """Channel from a Haar random Stinespring isometry, full Kraus rank by default."""
    kraus_rank = dim * dim if kraus_rank is None else kraus_rank
    iso = array_utils.random_isometry(dim * kraus_rank, dim, seed)
    return qmaps.from_kraus(_split_isometry(iso, dim, kraus_rank))


def random_bistochastic(seed=0, dim=2, terms=3):
    """Random mixture of Haar unitaries."""
    rng = array_utils.get_rng(seed)
    weights = rng.dirichlet(np.ones(terms))
    kraus = [np.sqrt(w) * array_utils.random_unitary(dim, rng) for w in weights]
    return qmaps.from_kraus(kraus)


def random_instrument(seed=0, outcomes=2, dim=2, kraus_rank=1):
    """Instrument cut out of one Haar random isometry.

    Generic draws have invertible Kraus operators, so every operation is
    strictly positive.
    """
    iso = array_utils.random_isometry(dim * outcomes * kraus_rank, dim, seed)
    blocks = _split_isometry(iso, dim, outcomes * kraus_rank)
    ops = tuple(
        qmaps.from_kraus(blocks[x * kraus_rank : (x + 1) * kraus_rank]) for x in range(outcomes)
    )
    return measurements.Instrument(tuple(str(x) for x in range(outcomes)), ops)


ALIASES = {"qutrit_instrument": "qutrit_remark_instrument"}

CATALOG = {
    "identity": identity,
    "unitary": unitary,
    "luders": luders,
    "prepare": prepare,
    "swap_process": swap_process,
    "depolarize_to_pure": depolarize_to_pure,
    "qutrit_remark_instrument": qutrit_remark_instrument,
    "rank_drop_d3": rank_drop_d3,
    "random_channel": random_channel,
    "random_bistochastic": random_bistochastic,
    "random_instrument": random_instrument,
}


def generators():
    """Name to builder mapping of the catalog."""
    return dict(CATALOG)


def get_generator(name):
    name = str(name).replace("-", "_")
    name = ALIASES.get(name, name)
    try:
        return CATALOG[name]
    except KeyError:
        raise UnknownGenerator(
            "unknown generator {!r}, available: {}".format(name, ", ".join(sorted(CATALOG))),
            name=name,
        )


def build(name, **params):
    builder = get_generator(name)
    logger.debug("building %s with %s", name, params)
    return builder(**params)
