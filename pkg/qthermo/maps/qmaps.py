"""Completely positive maps in Kraus form.

Choi matrices use output-first ordering, J = (Phi (x) id)(|Omega><Omega|), and
vectorization is row-major, so vec(Phi(A)) = S vec(A) with
S = sum_a K_a (x) conj(K_a).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
from scipy import linalg

from qthermo.common import array_utils, opalg
from qthermo.common.errors import DimMismatch, NotPSD, NotSubunital
from qthermo.common.opalg import DEFAULT_TOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CPMap:
    """CP map from dim_in to dim_out stored by its Kraus operators."""

    dim_in: int
    dim_out: int
    kraus: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.kraus) == 0:
            raise ValueError("a CP map needs at least one Kraus operator")
        cleaned = []
        for i, k in enumerate(self.kraus):
            k = array_utils.as_matrix(k, name="Kraus operator {}".format(i))
            if k.shape != (self.dim_out, self.dim_in):
                raise DimMismatch(
                    "Kraus operator {} has shape {}, expected {}".format(
                        i, k.shape, (self.dim_out, self.dim_in)
                    )
                )
            cleaned.append(k)
        object.__setattr__(self, "kraus", tuple(cleaned))

    @cached_property
    def stacked(self):
        return np.stack(self.kraus)

    @property
    def is_square(self):
        return self.dim_in == self.dim_out

    def __repr__(self):
        return "CPMap(dim_in={}, dim_out={}, kraus_count={})".format(
            self.dim_in, self.dim_out, len(self.kraus)
        )


@dataclass(frozen=True, eq=False)
class MapClassification:
    trace_preserving: bool
    unital: bool
    bistochastic: bool
    strictly_positive: bool
    compatible_effect: np.ndarray
    purity_preserving: bool
    margins: Dict[str, float] = field(default_factory=dict)


################################################################################
# Construction
################################################################################


def from_kraus(kraus):
    kraus = [array_utils.as_matrix(k) for k in kraus]
    dim_out, dim_in = kraus[0].shape
    return CPMap(dim_in=dim_in, dim_out=dim_out, kraus=tuple(kraus))


def identity_map(dim):
    return CPMap(dim, dim, (np.eye(dim, dtype=complex),))


def unitary_map(unitary):
    u = array_utils.as_matrix(unitary, "unitary", square=True)
    if array_utils.max_abs(array_utils.dag(u) @ u - np.eye(u.shape[0])) > 1e-9:
        raise ValueError("matrix is not unitary")
    return CPMap(u.shape[0], u.shape[0], (u,))


def luders_map(effect, tol=DEFAULT_TOL):
    """Operation A -> sqrt(E) A sqrt(E)."""
    e = opalg.validate_effect(effect, tol)
    return CPMap(e.shape[0], e.shape[0], (array_utils.psd_sqrt(e),))


def prepare_map(sigma, effect=None, tol=DEFAULT_TOL):
    """Measure-and-prepare operation A -> tr[E A] sigma.

    Args:
        sigma: PSD output operator (a state for channels).
        effect: optional effect E, identity by default.
        tol: Tolerances.

    Returns:
        CPMap with Kraus operators sqrt(s_i e_j) |s_i><e_j|.
    """
    sigma = array_utils.hermitize(sigma, tol.herm_tol, name="sigma")
    dim_out = sigma.shape[0]
    if effect is None:
        effect = np.eye(dim_out, dtype=complex)
    effect = opalg.validate_effect(effect, tol)
    s_vals, s_vecs = linalg.eigh(sigma)
    e_vals, e_vecs = linalg.eigh(effect)
    kraus = []
    for s_val, s_vec in zip(s_vals, s_vecs.T):
        for e_val, e_vec in zip(e_vals, e_vecs.T):
            weight = max(s_val, 0.0) * max(e_val, 0.0)
            if weight > 0:
                kraus.append(np.sqrt(weight) * np.outer(s_vec, e_vec.conj()))
    if not kraus:
        kraus = [np.zeros((dim_out, effect.shape[0]), dtype=complex)]
    return CPMap(effect.shape[0], dim_out, tuple(kraus))


################################################################################
# Evaluation and representations
################################################################################


def apply(cp_map, a):
    """Schrodinger action sum_a K_a A K_a^dagger."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (cp_map.dim_in, cp_map.dim_in):
        raise DimMismatch(
            "input of shape {} for a map with dim_in {}".format(a.shape, cp_map.dim_in)
        )
    ks = cp_map.stacked
    return np.einsum("aij,jk,alk->il", ks, a, ks.conj())


def apply_dual(cp_map, a):
    """Heisenberg action sum_a K_a^dagger A K_a."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (cp_map.dim_out, cp_map.dim_out):
        raise DimMismatch(
            "input of shape {} for a dual map with dim_out {}".format(
                a.shape, cp_map.dim_out
            )
        )
    ks = cp_map.stacked
    return np.einsum("aji,jk,akl->il", ks.conj(), a, ks)


def dual(cp_map):
    return CPMap(
        cp_map.dim_out,
        cp_map.dim_in,
        tuple(array_utils.dag(k) for k in cp_map.kraus),
    )


def choi(cp_map):
    """Choi matrix, output factor first, trace equal to tr[Phi*(1)]."""
    vecs = cp_map.stacked.reshape(len(cp_map.kraus), -1)
    return vecs.T @ vecs.conj()


def kraus_from_choi(choi_matrix, dim_in, dim_out, tol=DEFAULT_TOL):
    """Canonical Kraus operators from a PSD Choi matrix.

    Eigenvectors above the rank threshold become Kraus operators, ordered by
    descending eigenvalue; ties are broken lexicographically on the
    phase-fixed eigenvector entries so output is reproducible.

    Raises:
        NotPSD: if the Choi matrix has an eigenvalue below -psd_tol.
    """
    j = array_utils.hermitize(choi_matrix, tol.herm_tol, name="Choi matrix")
    if j.shape != (dim_in * dim_out, dim_in * dim_out):
        raise DimMismatch(
            "Choi shape {} does not match dims ({}, {})".format(j.shape, dim_in, dim_out)
        )
    values, vectors = linalg.eigh(j)
    scale = max(1.0, float(np.max(np.abs(values))))
    if values[0] < -tol.psd_tol * scale:
        raise NotPSD(
            "Choi matrix has negative eigenvalue {:.3e}".format(values[0]),
            min_eigenvalue=float(values[0]),
        )
    keep = values > opalg.rank_threshold(values, tol)
    entries = []
    for value, vec in zip(values[keep], vectors[:, keep].T):
        pivot = vec[np.argmax(np.abs(vec) > 1e-12)]
        vec = vec * (abs(pivot) / pivot)
        sort_key = (-round(float(value), 12),) + tuple(
            np.round(np.concatenate([vec.real, vec.imag]), 12)
        )
        entries.append((sort_key, value, vec))
    entries.sort(key=lambda item: item[0])
    kraus = tuple(
        np.sqrt(value) * vec.reshape(dim_out, dim_in) for _, value, vec in entries
    )
    if not kraus:
        kraus = (np.zeros((dim_out, dim_in), dtype=complex),)
    return CPMap(dim_in, dim_out, kraus)


def canonical(cp_map, tol=DEFAULT_TOL):
    """Minimal Kraus form of a map (Choi eigendecomposition)."""
    return kraus_from_choi(choi(cp_map), cp_map.dim_in, cp_map.dim_out, tol)


def superoperator(cp_map):
    ks = cp_map.stacked
    return np.einsum("aij,akl->ikjl", ks, ks.conj()).reshape(
        cp_map.dim_out ** 2, cp_map.dim_in ** 2
    )


def from_superoperator(super_matrix, dim_in, dim_out, tol=DEFAULT_TOL):
    s = np.asarray(super_matrix, dtype=complex)
    j = (
        s.reshape(dim_out, dim_out, dim_in, dim_in)
        .transpose(0, 2, 1, 3)
        .reshape(dim_out * dim_in, dim_out * dim_in)
    )
    return kraus_from_choi(j, dim_in, dim_out, tol)


def maps_distance(m1, m2):
    """Trace norm of the Choi difference."""
    if (m1.dim_in, m1.dim_out) != (m2.dim_in, m2.dim_out):
        raise DimMismatch("maps act between different spaces")
    return array_utils.trace_norm(choi(m1) - choi(m2))


def maps_close(m1, m2, atol=1e-9):
    if (m1.dim_in, m1.dim_out) != (m2.dim_in, m2.dim_out):
        return False
    return array_utils.max_abs(choi(m1) - choi(m2)) <= atol


################################################################################
# Combinations
################################################################################


def tensor(m1, m2):
    kraus = tuple(np.kron(k, l) for k in m1.kraus for l in m2.kraus)
    return CPMap(m1.dim_in * m2.dim_in, m1.dim_out * m2.dim_out, kraus)


def compose(m2, m1):
    """The map m2 after m1."""
    if m1.dim_out != m2.dim_in:
        raise DimMismatch(
            "cannot compose: m1.dim_out={} but m2.dim_in={}".format(
                m1.dim_out, m2.dim_in
            )
        )
    kraus = tuple(l @ k for k in m1.kraus for l in m2.kraus)
    return CPMap(m1.dim_in, m2.dim_out, kraus)


def convex_mix(m1, m2, lam):
    """lam * m1 + (1 - lam) * m2."""
    if (m1.dim_in, m1.dim_out) != (m2.dim_in, m2.dim_out):
        raise DimMismatch("convex_mix needs maps with equal dimensions")
    if not 0 <= lam <= 1:
        raise ValueError("mixing weight must lie in [0, 1], got {}".format(lam))
    kraus = []
    if lam > 0:
        kraus += [np.sqrt(lam) * k for k in m1.kraus]
    if lam < 1:
        kraus += [np.sqrt(1 - lam) * l for l in m2.kraus]
    return CPMap(m1.dim_in, m1.dim_out, tuple(kraus))


def sum_maps(maps):
    """Sum of CP maps with a common domain and codomain."""
    maps = list(maps)
    first = maps[0]
    for m in maps[1:]:
        if (m.dim_in, m.dim_out) != (first.dim_in, first.dim_out):
            raise DimMismatch("cannot add maps acting between different spaces")
    return CPMap(first.dim_in, first.dim_out, tuple(k for m in maps for k in m.kraus))


def scale_map(cp_map, weight):
    return CPMap(cp_map.dim_in, cp_map.dim_out, tuple(np.sqrt(weight) * k for k in cp_map.kraus))


################################################################################
# Classification
################################################################################


def effect_operator(cp_map):
    """Phi*(1) = sum_a K_a^dagger K_a."""
    ks = cp_map.stacked
    return np.einsum("aji,ajk->ik", ks.conj(), ks)


def classify_map(cp_map, tol=DEFAULT_TOL):
    """Structural flags of a CP map with the slack behind each flag.

    Args:
        cp_map: CPMap.
        tol: Tolerances.

    Returns:
        MapClassification.

    Raises:
        NotSubunital: if Phi*(1) exceeds the identity beyond eff_tol.
    """
    effect = effect_operator(cp_map)
    eff_values = linalg.eigvalsh(array_utils.hermitize(effect, tol.herm_tol))
    if eff_values[-1] > 1 + tol.eff_tol:
        raise NotSubunital(
            "Phi*(1) has eigenvalue {:.6e} above 1".format(eff_values[-1]),
            max_eigenvalue=float(eff_values[-1]),
        )
    compatible = opalg.validate_effect(effect, tol)
    tp_slack = array_utils.max_abs(effect - np.eye(cp_map.dim_in))
    trace_preserving = tp_slack <= tol.trace_tol
    image = apply(cp_map, np.eye(cp_map.dim_in, dtype=complex))
    if cp_map.is_square:
        unital_slack = array_utils.max_abs(image - np.eye(cp_map.dim_out))
        unital = unital_slack <= tol.trace_tol
    else:
        unital_slack = float("inf")
        unital = False
    sp_margin = opalg.strict_positivity_margin(image, tol)
    choi_rank = opalg.rank_tol(choi(cp_map), tol)
    margins = {
        "trace_preserving": tp_slack,
        "unital": unital_slack,
        "strictly_positive": sp_margin,
        "effect_max_eigenvalue": float(eff_values[-1]),
        "choi_rank": float(choi_rank),
    }
    return MapClassification(
        trace_preserving=bool(trace_preserving),
        unital=bool(unital),
        bistochastic=bool(trace_preserving and unital),
        strictly_positive=bool(sp_margin > 0),
        compatible_effect=compatible,
        purity_preserving=bool(choi_rank == 1),
        margins=margins,
    )


def choi_positivity_margin(cp_map, tol=DEFAULT_TOL):
    return opalg.strict_positivity_margin(choi(cp_map), tol)


def is_unitary_map(cp_map, tol=DEFAULT_TOL):
    """True when the map has Kraus rank 1 with a unitary Kraus operator."""
    if not cp_map.is_square:
        return False
    reduced = canonical(cp_map, tol)
    if len(reduced.kraus) != 1:
        return False
    u = reduced.kraus[0]
    return array_utils.max_abs(array_utils.dag(u) @ u - np.eye(u.shape[0])) <= tol.trace_tol
