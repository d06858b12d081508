"""Dense operator algebra with explicit tolerances.

Spectral helpers (ranks, supports, strict positivity) and the closure,
commutant and center computations for finite *-algebras of matrices.
Matrices are plain complex numpy arrays; the domain "types" of this module
are validators that return cleaned arrays.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from qthermo.common import array_utils
from qthermo.common.errors import DegenerateCenter, DimMismatch, NotPSD, NotSubunital

logger = logging.getLogger(__name__)

CENTER_SEED = 20240601
CENTER_REDRAWS = 3


@dataclass(frozen=True)
class Tolerances:
    herm_tol: float = 1e-9
    psd_tol: float = 1e-9
    trace_tol: float = 1e-9
    proj_tol: float = 1e-8
    span_tol: float = 1e-8
    rank_tol: float = 1e-9
    fixed_tol: float = 1e-8
    ds_eps: float = 1e-6
    eff_tol: float = 1e-9

    def __post_init__(self):
        for item in dataclasses.fields(self):
            value = getattr(self, item.name)
            if not value > 0:
                raise ValueError(
                    "tolerance {} must be strictly positive, got {}".format(
                        item.name, value
                    )
                )

    def replace(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class AnalysisConfig:
    """Tolerances plus the knobs of the iterative and sampling routines."""

    tol: Tolerances = field(default_factory=Tolerances)
    max_iter: int = 10000
    samples_per_rank: int = 20
    max_structured_subsets: int = 64
    max_kraus_bases: int = 4
    seed: int = 0

    def replace(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["tol"] = self.tol.to_dict()
        return out


DEFAULT_TOL = Tolerances()


################################################################################
# Spectral helpers
################################################################################


def eigh_hermitian(a, tol=DEFAULT_TOL):
    """Eigendecomposition of a Hermitian matrix, ascending eigenvalues."""
    h = array_utils.hermitize(a, tol.herm_tol)
    return linalg.eigh(h)


def rank_threshold(values, tol=DEFAULT_TOL):
    top = float(np.max(values)) if np.size(values) else 0.0
    return tol.rank_tol * max(1.0, top)


def _check_psd(values, tol, name):
    if np.size(values) == 0:
        return
    lowest = float(np.min(values))
    top = float(np.max(np.abs(values)))
    if lowest < -tol.psd_tol * max(1.0, top):
        raise NotPSD(
            "{} is not positive semidefinite (min eigenvalue {:.3e})".format(
                name, lowest
            ),
            min_eigenvalue=lowest,
        )


def rank_tol(a, tol=DEFAULT_TOL):
    """Counts eigenvalues above the relative rank threshold.

    Args:
        a: PSD Hermitian matrix.
        tol: Tolerances.

    Returns:
        int, numerical rank.

    Raises:
        NotPSD: if the smallest eigenvalue is below -psd_tol.
    """
    values = linalg.eigvalsh(array_utils.hermitize(a, tol.herm_tol))
    _check_psd(values, tol, "operator")
    return int(np.sum(values > rank_threshold(values, tol)))


def support_projection(a, tol=DEFAULT_TOL):
    values, vectors = eigh_hermitian(a, tol)
    _check_psd(values, tol, "operator")
    keep = vectors[:, values > rank_threshold(values, tol)]
    return keep @ array_utils.dag(keep)


def support_basis(a, tol=DEFAULT_TOL):
    """Orthonormal columns spanning the support of a PSD matrix."""
    values, vectors = eigh_hermitian(a, tol)
    _check_psd(values, tol, "operator")
    return vectors[:, values > rank_threshold(values, tol)]


def strict_positivity_margin(a, tol=DEFAULT_TOL):
    """Smallest eigenvalue minus the rank threshold (positive means A > 0)."""
    values = linalg.eigvalsh(array_utils.hermitize(a, tol.herm_tol))
    return float(values[0] - rank_threshold(values, tol))


def is_strictly_positive_op(a, tol=DEFAULT_TOL):
    return strict_positivity_margin(a, tol) > 0


def is_projection(p, tol=DEFAULT_TOL):
    p = array_utils.as_matrix(p, "projection", square=True)
    return array_utils.max_abs(p @ p - p) <= tol.proj_tol and array_utils.max_abs(
        p - array_utils.dag(p)
    ) <= tol.proj_tol


def projection_rank(p):
    return int(round(float(np.trace(p).real)))


def projection_basis(p, tol=DEFAULT_TOL):
    """Orthonormal columns spanning the range of a projection."""
    values, vectors = eigh_hermitian(p, tol)
    return vectors[:, values > 0.5]


def validate_effect(e, tol=DEFAULT_TOL, name="effect"):
    """Returns the Hermitian part of an effect with spectrum clamped to [0, 1].

    Raises:
        NotPSD: if an eigenvalue is below -eff_tol.
        NotSubunital: if an eigenvalue exceeds 1 + eff_tol.
    """
    values, vectors = eigh_hermitian(e, tol)
    if values.size and values[0] < -tol.eff_tol:
        raise NotPSD("{} has negative eigenvalue {:.3e}".format(name, values[0]))
    if values.size and values[-1] > 1 + tol.eff_tol:
        raise NotSubunital(
            "{} has eigenvalue {:.3e} above 1".format(name, values[-1]),
            max_eigenvalue=float(values[-1]),
        )
    values = np.clip(values, 0.0, 1.0)
    return (vectors * values) @ array_utils.dag(vectors)


def validate_state(rho, tol=DEFAULT_TOL, name="state"):
    h = array_utils.hermitize(rho, tol.herm_tol, name=name)
    values = linalg.eigvalsh(h)
    if values.size and values[0] < -tol.psd_tol:
        raise NotPSD("{} has negative eigenvalue {:.3e}".format(name, values[0]))
    trace = float(np.trace(h).real)
    if abs(trace - 1) > tol.trace_tol:
        raise ValueError("{} has trace {:.12f}, expected 1".format(name, trace))
    return h


def validate_projection(p, tol=DEFAULT_TOL, name="projection"):
    h = array_utils.hermitize(p, tol.herm_tol, name=name)
    if not is_projection(h, tol):
        raise ValueError("{} is not idempotent within proj_tol".format(name))
    return h


################################################################################
# Algebras
################################################################################


@dataclass(frozen=True, eq=False)
class AlgebraBasis:
    """Hilbert-Schmidt orthonormal Hermitian basis of a *-closed subspace.

    The complex span of ``basis`` is the subspace. ``unit`` is the unit of the
    algebra when the subspace is one (identity unless compressed).
    """

    dim: int
    basis: Tuple[np.ndarray, ...]
    unit: Optional[np.ndarray] = None

    @property
    def size(self):
        return len(self.basis)

    def vectors(self):
        """Columns vec(B_k), row-major."""
        if not self.basis:
            return np.zeros((self.dim * self.dim, 0), dtype=complex)
        return np.stack([b.reshape(-1) for b in self.basis], axis=1)

    def residual(self, a):
        """Distance of A from the span (Frobenius norm)."""
        vec = np.asarray(a, dtype=complex).reshape(-1)
        mat = self.vectors()
        coeffs = array_utils.dag(mat) @ vec
        return float(np.linalg.norm(vec - mat @ coeffs))

    def contains(self, a, tol=DEFAULT_TOL):
        scale = max(1.0, float(np.linalg.norm(a)))
        return self.residual(a) <= tol.span_tol * scale * 10

    def generic_element(self, seed=CENTER_SEED):
        rng = array_utils.get_rng(seed)
        coeffs = rng.normal(size=self.size)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, b in zip(coeffs, self.basis):
            out = out + c * b
        return out


def hermitian_basis(matrices, dim, tol=DEFAULT_TOL):
    """Orthonormal Hermitian basis of the *-closed span of the matrices.

    Each matrix contributes its Hermitian and anti-Hermitian parts; real
    orthonormalization of those keeps the basis Hermitian.
    """
    parts = []
    for m in matrices:
        m = np.asarray(m, dtype=complex)
        if m.shape != (dim, dim):
            raise DimMismatch("expected {0}x{0} matrix, got {1}".format(dim, m.shape))
        parts.append((m + array_utils.dag(m)) / 2)
        parts.append((m - array_utils.dag(m)) / 2j)
    if not parts:
        return ()
    real = np.stack(
        [np.concatenate([p.real.reshape(-1), p.imag.reshape(-1)]) for p in parts],
        axis=1,
    )
    if np.max(np.abs(real)) == 0:
        return ()
    ortho = linalg.orth(real, rcond=tol.span_tol)
    n = dim * dim
    out = []
    for col in ortho.T:
        mat = (col[:n] + 1j * col[n:]).reshape(dim, dim)
        out.append((mat + array_utils.dag(mat)) / 2)
    return tuple(out)


def algebra_closure(generators, dim, tol=DEFAULT_TOL, unit=None):
    """Smallest unital *-algebra containing the generators.

    Words in the generators (and their adjoints) are appended to the span until
    a full pass adds nothing; the basis never exceeds dim**2 elements.

    Args:
        generators: sequence of dim x dim matrices.
        dim: int, matrix size.
        tol: Tolerances, span_tol decides linear dependence.
        unit: optional projection used as the unit (identity by default).

    Returns:
        AlgebraBasis.
    """
    unit = np.eye(dim, dtype=complex) if unit is None else np.asarray(unit, dtype=complex)
    gens = [np.asarray(g, dtype=complex) for g in generators]
    letters = list(hermitian_basis(gens, dim, tol)) if gens else []
    span = hermitian_basis([unit] + letters, dim, tol)
    while True:
        words = list(span)
        for letter in letters:
            for element in span:
                words.append(letter @ element)
        grown = hermitian_basis(words, dim, tol)
        if len(grown) == len(span) or len(grown) >= dim * dim:
            span = grown
            break
        span = grown
    logger.debug("algebra closure: %d generators, dimension %d", len(gens), len(span))
    return AlgebraBasis(dim=dim, basis=span, unit=unit)


def _commutator_matrix(elements, dim):
    """Stacked superoperators B -> [A, B] for every A, row-major vec."""
    eye = np.eye(dim, dtype=complex)
    blocks = [np.kron(a, eye) - np.kron(eye, a.T) for a in elements]
    return np.concatenate(blocks, axis=0)


def commutant(alg, tol=DEFAULT_TOL):
    """Basis of all matrices commuting with every element of alg."""
    dim = alg.dim
    if alg.size == 0:
        full = [np.eye(dim, dtype=complex)]
        full += [np.outer(array_utils.ket(i, dim), array_utils.ket(j, dim)) for i in range(dim) for j in range(dim)]
        return AlgebraBasis(dim=dim, basis=hermitian_basis(full, dim, tol))
    stacked = _commutator_matrix(alg.basis, dim)
    null = linalg.null_space(stacked, rcond=tol.span_tol)
    matrices = [col.reshape(dim, dim) for col in null.T]
    return AlgebraBasis(
        dim=dim, basis=hermitian_basis(matrices, dim, tol), unit=np.eye(dim, dtype=complex)
    )


def center(alg, tol=DEFAULT_TOL):
    """Basis of alg intersected with its commutant."""
    dim = alg.dim
    if alg.size == 0:
        return AlgebraBasis(dim=dim, basis=())
    # real coefficients c with [sum_k c_k B_k, B_j] = 0 for all j
    columns = []
    for b_k in alg.basis:
        col = np.concatenate([array_utils.commutator(b_k, b_j).reshape(-1) for b_j in alg.basis])
        columns.append(np.concatenate([col.real, col.imag]))
    system = np.stack(columns, axis=1)
    null = linalg.null_space(system, rcond=tol.span_tol)
    matrices = []
    for coeffs in null.T:
        mat = np.zeros((dim, dim), dtype=complex)
        for c, b in zip(coeffs, alg.basis):
            mat = mat + c * b
        matrices.append(mat)
    return AlgebraBasis(dim=dim, basis=hermitian_basis(matrices, dim, tol), unit=alg.unit)


def spectral_projections(herm, tol=DEFAULT_TOL, unit=None):
    """Groups the spectrum of a Hermitian matrix into eigenprojections.

    Eigenvalues closer than span_tol (relative) are merged, gaps wider than
    1000 x span_tol separate clusters; anything in between is ambiguous. When a
    unit projection is given, only the part of the spectrum inside its range
    is returned.

    Raises:
        DegenerateCenter: on an ambiguous gap.
    """
    dim = herm.shape[0]
    if unit is not None:
        spread = array_utils.op_norm(herm) + 1.0
        herm = herm + 3 * spread * (np.eye(dim) - unit)
    values, vectors = eigh_hermitian(herm, tol)
    scale = max(1.0, float(np.max(np.abs(values))))
    merge = tol.span_tol * scale
    split = 1e3 * tol.span_tol * scale
    groups = [[0]]
    for i in range(1, len(values)):
        gap = values[i] - values[i - 1]
        if gap <= merge:
            groups[-1].append(i)
        elif gap >= split:
            groups.append([i])
        else:
            raise DegenerateCenter(
                "ambiguous eigenvalue gap {:.3e}".format(gap), gap=float(gap)
            )
    projections = []
    for group in groups:
        cols = vectors[:, group]
        p = cols @ array_utils.dag(cols)
        if unit is not None:
            if np.trace(unit @ p).real < 0.5:
                continue
        projections.append(p)
    return projections


def generic_projections(alg, tol=DEFAULT_TOL, seed=CENTER_SEED, expected=None):
    """Eigenprojections of a seeded generic Hermitian element of alg.

    Redrawn up to three times when gaps are ambiguous or, with ``expected``
    given, when the projection count disagrees with it.

    Raises:
        DegenerateCenter: when no draw separates the spectrum cleanly.
    """
    unit = alg.unit if alg.unit is not None else np.eye(alg.dim, dtype=complex)
    rng = array_utils.get_rng(seed)
    last_error = None
    for attempt in range(CENTER_REDRAWS):
        element = alg.generic_element(rng)
        try:
            projections = spectral_projections(element, tol, unit=unit)
        except DegenerateCenter as err:
            last_error = err
            logger.warning("generic draw %d ambiguous, redrawing", attempt)
            continue
        if expected is None or len(projections) == expected:
            return projections
        last_error = DegenerateCenter(
            "found {} projections, expected {}".format(len(projections), expected)
        )
        logger.warning("generic draw %d: %s", attempt, last_error)
    raise last_error


def center_projections(alg, tol=DEFAULT_TOL, seed=CENTER_SEED):
    """Minimal projections of the center of alg, summing to its unit."""
    zed = center(alg, tol)
    if zed.size <= 1:
        unit = alg.unit if alg.unit is not None else np.eye(alg.dim, dtype=complex)
        return [unit]
    return generic_projections(zed, tol, seed=seed, expected=zed.size)


def is_orthocomplete(projections, unit, tol=DEFAULT_TOL):
    total = np.zeros_like(unit)
    for i, p in enumerate(projections):
        total = total + p
        for j, q in enumerate(projections):
            expected = p if i == j else np.zeros_like(p)
            if array_utils.max_abs(p @ q - expected) > tol.proj_tol:
                return False
    return array_utils.max_abs(total - unit) <= tol.proj_tol
