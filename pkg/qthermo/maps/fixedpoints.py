"""Fixed points of channels and operations.

Covers the fixed-point space of a square map, the average channel (the
projection of the superoperator onto its eigenvalue-1 eigenspace), classical
actions and their irreducibility, the Kraus block decomposition used to build
strictly positive fixed states, and the factor decomposition of the
fixed-point algebra of the dual.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from qthermo.common import array_utils, opalg
from qthermo.common.errors import (
    DegenerateCenter,
    DimMismatch,
    FactorizationFailed,
    NotTracePreserving,
    RefinementStall,
)
from qthermo.common.opalg import CENTER_SEED, DEFAULT_TOL, AlgebraBasis
from qthermo.maps import qmaps

logger = logging.getLogger(__name__)

CROSS_CHECK_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8
RECONSTRUCTION_SAMPLES = 50


@dataclass(frozen=True, eq=False)
class ClassicalAction:
    """Transition matrix T[m, n] = <phi_m|Phi(|phi_n><phi_n|)|phi_m>.

    ``basis`` holds the orthonormal basis vectors phi_n as columns.
    """

    dim: int
    t_matrix: np.ndarray
    basis: np.ndarray

    @property
    def vectors(self):
        return [self.basis[:, n] for n in range(self.dim)]


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    projections: Tuple[np.ndarray, ...]
    per_block_actions: Tuple[ClassicalAction, ...]
    per_block_fixed_states: Tuple[np.ndarray, ...]
    isometries: Tuple[np.ndarray, ...] = ()
    block_channels: Tuple[qmaps.CPMap, ...] = ()
    commutation_residual: float = 0.0


@dataclass(frozen=True, eq=False)
class FixedStateDiagnosis:
    state: Optional[np.ndarray]
    block_dims: Tuple[int, ...]
    block_ranks: Tuple[int, ...]
    stalled: bool
    min_support_rank: int
    dim: int
    reason: str = ""

    @property
    def full_min_support(self):
        return self.min_support_rank == self.dim


@dataclass(frozen=True, eq=False)
class FixedPointStructure:
    min_support: np.ndarray
    central_projections: Tuple[np.ndarray, ...]
    factor_dims: Tuple[Tuple[int, int], ...]
    block_states: Tuple[np.ndarray, ...]
    factor_isometries: Tuple[np.ndarray, ...]
    average: Optional[qmaps.CPMap] = None
    reconstruction_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _require_square(ch):
    if not ch.is_square:
        raise DimMismatch("map from dim {} to dim {} is not square".format(ch.dim_in, ch.dim_out))


def _require_trace_preserving(ch, tol):
    _require_square(ch)
    slack = array_utils.max_abs(qmaps.effect_operator(ch) - np.eye(ch.dim_in))
    if slack > tol.trace_tol:
        raise NotTracePreserving(
            "map is not trace preserving (deviation {:.3e})".format(slack),
            deviation=slack,
        )


def _eigenspace_one(super_matrix, tol):
    """Count, right and left null vectors of S - 1 for eigenvalues near 1."""
    values = linalg.eigvals(super_matrix)
    count = int(np.sum(np.abs(values - 1) < tol.fixed_tol))
    if count == 0:
        return 0, None, None
    shifted = super_matrix - np.eye(super_matrix.shape[0])
    u, _, vh = linalg.svd(shifted)
    right = array_utils.dag(vh[-count:])
    left = u[:, -count:]
    return count, right, left


################################################################################
# Fixed-point space and average channel
################################################################################


def fixed_point_basis(cp_map, tol=DEFAULT_TOL):
    """Hermitian basis of {A : Phi(A) = A}, empty when 1 is not an eigenvalue."""
    _require_square(cp_map)
    dim = cp_map.dim_in
    count, right, _ = _eigenspace_one(qmaps.superoperator(cp_map), tol)
    if count == 0:
        return AlgebraBasis(dim=dim, basis=())
    matrices = [right[:, i].reshape(dim, dim) for i in range(count)]
    basis = opalg.hermitian_basis(matrices, dim, tol)
    if len(basis) != count:
        logger.warning(
            "fixed-point space: %d eigenvalues near 1 but %d Hermitian basis elements",
            count, len(basis),
        )
    return AlgebraBasis(dim=dim, basis=basis)


def average_channel(ch, tol=DEFAULT_TOL):
    """Cesaro limit of the powers of a channel.

    Computed as P = R (L^dagger R)^-1 L^dagger from right and left null
    vectors of S - 1, so only the eigenvalue-1 part of the spectrum survives.

    Raises:
        NotTracePreserving: if ch is not a channel.
    """
    _require_trace_preserving(ch, tol)
    dim = ch.dim_in
    super_matrix = qmaps.superoperator(ch)
    count, right, left = _eigenspace_one(super_matrix, tol)
    if count == 0:
        raise NotTracePreserving("channel superoperator has no eigenvalue 1")
    overlap = array_utils.dag(left) @ right
    projector = right @ linalg.solve(overlap, array_utils.dag(left))
    return qmaps.from_superoperator(projector, dim, dim, tol)


def cesaro_average(ch, n=2000, tol=DEFAULT_TOL):
    """(1/n) sum_{k=1..n} ch^k evaluated on the superoperator."""
    _require_square(ch)
    dim = ch.dim_in
    super_matrix = qmaps.superoperator(ch)
    power = np.eye(dim * dim, dtype=complex)
    total = np.zeros_like(power)
    for _ in range(n):
        power = super_matrix @ power
        total += power
    return qmaps.from_superoperator(total / n, dim, dim, tol)


def minimal_support_projection(ch, tol=DEFAULT_TOL):
    """Support of the average channel applied to the maximally mixed state."""
    average = average_channel(ch, tol)
    dim = ch.dim_in
    rho = qmaps.apply(average, np.eye(dim, dtype=complex) / dim)
    return opalg.support_projection(rho, tol)


def is_fixed_state(ch, rho, tol=DEFAULT_TOL):
    return array_utils.max_abs(qmaps.apply(ch, rho) - rho) <= tol.fixed_tol


################################################################################
# Classical actions
################################################################################


def classical_action(ch, basis=None, tol=DEFAULT_TOL):
    """Transition matrix of a channel in an orthonormal basis.

    Args:
        ch: trace-preserving square CPMap.
        basis: optional matrix whose columns are the basis vectors,
            computational basis by default.
        tol: Tolerances.

    Returns:
        ClassicalAction, column-stochastic.
    """
    _require_trace_preserving(ch, tol)
    dim = ch.dim_in
    basis = np.eye(dim, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    if basis.shape != (dim, dim):
        raise DimMismatch("basis of shape {} for dim {}".format(basis.shape, dim))
    t_matrix = np.zeros((dim, dim))
    for n in range(dim):
        image = qmaps.apply(ch, array_utils.proj(basis[:, n]))
        t_matrix[:, n] = np.real(np.diag(array_utils.dag(basis) @ image @ basis))
    rotated = np.einsum("ij,ajk,kl->ail", array_utils.dag(basis), ch.stacked, basis)
    hadamard = np.sum(np.abs(rotated) ** 2, axis=0)
    drift = array_utils.max_abs(hadamard - t_matrix)
    if drift > CROSS_CHECK_TOL:
        logger.warning("classical action cross-check drift %.3e", drift)
    return ClassicalAction(dim=dim, t_matrix=t_matrix, basis=basis)


def is_irreducible(action, tol=DEFAULT_TOL):
    """True when the transition graph is strongly connected.

    There is an edge n -> m whenever T[m, n] exceeds trace_tol.
    """
    t_matrix = action.t_matrix if isinstance(action, ClassicalAction) else np.asarray(action)
    if t_matrix.shape[0] == 1:
        return True
    adjacency = csr_matrix((t_matrix.T > tol.trace_tol).astype(float))
    num_components = connected_components(
        adjacency, directed=True, connection="strong", return_labels=False
    )
    return num_components == 1


################################################################################
# Kraus block decomposition
################################################################################


def _restrict(ch, isometry):
    """Channel compressed to the range of an isometry commuting with it."""
    dag_iso = array_utils.dag(isometry)
    size = isometry.shape[1]
    return qmaps.CPMap(size, size, tuple(dag_iso @ k @ isometry for k in ch.kraus))


def _block_state(block, tol):
    size = block.dim_in
    return qmaps.apply(average_channel(block, tol), np.eye(size, dtype=complex) / size)


def _commuting_projections(ch, tol, seed):
    kraus_span = AlgebraBasis(dim=ch.dim_in, basis=opalg.hermitian_basis(ch.kraus, ch.dim_in, tol))
    comm = opalg.commutant(kraus_span, tol)
    return opalg.generic_projections(comm, tol, seed=seed)


def kraus_block_decomposition(ch, tol=DEFAULT_TOL, seed=CENTER_SEED):
    """Finest family of projections commuting with every Kraus operator.

    The family comes from a generic element of the commutant of the Kraus
    operators. Each block carries its restricted channel, its fixed state
    and the classical action in the fixed state's eigenbasis. A block whose
    classical action is reducible is split again from its own commutant.

    Raises:
        NotTracePreserving: if ch is not a channel.
        RefinementStall: if a reducible block has a trivial commutant; the
            decomposition found so far is attached to the error.
    """
    _require_trace_preserving(ch, tol)
    dim = ch.dim_in
    pending = [(p, 0) for p in _commuting_projections(ch, tol, seed)]
    projections, actions, states, isometries, channels = [], [], [], [], []
    stalled_block = None
    while pending:
        p, depth = pending.pop(0)
        iso = opalg.projection_basis(p, tol)
        block = _restrict(ch, iso)
        sigma = _block_state(block, tol)
        _, eigvecs = opalg.eigh_hermitian(sigma, tol)
        action = classical_action(block, eigvecs, tol)
        if is_irreducible(action, tol) or stalled_block is not None:
            projections.append(p)
            actions.append(action)
            states.append(iso @ sigma @ array_utils.dag(iso))
            isometries.append(iso)
            channels.append(block)
            continue
        sub = _commuting_projections(block, tol, seed) if depth < dim else []
        if len(sub) <= 1:
            logger.warning("block of rank %d is reducible but cannot be refined", iso.shape[1])
            stalled_block = p
            pending.insert(0, (p, depth))
            continue
        for q in sub:
            pending.append((iso @ q @ array_utils.dag(iso), depth + 1))

    residual = 0.0
    for k in ch.kraus:
        for p in projections:
            residual = max(residual, array_utils.max_abs(k @ p - p @ k))
    if residual > tol.span_tol:
        logger.warning("Kraus operators commute with block projections only to %.3e", residual)
    decomposition = BlockDecomposition(
        projections=tuple(projections),
        per_block_actions=tuple(actions),
        per_block_fixed_states=tuple(states),
        isometries=tuple(isometries),
        block_channels=tuple(channels),
        commutation_residual=residual,
    )
    if stalled_block is not None:
        raise RefinementStall(
            "reducible block admits no finer commuting projection",
            decomposition=decomposition,
            block=stalled_block,
        )
    return decomposition


def fixed_state_diagnosis(ch, weights=None, tol=DEFAULT_TOL, seed=CENTER_SEED):
    """Per-block account of the strictly positive fixed state construction.

    The candidate state is sum_b p_b sigma_b over the blocks of the Kraus
    decomposition; it is returned only when every sigma_b has full rank in
    its block.
    """
    _require_trace_preserving(ch, tol)
    stalled = False
    try:
        decomposition = kraus_block_decomposition(ch, tol, seed)
    except RefinementStall as err:
        stalled = True
        decomposition = err.decomposition
    dims = tuple(iso.shape[1] for iso in decomposition.isometries)
    ranks = tuple(opalg.rank_tol(s, tol) for s in decomposition.per_block_fixed_states)
    min_support_rank = opalg.rank_tol(minimal_support_projection(ch, tol), tol)
    n_blocks = len(dims)
    if weights is None:
        weights = np.full(n_blocks, 1.0 / n_blocks)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_blocks,) or np.any(weights <= 0) or abs(weights.sum() - 1) > tol.trace_tol:
        raise ValueError(
            "weights must be {} strictly positive probabilities, got {}".format(n_blocks, weights)
        )
    state = None
    reason = ""
    if all(rank == size for rank, size in zip(ranks, dims)):
        state = sum(w * s for w, s in zip(weights, decomposition.per_block_fixed_states))
        if not is_fixed_state(ch, state, tol):
            logger.warning("assembled block state is not fixed by the channel")
    else:
        reason = "block fixed state ranks {} below block dims {}".format(ranks, dims)
    return FixedStateDiagnosis(
        state=state,
        block_dims=dims,
        block_ranks=ranks,
        stalled=stalled,
        min_support_rank=min_support_rank,
        dim=ch.dim_in,
        reason=reason,
    )


def strictly_positive_fixed_state(ch, weights=None, tol=DEFAULT_TOL, seed=CENTER_SEED):
    return fixed_state_diagnosis(ch, weights, tol, seed).state


################################################################################
# Factor decomposition of the fixed-point algebra
################################################################################


def _compress(alg, projection, tol):
    elements = [projection @ b @ projection for b in alg.basis]
    return AlgebraBasis(
        dim=alg.dim, basis=opalg.hermitian_basis(elements, alg.dim, tol), unit=projection
    )


def _matrix_units(block_alg, block_rank, tol, seed):
    """Isometry W with W (|i> (x) |j>) = v_i f_j and the factor sizes (k, r)."""
    minimal = opalg.generic_projections(block_alg, tol, seed=seed)
    ranks = [opalg.projection_rank(q) for q in minimal]
    r = ranks[0]
    k = block_rank // r if r else 0
    if r == 0 or block_rank % r or any(x != r for x in ranks) or len(minimal) != k:
        raise FactorizationFailed(
            "block of rank {} does not split into equal minimal projections".format(block_rank),
            ranks=ranks,
        )
    p = minimal[0]
    f_basis = opalg.projection_basis(p, tol)
    rng = array_utils.get_rng(seed + 1)
    connector = block_alg.generic_element(rng) + 1j * block_alg.generic_element(rng)
    isometries = []
    for q in minimal:
        if q is p:
            isometries.append(p)
            continue
        u, s, vh = linalg.svd(q @ connector @ p)
        if s[r - 1] <= tol.span_tol * max(1.0, s[0]):
            raise FactorizationFailed(
                "no partial isometry connects the minimal projections",
                singular_values=s[: r + 1].tolist(),
            )
        isometries.append(u[:, :r] @ vh[:r])
    columns = [v @ f for v in isometries for f in f_basis.T]
    return np.stack(columns, axis=1), k, r


def fixed_algebra_decomposition(ch, tol=DEFAULT_TOL, seed=CENTER_SEED):
    """Factor structure of the compressed fixed-point algebra of the dual.

    The algebra P F(ch*) P, with P the minimal support projection, is a
    direct sum of blocks B(K_a) (x) 1_{R_a}. Each block gets an isometry
    W_a from K_a (x) R_a onto its range and the state omega_a on R_a
    carried by the average channel.

    Raises:
        NotTracePreserving: if ch is not a channel.
        FactorizationFailed: when a block has no matrix-unit structure or
            the factorized form disagrees with the average channel.
    """
    _require_trace_preserving(ch, tol)
    dim = ch.dim_in
    average = average_channel(ch, tol)
    rho0 = qmaps.apply(average, np.eye(dim, dtype=complex) / dim)
    support = opalg.support_projection(rho0, tol)
    dual_fixed = fixed_point_basis(qmaps.dual(ch), tol)
    compressed = [support @ b @ support for b in dual_fixed.basis]
    alg = opalg.algebra_closure(compressed, dim, tol, unit=support)
    try:
        central = opalg.center_projections(alg, tol, seed=seed)
    except DegenerateCenter as err:
        raise FactorizationFailed("center of the fixed-point algebra is ambiguous", cause=str(err))

    factor_dims, block_states, factor_isometries = [], [], []
    for index, p_alpha in enumerate(central):
        block_alg = _compress(alg, p_alpha, tol)
        block_rank = opalg.projection_rank(p_alpha)
        try:
            w_alpha, k, r = _matrix_units(block_alg, block_rank, tol, seed + index)
        except DegenerateCenter as err:
            raise FactorizationFailed(
                "block {} has no clean minimal projections".format(index), cause=str(err)
            )
        omega = array_utils.partial_trace(
            array_utils.dag(w_alpha) @ rho0 @ w_alpha, [k, r], keep=[1]
        )
        omega = omega / np.trace(omega).real
        factor_dims.append((k, r))
        block_states.append((omega + array_utils.dag(omega)) / 2)
        factor_isometries.append(w_alpha)
        logger.debug("fixed-point block %d: k=%d, r=%d", index, k, r)

    structure = FixedPointStructure(
        min_support=support,
        central_projections=tuple(central),
        factor_dims=tuple(factor_dims),
        block_states=tuple(block_states),
        factor_isometries=tuple(factor_isometries),
        average=average,
    )
    error = reconstruction_error(structure, tol=tol)
    if error > RECONSTRUCTION_TOL:
        raise FactorizationFailed(
            "factorized form deviates from the average channel by {:.3e}".format(error),
            factor_dims=factor_dims,
        )
    return FixedPointStructure(
        min_support=support,
        central_projections=tuple(central),
        factor_dims=tuple(factor_dims),
        block_states=tuple(block_states),
        factor_isometries=tuple(factor_isometries),
        average=average,
        reconstruction_error=error,
        diagnostics={"algebra_dim": alg.size, "dual_fixed_dim": dual_fixed.size},
    )


def reconstruct_average(structure):
    """The average channel in factorized form, valid on states inside P H."""

    def average(rho):
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for p_alpha, w_alpha, (k, r), omega in zip(
            structure.central_projections,
            structure.factor_isometries,
            structure.factor_dims,
            structure.block_states,
        ):
            local = array_utils.dag(w_alpha) @ p_alpha @ rho @ p_alpha @ w_alpha
            reduced = array_utils.partial_trace(local, [k, r], keep=[0])
            out = out + w_alpha @ np.kron(reduced, omega) @ array_utils.dag(w_alpha)
        return out

    return average


def reconstruction_error(structure, samples=RECONSTRUCTION_SAMPLES, seed=0, tol=DEFAULT_TOL):
    """Largest deviation of the factorized form from the average channel."""
    support_iso = opalg.projection_basis(structure.min_support, tol)
    rank = support_iso.shape[1]
    rng = array_utils.get_rng(seed)
    factorized = reconstruct_average(structure)
    worst = 0.0
    for _ in range(samples):
        local = array_utils.random_density(rank, rng)
        rho = support_iso @ local @ array_utils.dag(support_iso)
        expected = qmaps.apply(structure.average, rho)
        worst = max(worst, array_utils.max_abs(factorized(rho) - expected))
    return worst


################################################################################
# Fixed points of operations
################################################################################


def operation_fixed_point_exists(op, tol=DEFAULT_TOL):
    """Searches for a nonzero A >= 0 with Phi(A) = A.

    A fixed point can only live where the compatible effect has eigenvalue 1.
    Starting from that eigenspace, directions that the Kraus operators move
    out of the current subspace are removed until the subspace is invariant;
    the restricted operation is then trace preserving and has a fixed state.

    Returns:
        (bool, projection or None): whether a fixed point exists and the
        invariant subspace carrying it.
    """
    _require_square(op)
    dim = op.dim_in
    effect = qmaps.effect_operator(op)
    values, vectors = opalg.eigh_hermitian(effect, tol)
    if values[-1] < 1 - tol.eff_tol:
        return False, None
    basis = vectors[:, values >= 1 - tol.eff_tol]
    while basis.shape[1] > 0:
        q = basis @ array_utils.dag(basis)
        leak = np.concatenate(
            [(np.eye(dim) - q) @ k @ basis for k in op.kraus], axis=0
        )
        keep = linalg.null_space(leak, rcond=tol.span_tol)
        if keep.shape[1] == basis.shape[1]:
            return True, q
        basis = basis @ keep
        basis, _ = linalg.qr(basis, mode="economic")
    return False, None
