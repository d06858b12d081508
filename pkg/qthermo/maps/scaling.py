"""Operator scaling and the rank non-decreasing decision.

A square CP map is rank non-decreasing exactly when it can be scaled, by
invertible C1, C2 acting as K -> C1 K C2, arbitrarily close to a
bistochastic channel. The decision first searches for a rank-dropping input
(on the map and on its dual) and only then runs the alternating scaling.
"""

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from qthermo.common import array_utils, opalg
from qthermo.common.errors import DimMismatch, SingularNormalizer
from qthermo.common.opalg import DEFAULT_TOL, AnalysisConfig
from qthermo.maps import qmaps

logger = logging.getLogger(__name__)

NORMALIZER_FLOOR = 1e-14


class Decision(enum.Enum):
    YES = "Yes"
    NO = "No"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True, eq=False)
class ScalingReport:
    """Outcome of sinkhorn_scale.

    converged holds exactly when ds_value <= eps**2 for the eps the run was
    given. decide_rank_nondecreasing runs with eps = sqrt(Tolerances.ds_eps),
    so a Yes witness has ds_value <= ds_eps.
    """

    c1: np.ndarray
    c2: np.ndarray
    ds_value: float
    iterations: int
    converged: bool
    eps: float
    ds_history: Tuple[float, ...] = ()
    singular: bool = False
    message: str = ""


@dataclass(frozen=True, eq=False)
class Counterexample:
    """Input whose image has lower rank, under the map or under its dual."""

    state: np.ndarray
    rank_in: int
    rank_out: int
    source: str = "map"


@dataclass(frozen=True, eq=False)
class RankDecision:
    verdict: Decision
    witness: Optional[ScalingReport] = None
    counterexample: Optional[Counterexample] = None
    notes: dict = field(default_factory=dict)


def _check_square(cp_map):
    if not cp_map.is_square:
        raise DimMismatch(
            "map from dim {} to dim {} is not square".format(cp_map.dim_in, cp_map.dim_out)
        )


def _scaled_stack(stacked, c1, c2):
    return np.einsum("ij,ajk,kl->ail", c1, stacked, c2)


def _marginals(stacked):
    """Phi(1) and Phi*(1) of a stacked Kraus array."""
    image = np.einsum("aij,akj->ik", stacked, stacked.conj())
    effect = np.einsum("aji,ajk->ik", stacked.conj(), stacked)
    return image, effect


def _ds_from_stack(stacked):
    image, effect = _marginals(stacked)
    eye = np.eye(image.shape[0])
    return float(
        np.linalg.norm(image - eye) ** 2 + np.linalg.norm(effect - eye) ** 2
    )


def ds_value(cp_map, c1, c2):
    """Squared distance of the scaled map's marginals from the identity.

    Args:
        cp_map: square CPMap.
        c1: matrix applied on the output side.
        c2: matrix applied on the input side.

    Returns:
        tr[(Phi_C(1) - 1)^2] + tr[(Phi_C*(1) - 1)^2].
    """
    _check_square(cp_map)
    dim = cp_map.dim_in
    c1 = np.asarray(c1, dtype=complex)
    c2 = np.asarray(c2, dtype=complex)
    if c1.shape != (dim, dim) or c2.shape != (dim, dim):
        raise DimMismatch(
            "scaling matrices of shapes {} and {} for dim {}".format(c1.shape, c2.shape, dim)
        )
    return _ds_from_stack(_scaled_stack(cp_map.stacked, c1, c2))


def _inverse_sqrt(herm):
    values, vectors = linalg.eigh((herm + array_utils.dag(herm)) / 2)
    if values[0] < NORMALIZER_FLOOR:
        raise SingularNormalizer(
            "normalizer eigenvalue {:.3e} below floor".format(values[0]),
            min_eigenvalue=float(values[0]),
        )
    return (vectors / np.sqrt(values)) @ array_utils.dag(vectors)


def sinkhorn_scale(cp_map, eps, max_iter=10000):
    """Alternating normalization of Phi(1) and Phi*(1).

    One round replaces C1 by Phi_C(1)^(-1/2) C1 and then C2 by
    C2 Phi_C*(1)^(-1/2). The run stops once the DS value is at most eps**2.

    Args:
        cp_map: square CPMap.
        eps: float, convergence happens when ds_value <= eps**2.
        max_iter: int, maximum number of full rounds.

    Returns:
        ScalingReport. A singular normalizer ends the run unconverged.
    """
    _check_square(cp_map)
    dim = cp_map.dim_in
    stacked = cp_map.stacked
    c1 = np.eye(dim, dtype=complex)
    c2 = np.eye(dim, dtype=complex)
    threshold = eps ** 2
    ds = _ds_from_stack(stacked)
    history = [ds]
    if ds <= threshold:
        return ScalingReport(c1, c2, ds, 0, True, eps, tuple(history))

    image, effect = _marginals(stacked)
    lowest = [linalg.eigvalsh(op)[0] for op in (image, effect)]
    if max(lowest) < NORMALIZER_FLOOR:
        logger.info("neither Phi(1) nor Phi*(1) is invertible, scaling not attempted")
        return ScalingReport(
            c1, c2, ds, 0, False, eps, tuple(history), singular=True,
            message="Phi(1) and Phi*(1) both singular",
        )

    iterations = 0
    singular = False
    message = ""
    for iterations in range(1, max_iter + 1):
        try:
            image, _ = _marginals(_scaled_stack(stacked, c1, c2))
            next_c1 = _inverse_sqrt(image) @ c1
            _, effect = _marginals(_scaled_stack(stacked, next_c1, c2))
            next_c2 = c2 @ _inverse_sqrt(effect)
        except (SingularNormalizer, ValueError, linalg.LinAlgError) as err:
            singular = True
            message = str(err)
            logger.info("scaling stopped at round %d: %s", iterations, err)
            break
        if not (np.all(np.isfinite(next_c1)) and np.all(np.isfinite(next_c2))):
            singular = True
            message = "scaling matrices diverged"
            break
        c1, c2 = next_c1, next_c2
        new_ds = _ds_from_stack(_scaled_stack(stacked, c1, c2))
        if new_ds > ds * (1 + 1e-6) + 1e-15:
            logger.debug("DS increased at round %d: %.3e -> %.3e", iterations, ds, new_ds)
        ds = new_ds
        history.append(ds)
        if ds <= threshold:
            logger.debug("scaling converged after %d rounds, DS %.3e", iterations, ds)
            return ScalingReport(c1, c2, ds, iterations, True, eps, tuple(history))

    logger.warning(
        "scaling did not converge: DS %.3e after %d rounds (eps^2 = %.1e)",
        ds, iterations, threshold,
    )
    return ScalingReport(
        c1, c2, ds, iterations, False, eps, tuple(history), singular=singular, message=message
    )


################################################################################
# Counterexample search
################################################################################


def _structured_bases(cp_map, max_kraus_bases, tol):
    dim = cp_map.dim_in
    bases = [np.eye(dim, dtype=complex)]
    eye = np.eye(dim, dtype=complex)
    for op in (qmaps.apply_dual(cp_map, eye), qmaps.apply(cp_map, eye)):
        _, vectors = opalg.eigh_hermitian(op, tol)
        bases.append(vectors)
    for k in cp_map.kraus[:max_kraus_bases]:
        _, vectors = linalg.eigh(array_utils.dag(k) @ k)
        bases.append(vectors)
    return bases


def _drop(cp_map, rho, tol, source):
    rank_in = opalg.rank_tol(rho, tol)
    rank_out = opalg.rank_tol(qmaps.apply(cp_map, rho), tol)
    if rank_out < rank_in:
        return Counterexample(state=rho, rank_in=rank_in, rank_out=rank_out, source=source)
    return None


def rank_drop_search(
    cp_map,
    samples_per_rank=20,
    seed=0,
    max_structured_subsets=64,
    max_kraus_bases=4,
    tol=DEFAULT_TOL,
    source="map",
):
    """Looks for a state whose image has lower rank.

    For every rank r from 1 to dim the candidates are, in order, maximally
    mixed states on r-element subsets of structured bases (computational,
    eigenbases of Phi*(1), Phi(1) and of K^dagger K for the first Kraus
    operators) and then Haar random rank-r states.

    Returns:
        Counterexample or None.
    """
    _check_square(cp_map)
    dim = cp_map.dim_in
    rng = array_utils.get_rng(seed)
    bases = _structured_bases(cp_map, max_kraus_bases, tol)
    for rank in range(1, dim + 1):
        for basis in bases:
            subsets = itertools.islice(
                itertools.combinations(range(dim), rank), max_structured_subsets
            )
            for subset in subsets:
                cols = basis[:, list(subset)]
                rho = cols @ array_utils.dag(cols) / rank
                found = _drop(cp_map, rho, tol, source)
                if found is not None:
                    logger.debug("structured counterexample at rank %d (%s)", rank, source)
                    return found
        for _ in range(samples_per_rank):
            rho = array_utils.random_state(dim, rank, rng)
            found = _drop(cp_map, rho, tol, source)
            if found is not None:
                logger.debug("random counterexample at rank %d (%s)", rank, source)
                return found
    return None


def verify_counterexample(cp_map, counterexample, tol=DEFAULT_TOL):
    target = qmaps.dual(cp_map) if counterexample.source == "dual" else cp_map
    rank_in = opalg.rank_tol(counterexample.state, tol)
    rank_out = opalg.rank_tol(qmaps.apply(target, counterexample.state), tol)
    return rank_out < rank_in


################################################################################
# Decision
################################################################################


def decide_rank_nondecreasing(cp_map, cfg=None):
    """Three-way decision of the rank non-decreasing property.

    A counterexample on the map or on its dual gives No. Otherwise scaling
    is run with eps = sqrt(ds_eps), so convergence means DS <= ds_eps; it
    gives Yes, and non-convergence gives Inconclusive.

    Args:
        cp_map: square CPMap.
        cfg: AnalysisConfig, defaults used when None.

    Returns:
        RankDecision.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    _check_square(cp_map)
    search_args = dict(
        samples_per_rank=cfg.samples_per_rank,
        seed=cfg.seed,
        max_structured_subsets=cfg.max_structured_subsets,
        max_kraus_bases=cfg.max_kraus_bases,
        tol=cfg.tol,
    )
    found = rank_drop_search(cp_map, source="map", **search_args)
    if found is None:
        found = rank_drop_search(qmaps.dual(cp_map), source="dual", **search_args)
    if found is not None:
        logger.info(
            "rank drop %d -> %d found on the %s", found.rank_in, found.rank_out, found.source
        )
        return RankDecision(Decision.NO, counterexample=found)
    report = sinkhorn_scale(cp_map, eps=np.sqrt(cfg.tol.ds_eps), max_iter=cfg.max_iter)
    if report.converged:
        return RankDecision(Decision.YES, witness=report)
    return RankDecision(
        Decision.INCONCLUSIVE,
        witness=report,
        notes={"reason": "no counterexample found and scaling did not converge"},
    )


def check_extension_rank_nondec(cp_map, anc_dim, cfg=None):
    """Decision for the map tensored with the identity on an ancilla."""
    extended = qmaps.tensor(cp_map, qmaps.identity_map(anc_dim))
    return decide_rank_nondecreasing(extended, cfg)


def verify_decision(cp_map, decision, cfg=None):
    """Replays the certificate attached to a decision."""
    cfg = AnalysisConfig() if cfg is None else cfg
    if decision.verdict is Decision.NO:
        return verify_counterexample(cp_map, decision.counterexample, cfg.tol)
    if decision.verdict is Decision.YES:
        report = decision.witness
        recomputed = ds_value(cp_map, report.c1, report.c2)
        return report.converged and recomputed <= cfg.tol.ds_eps * (1 + 1e-6)
    return True
