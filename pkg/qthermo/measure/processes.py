"""Measurement processes and the dilation constructions.

A process is the tuple (apparatus dimension, apparatus state xi, interaction
channel on system (x) apparatus, pointer observable). Tensor factors are
always ordered system first, apparatus second.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from qthermo.common import array_utils, opalg
from qthermo.common.errors import (
    DimMismatch,
    NotStrictlyPositiveOperation,
    NotTracePreserving,
    PreconditionUnmet,
    XiNotStrictlyPositive,
)
from qthermo.common.opalg import DEFAULT_TOL, AnalysisConfig
from qthermo.maps import qmaps, scaling
from qthermo.measure import measurements
from qthermo.measure.hierarchy import classify_effect

logger = logging.getLogger(__name__)

WITNESS_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class MeasurementProcess:
    sys_dim: int
    app_dim: int
    xi: np.ndarray
    interaction: qmaps.CPMap
    pointer: measurements.Observable

    def __post_init__(self):
        total = self.sys_dim * self.app_dim
        if (self.interaction.dim_in, self.interaction.dim_out) != (total, total):
            raise DimMismatch(
                "interaction acts on dims ({}, {}), expected {}".format(
                    self.interaction.dim_in, self.interaction.dim_out, total
                )
            )
        xi = opalg.validate_state(self.xi, DEFAULT_TOL, name="apparatus state")
        if xi.shape != (self.app_dim, self.app_dim):
            raise DimMismatch("apparatus state of shape {}".format(xi.shape))
        if self.pointer.dim != self.app_dim:
            raise DimMismatch("pointer acts on dim {}".format(self.pointer.dim))
        slack = array_utils.max_abs(qmaps.effect_operator(self.interaction) - np.eye(total))
        if slack > DEFAULT_TOL.trace_tol:
            raise NotTracePreserving(
                "interaction is not trace preserving (deviation {:.3e})".format(slack)
            )
        object.__setattr__(self, "xi", xi)

    @property
    def labels(self):
        return self.pointer.labels

    @property
    def dims(self):
        return [self.sys_dim, self.app_dim]


@dataclass(frozen=True, eq=False)
class ProcessClassReport:
    xi_strictly_positive: bool
    interaction_class: Dict[str, object]
    admissible_tiers: Tuple[str, ...]
    certificates: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ConservationAudit:
    conserved: bool
    residual: float
    commutes: bool
    commutator_residuals: Dict[str, float]


################################################################################
# Evaluation
################################################################################


def evaluate_process(p, outcome, rho):
    """tr_A[(1 (x) Z_x) E(rho (x) xi)]."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (p.sys_dim, p.sys_dim):
        raise DimMismatch("system state of shape {} for sys_dim {}".format(rho.shape, p.sys_dim))
    pointer = p.pointer.effect(outcome)
    joint = qmaps.apply(p.interaction, np.kron(rho, p.xi))
    selected = np.kron(np.eye(p.sys_dim), pointer) @ joint
    return array_utils.partial_trace(selected, p.dims, keep=[0])


def _xi_terms(xi, tol):
    values, vectors = opalg.eigh_hermitian(xi, tol)
    keep = values > opalg.rank_threshold(values, tol)
    return [(float(q), vectors[:, j]) for q, j in zip(values[keep], np.flatnonzero(keep))]


def induced_operation(p, outcome, tol=DEFAULT_TOL):
    """Kraus form of the operation selected by one pointer outcome."""
    root = array_utils.psd_sqrt(p.pointer.effect(outcome))
    eye_s = np.eye(p.sys_dim)
    kraus = []
    for q, e_j in _xi_terms(p.xi, tol):
        attach = np.kron(eye_s, e_j.reshape(-1, 1))
        for l in p.interaction.kraus:
            middle = l @ attach * np.sqrt(q)
            for m in range(p.app_dim):
                read = np.kron(eye_s, (root[m]).reshape(1, -1))
                kraus.append(read @ middle)
    op = qmaps.CPMap(p.sys_dim, p.sys_dim, tuple(kraus))
    return qmaps.canonical(op, tol)


def induced_instrument(p, tol=DEFAULT_TOL):
    """Instrument implemented by a process, one operation per pointer outcome."""
    ops = tuple(induced_operation(p, x, tol) for x in p.labels)
    return measurements.Instrument(p.labels, ops)


def induced_channel(p, tol=DEFAULT_TOL):
    return qmaps.canonical(qmaps.sum_maps([induced_operation(p, x, tol) for x in p.labels]), tol)


def conjugate_channel(p, tol=DEFAULT_TOL):
    """System-to-apparatus channel rho -> tr_S[E(rho (x) xi)]."""
    eye_a = np.eye(p.app_dim)
    eye_s = np.eye(p.sys_dim)
    kraus = []
    for q, e_j in _xi_terms(p.xi, tol):
        attach = np.kron(eye_s, e_j.reshape(-1, 1))
        for l in p.interaction.kraus:
            for s in range(p.sys_dim):
                read = np.kron(array_utils.ket(s, p.sys_dim).reshape(1, -1), eye_a)
                kraus.append(np.sqrt(q) * read @ l @ attach)
    return qmaps.canonical(qmaps.CPMap(p.sys_dim, p.app_dim, tuple(kraus)), tol)


def restriction_map(p, tol=DEFAULT_TOL):
    """B -> tr_A[(1 (x) xi) E*(B)], mapping sys (x) app operators to sys.

    Evaluated on A (x) Z_x it returns the dual of the induced operation
    applied to A.
    """
    eye_s = np.eye(p.sys_dim)
    conditional = tuple(
        np.sqrt(q) * np.kron(eye_s, e_j.conj().reshape(1, -1)) for q, e_j in _xi_terms(p.xi, tol)
    )
    gamma = qmaps.CPMap(p.sys_dim * p.app_dim, p.sys_dim, conditional)
    return qmaps.compose(gamma, qmaps.dual(p.interaction))


################################################################################
# Class validation
################################################################################


def validate_process_class(p, cfg=None):
    """Tiers admitted by the preparation and the interaction.

    I needs xi > 0 and a strictly positive interaction, II a rank
    non-decreasing one and III a bistochastic one.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    tol = cfg.tol
    xi_positive = opalg.is_strictly_positive_op(p.xi, tol)
    mc = qmaps.classify_map(p.interaction, tol)
    certificates = {"classification": mc}
    if mc.bistochastic:
        rank_verdict = scaling.Decision.YES
        certificates["rank_decision"] = "implied by bistochastic interaction"
    elif not mc.strictly_positive:
        rank_verdict = scaling.Decision.NO
        certificates["rank_decision"] = "implied by non strictly positive interaction"
    else:
        decision = scaling.decide_rank_nondecreasing(p.interaction, cfg)
        rank_verdict = decision.verdict
        certificates["rank_decision"] = decision
    tiers = []
    if xi_positive and mc.strictly_positive:
        tiers.append("I")
    if xi_positive and rank_verdict is scaling.Decision.YES:
        tiers.append("II")
    if xi_positive and mc.bistochastic:
        tiers.append("III")
    return ProcessClassReport(
        xi_strictly_positive=bool(xi_positive),
        interaction_class={
            "StrictlyPositive": mc.strictly_positive,
            "RankNonDecreasing": rank_verdict.value,
            "Bistochastic": mc.bistochastic,
        },
        admissible_tiers=tuple(tiers),
        certificates=certificates,
    )


def witness_reproduces(process, target, cfg=None, outcome=None, tier="III"):
    """True when the process is admissible at the tier and implements target.

    target is an Instrument (compared outcome by outcome), or a CPMap
    compared with the operation of ``outcome`` or, without an outcome, with
    the induced channel.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    if tier not in validate_process_class(process, cfg).admissible_tiers:
        return False
    tol = cfg.tol
    if isinstance(target, measurements.Instrument):
        if set(target.labels) != set(process.labels):
            return False
        return all(
            qmaps.maps_close(induced_operation(process, x, tol), op, WITNESS_ATOL)
            for x, op in target.items()
        )
    if target.dim_in != process.sys_dim:
        return False
    if outcome is None:
        return qmaps.maps_close(induced_channel(process, tol), target, WITNESS_ATOL)
    return qmaps.maps_close(induced_operation(process, outcome, tol), target, WITNESS_ATOL)


################################################################################
# Constructions
################################################################################


def trivial_process(ch):
    """One-dimensional apparatus with interaction ch and pointer {1}."""
    pointer = measurements.Observable(("1",), (np.eye(1, dtype=complex),))
    return MeasurementProcess(ch.dim_in, 1, np.eye(1, dtype=complex), ch, pointer)


def _weak_dilation(inst):
    n = len(inst.operations)
    kraus = []
    for x, op in enumerate(inst.operations):
        for k in op.kraus:
            for j in range(n):
                unit = np.outer(array_utils.ket(x, n), array_utils.ket(j, n))
                kraus.append(np.kron(k, unit))
    dim = inst.dim * n
    interaction = qmaps.CPMap(dim, dim, tuple(kraus))
    pointer = measurements.Observable(
        inst.labels, tuple(array_utils.proj(array_utils.ket(x, n)) for x in range(n))
    )
    return MeasurementProcess(inst.dim, n, np.eye(n, dtype=complex) / n, interaction, pointer)


def dilate_weak_third(inst, tol=DEFAULT_TOL):
    """Process E(A (x) B) = sum_x I_x(A) (x) tr[B] |x><x| with xi = 1/N.

    Raises:
        NotStrictlyPositiveOperation: naming the first outcome whose
            operation is not strictly positive.
    """
    for label, op in inst.items():
        if not qmaps.classify_map(op, tol).strictly_positive:
            raise NotStrictlyPositiveOperation(
                "operation {} is not strictly positive".format(label), outcome=label
            )
    return _weak_dilation(inst)


def dilate_strong_third(inst, cfg=None):
    """Class-II dilation of an instrument of rank non-decreasing operations.

    Every operation must be certified rank non-decreasing and have an
    indefinite effect; the interaction is then checked to be rank
    non-decreasing at the composite dimension.

    Raises:
        PreconditionUnmet: carrying the failing certificate.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    tol = cfg.tol
    for label, op in inst.items():
        ec = classify_effect(qmaps.effect_operator(op), tol)
        if not ec.indefinite:
            raise PreconditionUnmet(
                "effect of outcome {} is not indefinite".format(label), certificate=ec
            )
        decision = scaling.decide_rank_nondecreasing(op, cfg)
        if decision.verdict is not scaling.Decision.YES:
            raise PreconditionUnmet(
                "operation {} is not certified rank non-decreasing".format(label),
                certificate=decision,
            )
    process = dilate_weak_third(inst, tol)
    report = validate_process_class(process, cfg)
    if "II" not in report.admissible_tiers:
        raise PreconditionUnmet(
            "dilated interaction is not certified rank non-decreasing", certificate=report
        )
    return process


def swap_process(effect, xi, tol=DEFAULT_TOL):
    """Swap interaction reading the pointer {E, 1 - E} off the system copy.

    The operation of outcome "1" is rho -> tr[E rho] xi.

    Raises:
        XiNotStrictlyPositive: if xi is rank deficient.
    """
    xi = opalg.validate_state(xi, tol, name="xi")
    if not opalg.is_strictly_positive_op(xi, tol):
        raise XiNotStrictlyPositive("apparatus state is not strictly positive")
    effect = opalg.validate_effect(effect, tol)
    dim = xi.shape[0]
    if effect.shape != (dim, dim):
        raise DimMismatch("effect of shape {} for apparatus dim {}".format(effect.shape, dim))
    labels, effects = ["1"], [effect]
    complement = np.eye(dim) - effect
    if array_utils.op_norm(complement) > tol.eff_tol:
        labels.append("0")
        effects.append(complement)
    pointer = measurements.Observable(tuple(labels), tuple(effects))
    interaction = qmaps.unitary_map(array_utils.swap_operator(dim, dim))
    return MeasurementProcess(dim, dim, xi, interaction, pointer)


def convex_combine_processes(p1, p2, lam):
    """Process implementing lam * I1 + (1 - lam) * I2 outcome by outcome.

    The apparatus is A1 (x) A2 (x) C^2 with a classical control qubit; the
    interaction applies E1 or E2 depending on the control.
    """
    if p1.sys_dim != p2.sys_dim:
        raise DimMismatch("processes act on different systems")
    if not 0 <= lam <= 1:
        raise ValueError("mixing weight must lie in [0, 1], got {}".format(lam))
    if lam == 1:
        return p1
    if lam == 0:
        return p2
    s, a1, a2 = p1.sys_dim, p1.app_dim, p2.app_dim
    dims = [s, a1, a2, 2]
    branch = [array_utils.proj(array_utils.ket(c, 2)) for c in range(2)]
    kraus = [
        array_utils.embed_operator(np.kron(l, branch[0]), dims, [0, 1, 3])
        for l in p1.interaction.kraus
    ]
    kraus += [
        array_utils.embed_operator(np.kron(m, branch[1]), dims, [0, 2, 3])
        for m in p2.interaction.kraus
    ]
    total = s * a1 * a2 * 2
    interaction = qmaps.CPMap(total, total, tuple(kraus))
    xi = array_utils.kron_all(p1.xi, p2.xi, lam * branch[0] + (1 - lam) * branch[1])
    labels = list(p1.labels) + [x for x in p2.labels if x not in p1.labels]
    effects = []
    for x in labels:
        z1 = p1.pointer.effect(x) if x in p1.labels else np.zeros((a1, a1))
        z2 = p2.pointer.effect(x) if x in p2.labels else np.zeros((a2, a2))
        effects.append(
            array_utils.kron_all(z1, np.eye(a2), branch[0])
            + array_utils.kron_all(np.eye(a1), z2, branch[1])
        )
    pointer = measurements.Observable(tuple(labels), tuple(effects))
    return MeasurementProcess(s, a1 * a2 * 2, xi, interaction, pointer)


def compose_processes(p1, p2):
    """Process implementing I2_y after I1_x with outcome labels "x,y"."""
    if p1.sys_dim != p2.sys_dim:
        raise DimMismatch("processes act on different systems")
    s, a1, a2 = p1.sys_dim, p1.app_dim, p2.app_dim
    dims = [s, a1, a2]
    first = [array_utils.embed_operator(l, dims, [0, 1]) for l in p1.interaction.kraus]
    second = [array_utils.embed_operator(m, dims, [0, 2]) for m in p2.interaction.kraus]
    total = s * a1 * a2
    interaction = qmaps.CPMap(total, total, tuple(m @ l for l in first for m in second))
    labels, effects = [], []
    for x, z1 in p1.pointer.items():
        for y, z2 in p2.pointer.items():
            labels.append("{},{}".format(x, y))
            effects.append(np.kron(z1, z2))
    pointer = measurements.Observable(tuple(labels), tuple(effects))
    return MeasurementProcess(s, a1 * a2, np.kron(p1.xi, p2.xi), interaction, pointer)


def stinespring_process(inst, tol=DEFAULT_TOL):
    """Pure unitary dilation of an instrument.

    The isometry V = sum_k K_k (x) |k> over all Kraus operators is completed
    to a unitary on system (x) C^n; xi = |0><0| and the pointer groups the
    Kraus indices of each outcome.
    """
    entries = [(x, k) for x, op in inst.items() for k in op.kraus]
    n = len(entries)
    s = inst.dim
    iso = sum(np.kron(k, array_utils.ket(i, n).reshape(-1, 1)) for i, (_, k) in enumerate(entries))
    complement = linalg.null_space(array_utils.dag(iso))
    unitary = np.zeros((s * n, s * n), dtype=complex)
    fixed_cols = [col * n for col in range(s)]
    free_cols = [c for c in range(s * n) if c not in fixed_cols]
    unitary[:, fixed_cols] = iso
    unitary[:, free_cols] = complement
    effects = []
    for label in inst.labels:
        z = np.zeros((n, n), dtype=complex)
        for i, (x, _) in enumerate(entries):
            if x == label:
                z[i, i] = 1.0
        effects.append(z)
    pointer = measurements.Observable(inst.labels, tuple(effects))
    xi = array_utils.proj(array_utils.ket(0, n))
    return MeasurementProcess(s, n, xi, qmaps.unitary_map(unitary), pointer)


def operation_process(op, tol=DEFAULT_TOL):
    """Stinespring process for op completed by the Luders operation of 1 - E.

    op is read off outcome "1".
    """
    effect = qmaps.effect_operator(op)
    complement = opalg.validate_effect(np.eye(op.dim_in) - effect, tol)
    labels, ops = ["1"], [op]
    if array_utils.op_norm(complement) > tol.eff_tol:
        labels.append("0")
        ops.append(qmaps.luders_map(complement, tol))
    return stinespring_process(measurements.Instrument(tuple(labels), tuple(ops)), tol)


def interior_approximation(pure_process, eps, omega=None, outcome=None, tol=DEFAULT_TOL):
    """Mixes a strictly positive state into the pure apparatus preparation.

    xi' = (xi + eps * omega) / (1 + eps) makes a unitary process admissible
    at every tier; the induced map moves by at most 2 eps d in Choi trace
    norm.

    Returns:
        (MeasurementProcess, CPMap): the new process and its induced
        operation for ``outcome`` (the induced channel when None).

    Raises:
        PreconditionUnmet: if xi is not pure, the interaction is not
            unitary or omega is not strictly positive.
    """
    if not eps > 0:
        raise ValueError("eps must be positive, got {}".format(eps))
    p = pure_process
    if opalg.rank_tol(p.xi, tol) != 1:
        raise PreconditionUnmet("apparatus state is not pure", certificate={"rank": opalg.rank_tol(p.xi, tol)})
    if not qmaps.is_unitary_map(p.interaction, tol):
        raise PreconditionUnmet("interaction is not unitary")
    omega = np.eye(p.app_dim, dtype=complex) / p.app_dim if omega is None else omega
    omega = opalg.validate_state(omega, tol, name="omega")
    if not opalg.is_strictly_positive_op(omega, tol):
        raise PreconditionUnmet("omega is not strictly positive")
    xi = (p.xi + eps * omega) / (1 + eps)
    mixed = MeasurementProcess(p.sys_dim, p.app_dim, xi, p.interaction, p.pointer)
    if outcome is None:
        before, after = induced_channel(p, tol), induced_channel(mixed, tol)
    else:
        before, after = induced_operation(p, outcome, tol), induced_operation(mixed, outcome, tol)
    distance = qmaps.maps_distance(before, after)
    logger.info(
        "interior approximation eps=%.1e: Choi distance %.3e (bound %.3e)",
        eps, distance, 2 * eps * p.sys_dim,
    )
    return mixed, after


def conserved_quantity_audit(p, h_sys, h_app, tol=DEFAULT_TOL):
    """Residuals of E*(H) = H for H = H_S (x) 1 + 1 (x) H_A and of [E_x, H_S]."""
    h_sys = array_utils.hermitize(h_sys, tol.herm_tol, name="system Hamiltonian")
    h_app = array_utils.hermitize(h_app, tol.herm_tol, name="apparatus Hamiltonian")
    total = np.kron(h_sys, np.eye(p.app_dim)) + np.kron(np.eye(p.sys_dim), h_app)
    residual = array_utils.op_norm(qmaps.apply_dual(p.interaction, total) - total)
    scale = max(1.0, array_utils.op_norm(total))
    commutators = {}
    for x in p.labels:
        effect = qmaps.effect_operator(induced_operation(p, x, tol))
        commutators[x] = array_utils.op_norm(array_utils.commutator(effect, h_sys))
    return ConservationAudit(
        conserved=residual <= tol.span_tol * scale,
        residual=residual,
        commutes=all(r <= tol.span_tol * scale for r in commutators.values()),
        commutator_residuals=commutators,
    )
