"""Three-tier classification of channels, operations and instruments.

Tier I (weak third law) is decided exactly by strict positivity. Tier II
(strong third law) uses the rank non-decreasing decision and the fixed-point
conditions on operations. Tier III (full consistency) is only granted with
a replayable certificate: a bistochastic channel, a strictly positive Choi
matrix or a validated witness process.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from qthermo.common import array_utils, opalg
from qthermo.common.errors import NotTracePreserving, PreconditionUnmet, QThermoError
from qthermo.common.opalg import DEFAULT_TOL, AnalysisConfig
from qthermo.maps import fixedpoints, qmaps, scaling

logger = logging.getLogger(__name__)

TIERS = ("I", "II", "III")


class Membership(enum.Enum):
    IN_CLASS = "InClass"
    NOT_IN_CLASS = "NotInClass"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class EffectClass:
    trivial: bool
    norm_one: bool
    indefinite: bool
    projection: bool
    strictly_positive: bool
    eig1_projection: Optional[np.ndarray] = None
    norm: float = 0.0


@dataclass(frozen=True, eq=False)
class HierarchyVerdict:
    class_I: Membership
    class_II: Membership
    class_III: Membership
    certificates: Dict[str, dict] = field(default_factory=dict)
    per_operation: Tuple["HierarchyVerdict", ...] = ()

    def tier(self, name):
        return getattr(self, "class_" + name)

    def as_tuple(self):
        return (self.class_I, self.class_II, self.class_III)


def classify_effect(effect, tol=DEFAULT_TOL):
    e = opalg.validate_effect(effect, tol)
    dim = e.shape[0]
    values, vectors = opalg.eigh_hermitian(e, tol)
    norm = float(values[-1])
    norm_one = abs(norm - 1) <= tol.eff_tol
    eig1 = None
    if norm_one:
        cols = vectors[:, values >= 1 - tol.eff_tol]
        eig1 = cols @ array_utils.dag(cols)
    trivial = array_utils.max_abs(e - np.trace(e).real / dim * np.eye(dim)) <= tol.eff_tol
    return EffectClass(
        trivial=bool(trivial),
        norm_one=bool(norm_one),
        indefinite=bool(values[0] > tol.eff_tol and norm < 1 - tol.eff_tol),
        projection=bool(opalg.is_projection(e, tol)),
        strictly_positive=bool(opalg.is_strictly_positive_op(e, tol)),
        eig1_projection=eig1,
        norm=norm,
    )


def operation_fixed_point_exists(op, tol=DEFAULT_TOL):
    """(True, projection) when a nonzero positive fixed point exists."""
    return fixedpoints.operation_fixed_point_exists(op, tol)


################################################################################
# Verdict assembly
################################################################################


def _settle(memberships, certificates, per_operation=()):
    """Makes the tiers agree with III in II in I."""
    m = dict(memberships)
    IN, NOT, UNKNOWN = Membership.IN_CLASS, Membership.NOT_IN_CLASS, Membership.UNKNOWN
    if m["III"] is IN and NOT in (m["II"], m["I"]):
        logger.warning("class III witness contradicts a lower tier, downgraded to Unknown")
        certificates.setdefault("III", {})["conflict"] = "lower tier is NotInClass"
        m["III"] = UNKNOWN
    if m["II"] is IN and m["I"] is NOT:
        logger.warning("class II verdict contradicts class I, downgraded to Unknown")
        certificates.setdefault("II", {})["conflict"] = "class I is NotInClass"
        m["II"] = UNKNOWN
    if m["I"] is NOT:
        m["II"] = NOT
    if m["II"] is NOT:
        m["III"] = NOT
    if m["III"] is IN:
        m["II"] = IN
    if m["II"] is IN:
        m["I"] = IN
    return HierarchyVerdict(
        class_I=m["I"],
        class_II=m["II"],
        class_III=m["III"],
        certificates=certificates,
        per_operation=tuple(per_operation),
    )


def _decision_membership(decision):
    return {
        scaling.Decision.YES: Membership.IN_CLASS,
        scaling.Decision.NO: Membership.NOT_IN_CLASS,
        scaling.Decision.INCONCLUSIVE: Membership.UNKNOWN,
    }[decision.verdict]


def _witness_certificate(target, witness, cfg, outcome=None):
    from qthermo.measure import processes

    if processes.witness_reproduces(witness, target, cfg, outcome=outcome):
        return {"kind": "process", "process": witness, "outcome": outcome}
    logger.warning("supplied witness process does not reproduce the map at tier III")
    return None


def _trivial_process(ch):
    from qthermo.measure import processes

    return processes.trivial_process(ch)


################################################################################
# Channels and operations
################################################################################


def channel_hierarchy(ch, cfg=None, witness=None):
    """Tier verdicts of a channel with their certificates.

    Args:
        ch: trace-preserving square CPMap.
        cfg: AnalysisConfig.
        witness: optional MeasurementProcess claimed to implement ch at
            tier III.

    Returns:
        HierarchyVerdict.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    tol = cfg.tol
    mc = qmaps.classify_map(ch, tol)
    if not mc.trace_preserving:
        raise NotTracePreserving("channel_hierarchy needs a trace-preserving map")
    certificates = {"I": {"kind": "classification", "classification": mc}}
    tiers = {"I": Membership.IN_CLASS if mc.strictly_positive else Membership.NOT_IN_CLASS}

    if tiers["I"] is Membership.NOT_IN_CLASS:
        tiers["II"] = Membership.NOT_IN_CLASS
        certificates["II"] = {"kind": "implied", "reason": "not strictly positive"}
    else:
        decision = scaling.decide_rank_nondecreasing(ch, cfg)
        tiers["II"] = _decision_membership(decision)
        certificates["II"] = {"kind": "rank_decision", "decision": decision}

    tiers["III"], certificates["III"] = _channel_tier_three(ch, mc, tiers["II"], cfg, witness)
    return _settle(tiers, certificates)


def _channel_tier_three(ch, mc, tier_two, cfg, witness):
    tol = cfg.tol
    if tier_two is Membership.NOT_IN_CLASS:
        return Membership.NOT_IN_CLASS, {"kind": "implied", "reason": "class II is NotInClass"}
    if mc.bistochastic:
        return Membership.IN_CLASS, {"kind": "bistochastic", "process": _trivial_process(ch)}
    margin = qmaps.choi_positivity_margin(ch, tol)
    if margin > 0:
        return Membership.IN_CLASS, {"kind": "choi_positive", "margin": margin}
    if witness is not None:
        cert = _witness_certificate(ch, witness, cfg)
        if cert is not None:
            return Membership.IN_CLASS, cert
    try:
        diagnosis = fixedpoints.fixed_state_diagnosis(ch, tol=tol)
    except QThermoError as err:
        logger.warning("fixed-state diagnosis failed: %s", err)
        return Membership.UNKNOWN, {"kind": "diagnosis_failed", "reason": str(err)}
    if diagnosis.state is None and not diagnosis.full_min_support:
        return Membership.NOT_IN_CLASS, {
            "kind": "no_strictly_positive_fixed_state",
            "diagnosis": diagnosis,
        }
    return Membership.UNKNOWN, {"kind": "necessary_conditions_hold", "diagnosis": diagnosis}


def _measure_and_prepare(op, tol):
    """(E, xi) when op(rho) = tr[E rho] xi, else None."""
    dim = op.dim_in
    j = qmaps.choi(op)
    effect_t = array_utils.partial_trace(j, [dim, dim], keep=[1])
    weight = float(np.trace(effect_t).real)
    if weight <= tol.eff_tol:
        return None
    xi = array_utils.partial_trace(j, [dim, dim], keep=[0]) / weight
    residual = array_utils.max_abs(j - np.kron(xi, effect_t))
    if residual > tol.span_tol * max(1.0, array_utils.max_abs(j)):
        return None
    return effect_t.T, xi


def operation_hierarchy(op, cfg=None, witness=None, outcome=None):
    """Tier verdicts of an operation with their certificates.

    Args:
        op: square CPMap with subunital dual.
        cfg: AnalysisConfig.
        witness: optional MeasurementProcess claimed to implement op.
        outcome: pointer label of the witness implementing op.

    Returns:
        HierarchyVerdict.
    """
    from qthermo.measure import processes

    cfg = AnalysisConfig() if cfg is None else cfg
    tol = cfg.tol
    mc = qmaps.classify_map(op, tol)
    ec = classify_effect(mc.compatible_effect, tol)
    certificates = {"I": {"kind": "classification", "classification": mc, "effect": ec}}
    tiers = {"I": Membership.IN_CLASS if mc.strictly_positive else Membership.NOT_IN_CLASS}

    # tier II
    if tiers["I"] is Membership.NOT_IN_CLASS:
        tiers["II"] = Membership.NOT_IN_CLASS
        certificates["II"] = {"kind": "implied", "reason": "not strictly positive"}
    else:
        exists, invariant = operation_fixed_point_exists(op, tol)
        if exists and not mc.trace_preserving:
            tiers["II"] = Membership.NOT_IN_CLASS
            certificates["II"] = {"kind": "fixed_point", "projection": invariant}
        else:
            decision = scaling.decide_rank_nondecreasing(op, cfg)
            certificates["II"] = {"kind": "rank_decision", "decision": decision}
            if mc.trace_preserving:
                tiers["II"] = _decision_membership(decision)
            elif decision.verdict is scaling.Decision.YES and ec.indefinite:
                tiers["II"] = Membership.IN_CLASS
            else:
                tiers["II"] = Membership.UNKNOWN

    # tier III
    if tiers["II"] is Membership.NOT_IN_CLASS:
        tiers["III"] = Membership.NOT_IN_CLASS
        certificates["III"] = {"kind": "implied", "reason": "class II is NotInClass"}
    elif mc.purity_preserving and not ec.trivial:
        tiers["III"] = Membership.NOT_IN_CLASS
        certificates["III"] = {"kind": "purity_preserving", "reason": "non-trivial effect"}
    else:
        tiers["III"], certificates["III"] = Membership.UNKNOWN, {"kind": "no_witness"}
        cert = _witness_certificate(op, witness, cfg, outcome) if witness is not None else None
        if cert is None and mc.bistochastic:
            cert = {"kind": "bistochastic", "process": _trivial_process(op)}
        if cert is None and qmaps.choi_positivity_margin(op, tol) > 0:
            cert = {"kind": "choi_positive", "margin": qmaps.choi_positivity_margin(op, tol)}
        if cert is None:
            form = _measure_and_prepare(op, tol)
            if form is not None and opalg.is_strictly_positive_op(form[1], tol):
                process = processes.swap_process(form[0], form[1], tol)
                cert = _witness_certificate(op, process, cfg, outcome="1")
        if cert is not None:
            tiers["III"], certificates["III"] = Membership.IN_CLASS, cert

    verdict = _settle(tiers, certificates)
    if verdict.class_II is Membership.IN_CLASS and ec.norm_one and not ec.trivial:
        holds = lemma1_rank_increase_check(op, tol)
        verdict.certificates["II"]["rank_increase_on_eig1"] = holds
        if not holds:
            logger.warning("class II operation fails the rank increase check on its eig1 states")
    return verdict


def lemma1_rank_increase_check(op, tol=DEFAULT_TOL):
    """Rank strictly increases on states supported where E has eigenvalue 1.

    The states are |v_i><v_i|, the superpositions (v_i + v_j) and
    (v_i + i v_j) of eigenvectors, and the normalized eigenprojection.

    Raises:
        PreconditionUnmet: if E is not norm-1 or is trivial.
    """
    ec = classify_effect(qmaps.effect_operator(op), tol)
    if not ec.norm_one or ec.trivial:
        raise PreconditionUnmet(
            "rank increase check needs a non-trivial norm-1 effect", certificate=ec
        )
    basis = opalg.projection_basis(ec.eig1_projection, tol)
    size = basis.shape[1]
    states = [array_utils.proj(basis[:, i]) for i in range(size)]
    for i in range(size):
        for j in range(i + 1, size):
            states.append(array_utils.proj((basis[:, i] + basis[:, j]) / np.sqrt(2)))
            states.append(array_utils.proj((basis[:, i] + 1j * basis[:, j]) / np.sqrt(2)))
    states.append(ec.eig1_projection / size)
    for rho in states:
        if opalg.rank_tol(qmaps.apply(op, rho), tol) <= opalg.rank_tol(rho, tol):
            return False
    return True


################################################################################
# Instruments and certificate replay
################################################################################


def _rank_nondecreasing_indefinite(verdict, op, tol):
    cert = verdict.certificates.get("II", {})
    decision = cert.get("decision")
    if decision is None or decision.verdict is not scaling.Decision.YES:
        return False
    ec = classify_effect(qmaps.effect_operator(op), tol)
    return ec.indefinite or (ec.trivial and ec.norm_one)


def instrument_hierarchy(inst, cfg=None, witness=None):
    """Tier verdicts of an instrument from its operations.

    I holds exactly when every operation is strictly positive. II holds when
    every operation is rank non-decreasing with an indefinite effect. III
    needs a witness process reproducing the whole instrument.
    """
    cfg = AnalysisConfig() if cfg is None else cfg
    tol = cfg.tol
    per_op = [operation_hierarchy(op, cfg) for op in inst.operations]

    def combine(tier):
        values = [v.tier(tier) for v in per_op]
        if any(v is Membership.NOT_IN_CLASS for v in values):
            return Membership.NOT_IN_CLASS
        return Membership.UNKNOWN

    certificates = {}
    tiers = {}
    tiers["I"] = (
        Membership.IN_CLASS
        if all(v.class_I is Membership.IN_CLASS for v in per_op)
        else Membership.NOT_IN_CLASS
    )
    certificates["I"] = {"kind": "per_operation"}
    if all(_rank_nondecreasing_indefinite(v, op, tol) for v, op in zip(per_op, inst.operations)):
        tiers["II"] = Membership.IN_CLASS
        certificates["II"] = {"kind": "rank_nondecreasing_indefinite"}
    else:
        tiers["II"] = combine("II")
        certificates["II"] = {"kind": "per_operation"}
    tiers["III"] = combine("III")
    certificates["III"] = {"kind": "per_operation"}
    if witness is not None and tiers["III"] is not Membership.NOT_IN_CLASS:
        from qthermo.measure import processes

        if processes.witness_reproduces(witness, inst, cfg):
            tiers["III"] = Membership.IN_CLASS
            certificates["III"] = {"kind": "process", "process": witness, "outcome": None}
    return _settle(tiers, certificates, per_op)


def revalidate_witness(target, verdict, cfg=None):
    """Replays the class III certificate of a verdict; False without one."""
    cfg = AnalysisConfig() if cfg is None else cfg
    if verdict.class_III is not Membership.IN_CLASS:
        return False
    cert = verdict.certificates.get("III", {})
    kind = cert.get("kind")
    if kind == "choi_positive":
        return qmaps.choi_positivity_margin(target, cfg.tol) > 0
    if kind == "bistochastic":
        from qthermo.measure import processes

        if not qmaps.classify_map(target, cfg.tol).bistochastic:
            return False
        return processes.witness_reproduces(cert["process"], target, cfg)
    if kind == "process":
        from qthermo.measure import processes

        return processes.witness_reproduces(
            cert["process"], target, cfg, outcome=cert.get("outcome")
        )
    return False
