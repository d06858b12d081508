"""Observables, instruments and the non-disturbance properties."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from qthermo.common import array_utils, opalg
from qthermo.common.errors import (
    DimMismatch,
    NotNormalized,
    NotSubunital,
    UnknownOutcome,
)
from qthermo.common.opalg import DEFAULT_TOL
from qthermo.maps import fixedpoints, qmaps
from qthermo.measure.hierarchy import Membership, classify_effect

logger = logging.getLogger(__name__)

NOT_NORM_ONE = "NotNormOne"


def _labels(labels, count):
    labels = tuple(str(label) for label in labels)
    if len(labels) != count:
        raise ValueError("{} labels for {} entries".format(len(labels), count))
    if len(set(labels)) != len(labels):
        raise ValueError("outcome labels must be unique: {}".format(labels))
    if not labels:
        raise ValueError("at least one outcome is required")
    return labels


@dataclass(frozen=True, eq=False)
class Observable:
    """Outcome-labelled effects summing to the identity."""

    labels: Tuple[str, ...]
    effects: Tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = _labels(self.labels, len(self.effects))
        effects = tuple(
            opalg.validate_effect(e, DEFAULT_TOL, name="effect {}".format(label))
            for label, e in zip(labels, self.effects)
        )
        dim = effects[0].shape[0]
        for label, e in zip(labels, effects):
            if e.shape != (dim, dim):
                raise DimMismatch("effect {} has shape {}".format(label, e.shape))
            if array_utils.op_norm(e) <= DEFAULT_TOL.eff_tol:
                raise ValueError("effect {} vanishes".format(label))
        deviation = array_utils.max_abs(sum(effects) - np.eye(dim))
        if deviation > DEFAULT_TOL.eff_tol:
            raise NotNormalized(
                "effects sum to the identity only within {:.3e}".format(deviation),
                deviation=deviation,
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "effects", effects)

    @property
    def dim(self):
        return self.effects[0].shape[0]

    def effect(self, label):
        try:
            return self.effects[self.labels.index(str(label))]
        except ValueError:
            raise UnknownOutcome("unknown outcome {!r}".format(label), outcome=str(label))

    def items(self):
        return zip(self.labels, self.effects)


@dataclass(frozen=True, eq=False)
class Instrument:
    """Outcome-labelled operations summing to a channel."""

    labels: Tuple[str, ...]
    operations: Tuple[qmaps.CPMap, ...]

    def __post_init__(self):
        labels = _labels(self.labels, len(self.operations))
        ops = tuple(self.operations)
        dim = ops[0].dim_in
        for label, op in zip(labels, ops):
            if op.dim_in != dim or op.dim_out != dim:
                raise DimMismatch(
                    "operation {} acts from dim {} to dim {}, expected {}".format(
                        label, op.dim_in, op.dim_out, dim
                    )
                )
            if array_utils.op_norm(qmaps.effect_operator(op)) <= DEFAULT_TOL.eff_tol:
                raise ValueError("operation {} has a vanishing effect".format(label))
        total = sum(qmaps.effect_operator(op) for op in ops)
        deviation = array_utils.max_abs(total - np.eye(dim))
        if deviation > DEFAULT_TOL.trace_tol:
            raise NotNormalized(
                "operations do not sum to a channel (deviation {:.3e})".format(deviation),
                deviation=deviation,
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "operations", ops)

    @property
    def dim(self):
        return self.operations[0].dim_in

    def operation(self, label):
        try:
            return self.operations[self.labels.index(str(label))]
        except ValueError:
            raise UnknownOutcome("unknown outcome {!r}".format(label), outcome=str(label))

    def items(self):
        return zip(self.labels, self.operations)

    @property
    def channel(self):
        """The channel sum_x I_x."""
        return qmaps.sum_maps(self.operations)


@dataclass(frozen=True)
class ObservableClass:
    commutative: bool
    sharp: bool
    norm_one: bool
    indefinite: bool
    trivial: bool


@dataclass(frozen=True)
class PropertyCheck:
    holds: bool
    residuals: Dict[str, float] = field(default_factory=dict)
    reason: str = ""

    def __bool__(self):
        return self.holds


@dataclass(frozen=True)
class DisturbanceReport:
    repeatable: PropertyCheck
    first_kind: PropertyCheck
    value_reproducible: PropertyCheck
    ideal: PropertyCheck
    nogo_conflicts: Tuple[str, ...] = ()


################################################################################
# Observables
################################################################################


def classify_observable(obs, tol=DEFAULT_TOL):
    effects = obs.effects
    commutator = max(
        (array_utils.op_norm(array_utils.commutator(a, b)) for a in effects for b in effects),
        default=0.0,
    )
    commutative = commutator <= tol.span_tol
    sharp = all(
        array_utils.max_abs(a @ b - (a if i == j else 0)) <= tol.proj_tol
        for i, a in enumerate(effects)
        for j, b in enumerate(effects)
    )
    classes = [classify_effect(e, tol) for e in effects]
    trivial = len(effects) == 1 or all(c.trivial for c in classes)
    return ObservableClass(
        commutative=bool(commutative),
        sharp=bool(sharp),
        norm_one=all(c.norm_one for c in classes),
        indefinite=all(c.indefinite for c in classes),
        trivial=bool(trivial),
    )


def compatible_observable(inst, tol=DEFAULT_TOL):
    """The observable E_x = I_x*(1) measured by an instrument."""
    effects = []
    for label, op in inst.items():
        effect = qmaps.effect_operator(op)
        top = np.max(np.linalg.eigvalsh(array_utils.hermitize(effect, tol.herm_tol)))
        if top > 1 + tol.eff_tol:
            raise NotSubunital(
                "effect of outcome {} has eigenvalue {:.6e}".format(label, top), outcome=label
            )
        effects.append(opalg.validate_effect(effect, tol))
    return Observable(inst.labels, tuple(effects))


def luders_instrument(obs, tol=DEFAULT_TOL):
    return Instrument(obs.labels, tuple(qmaps.luders_map(e, tol) for e in obs.effects))


################################################################################
# Non-disturbance properties
################################################################################


def _eig1_projection(effect, tol):
    values, vectors = opalg.eigh_hermitian(effect, tol)
    cols = vectors[:, values >= 1 - tol.proj_tol]
    return cols @ array_utils.dag(cols), cols


def is_repeatable(inst, tol=DEFAULT_TOL):
    """I_x*(E_y) = delta_xy E_x for every pair of outcomes."""
    obs = compatible_observable(inst, tol)
    if not classify_observable(obs, tol).norm_one:
        return PropertyCheck(False, reason=NOT_NORM_ONE)
    residuals = {}
    for x, op in inst.items():
        worst = 0.0
        for y, e_y in obs.items():
            expected = obs.effect(x) if x == y else np.zeros_like(e_y)
            worst = max(worst, array_utils.op_norm(qmaps.apply_dual(op, e_y) - expected))
        residuals[x] = worst
    return PropertyCheck(all(r <= tol.span_tol for r in residuals.values()), residuals)


def is_first_kind(inst, tol=DEFAULT_TOL):
    """I_X*(E_x) = E_x for every outcome."""
    obs = compatible_observable(inst, tol)
    channel = inst.channel
    residuals = {
        x: array_utils.op_norm(qmaps.apply_dual(channel, e) - e) for x, e in obs.items()
    }
    return PropertyCheck(all(r <= tol.span_tol for r in residuals.values()), residuals)


def is_value_reproducible(inst, tol=DEFAULT_TOL):
    """P_x I_X*(E_x) P_x = P_x on the eigenvalue-1 space P_x of each effect."""
    obs = compatible_observable(inst, tol)
    if not classify_observable(obs, tol).norm_one:
        return PropertyCheck(False, reason=NOT_NORM_ONE)
    channel = inst.channel
    residuals = {}
    for x, e in obs.items():
        p, _ = _eig1_projection(e, tol)
        if opalg.projection_rank(p) == 0:
            logger.warning("outcome %s is norm-1 but has no eigenvalue-1 space", x)
            residuals[x] = float("inf")
            continue
        residuals[x] = array_utils.op_norm(p @ qmaps.apply_dual(channel, e) @ p - p)
    return PropertyCheck(all(r <= tol.span_tol for r in residuals.values()), residuals)


def is_ideal(inst, tol=DEFAULT_TOL):
    """I_x acts as the identity on operators supported in P_x."""
    obs = compatible_observable(inst, tol)
    if not classify_observable(obs, tol).norm_one:
        return PropertyCheck(False, reason=NOT_NORM_ONE)
    residuals = {}
    for x, op in inst.items():
        _, cols = _eig1_projection(obs.effect(x), tol)
        worst = 0.0 if cols.shape[1] else float("inf")
        for i in range(cols.shape[1]):
            for j in range(cols.shape[1]):
                unit = np.outer(cols[:, i], cols[:, j].conj())
                worst = max(worst, array_utils.op_norm(qmaps.apply(op, unit) - unit))
        residuals[x] = worst
    return PropertyCheck(all(r <= tol.span_tol for r in residuals.values()), residuals)


def disturbance_report(inst, tol=DEFAULT_TOL):
    return DisturbanceReport(
        repeatable=is_repeatable(inst, tol),
        first_kind=is_first_kind(inst, tol),
        value_reproducible=is_value_reproducible(inst, tol),
        ideal=is_ideal(inst, tol),
    )


def first_kind_by_states(inst, states, tol=DEFAULT_TOL):
    """tr[E_x I_X(rho)] = tr[E_x rho] over the given states."""
    obs = compatible_observable(inst, tol)
    channel = inst.channel
    residuals = {x: 0.0 for x in obs.labels}
    for rho in states:
        image = qmaps.apply(channel, rho)
        for x, e in obs.items():
            drift = abs(np.trace(e @ image) - np.trace(e @ rho))
            residuals[x] = max(residuals[x], float(drift))
    return PropertyCheck(all(r <= tol.span_tol for r in residuals.values()), residuals)


def informationally_complete_states(dim):
    """|i><i|, (|i>+|j>)/sqrt2 and (|i>+i|j>)/sqrt2 projectors."""
    states = [array_utils.proj(array_utils.ket(i, dim)) for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            e_i, e_j = array_utils.ket(i, dim), array_utils.ket(j, dim)
            states.append(array_utils.proj((e_i + e_j) / np.sqrt(2)))
            states.append(array_utils.proj((e_i + 1j * e_j) / np.sqrt(2)))
    return states


################################################################################
# No-go audit
################################################################################


def _instrument_tier(verdicts, tier):
    return bool(verdicts) and all(
        getattr(v, "class_" + tier) is Membership.IN_CLASS for v in verdicts
    )


def nogo_audit(inst, verdicts, report, tol=DEFAULT_TOL):
    """Names every no-go implication the verdicts and the report violate.

    The instrument counts as a member of a tier when every per-operation
    verdict is InClass at that tier.

    Returns:
        list of clause identifiers, empty when everything is consistent.
    """
    obs = compatible_observable(inst, tol)
    obs_class = classify_observable(obs, tol)
    in_i = _instrument_tier(verdicts, "I")
    in_ii = _instrument_tier(verdicts, "II")
    in_iii = _instrument_tier(verdicts, "III")
    conflicts = []
    if in_i and report.repeatable.holds:
        conflicts.append("class-I-repeatable")
    if in_i and obs_class.sharp and (
        report.first_kind.holds or report.value_reproducible.holds or report.ideal.holds
    ):
        conflicts.append("class-I-sharp-disturbance")
    if in_ii and report.ideal.holds:
        conflicts.append("class-II-ideal")
    if in_ii and report.value_reproducible.holds:
        conflicts.append("class-II-value-reproducible")
    if in_ii and report.first_kind.holds and not obs_class.indefinite:
        conflicts.append("class-II-first-kind-indefinite")
    if in_iii and report.first_kind.holds and not (
        obs_class.indefinite and obs_class.commutative
    ):
        conflicts.append("class-III-first-kind-commutative")
    if in_ii and any(opalg.rank_tol(e, tol) == 1 for e in obs.effects):
        dual_fixed = fixedpoints.fixed_point_basis(qmaps.dual(inst.channel), tol)
        if dual_fixed.size > 1:
            conflicts.append("class-II-rank-one-disturbs-all")
    if conflicts:
        logger.warning("no-go audit conflicts: %s", ", ".join(conflicts))
    return conflicts
