import numpy as np
import pytest
from numpy.testing import assert_allclose

from qthermo.common import array_utils
from qthermo.common.errors import NotNormalized, UnknownOutcome
from qthermo.data_io import generators
from qthermo.maps import qmaps
from qthermo.measure import hierarchy, measurements
from qthermo.measure.hierarchy import HierarchyVerdict, Membership

IN = Membership.IN_CLASS
UNKNOWN = Membership.UNKNOWN


def _forced(inst, class_i=IN, class_ii=UNKNOWN, class_iii=UNKNOWN):
    return [HierarchyVerdict(class_i, class_ii, class_iii) for _ in inst.operations]


@pytest.fixture
def sharp_instrument():
    obs = measurements.Observable(("0", "1"), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    return measurements.luders_instrument(obs)


@pytest.fixture
def unsharp_instrument():
    obs = measurements.Observable(("a", "b"), (np.diag([0.75, 0.25]), np.diag([0.25, 0.75])))
    return measurements.luders_instrument(obs)


def test_observable_validation():
    with pytest.raises(NotNormalized):
        measurements.Observable(("0", "1"), (np.diag([1.0, 0.0]), np.diag([0.0, 0.5])))
    with pytest.raises(ValueError):
        measurements.Observable(("0", "0"), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    with pytest.raises(ValueError):
        measurements.Observable(("0", "1"), (np.eye(2), np.zeros((2, 2))))
    obs = measurements.Observable((0, 1), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    assert obs.labels == ("0", "1")
    with pytest.raises(UnknownOutcome):
        obs.effect("2")


def test_instrument_validation():
    op = qmaps.luders_map(np.diag([0.5, 0.5]))
    with pytest.raises(NotNormalized):
        measurements.Instrument(("x",), (op,))
    inst = measurements.Instrument(("x", "y"), (op, op))
    assert inst.dim == 2
    assert qmaps.classify_map(inst.channel).trace_preserving


def test_qutrit_compatible_observable(qutrit_instrument, plus_minus, tol):
    obs = measurements.compatible_observable(qutrit_instrument, tol)
    plus, _ = plus_minus
    expected = array_utils.proj(plus) + 0.5 * array_utils.proj(array_utils.ket(0, 3))
    assert_allclose(obs.effect("+"), expected, atol=1e-12)
    oc = measurements.classify_observable(obs, tol)
    assert oc.commutative and oc.norm_one
    assert not oc.sharp and not oc.indefinite and not oc.trivial


def test_qutrit_disturbance_flags(qutrit_instrument, tol):
    report = measurements.disturbance_report(qutrit_instrument, tol)
    assert not report.repeatable.holds
    assert report.first_kind.holds
    assert report.value_reproducible.holds
    assert report.ideal.holds


def test_first_kind_agrees_with_state_sweep(qutrit_instrument, unsharp_instrument, tol):
    for inst in (qutrit_instrument, unsharp_instrument):
        states = measurements.informationally_complete_states(inst.dim)
        assert len(states) == inst.dim ** 2
        by_states = measurements.first_kind_by_states(inst, states, tol)
        assert by_states.holds == measurements.is_first_kind(inst, tol).holds


def test_sharp_luders_instrument_is_ideal_and_repeatable(sharp_instrument, tol):
    report = measurements.disturbance_report(sharp_instrument, tol)
    assert report.repeatable and report.first_kind and report.value_reproducible and report.ideal


def test_unsharp_luders_instrument(unsharp_instrument, tol):
    report = measurements.disturbance_report(unsharp_instrument, tol)
    assert report.first_kind.holds
    assert not report.repeatable.holds
    assert report.repeatable.reason == measurements.NOT_NORM_ONE
    assert report.ideal.reason == measurements.NOT_NORM_ONE


def test_qutrit_audit_is_consistent(qutrit_instrument, cfg):
    verdict = hierarchy.instrument_hierarchy(qutrit_instrument, cfg)
    report = measurements.disturbance_report(qutrit_instrument, cfg.tol)
    conflicts = measurements.nogo_audit(
        qutrit_instrument, verdict.per_operation, report, cfg.tol
    )
    assert conflicts == []


def test_forcing_class_two_on_qutrit_instrument(qutrit_instrument, tol):
    report = measurements.disturbance_report(qutrit_instrument, tol)
    forced = _forced(qutrit_instrument, IN, IN)
    conflicts = measurements.nogo_audit(qutrit_instrument, forced, report, tol)
    assert conflicts == [
        "class-II-ideal",
        "class-II-value-reproducible",
        "class-II-first-kind-indefinite",
    ]


def test_forcing_class_one_on_sharp_instrument(sharp_instrument, tol):
    report = measurements.disturbance_report(sharp_instrument, tol)
    conflicts = measurements.nogo_audit(sharp_instrument, _forced(sharp_instrument), report, tol)
    assert conflicts == ["class-I-repeatable", "class-I-sharp-disturbance"]


def test_forcing_class_three_on_first_kind_definite_instrument(tol):
    inst = generators.qutrit_remark_instrument()
    report = measurements.disturbance_report(inst, tol)
    conflicts = measurements.nogo_audit(inst, _forced(inst, IN, IN, IN), report, tol)
    assert "class-III-first-kind-commutative" in conflicts


def test_rank_one_effect_with_nontrivial_dual_fixed_points(sharp_instrument, tol):
    report = measurements.disturbance_report(sharp_instrument, tol)
    conflicts = measurements.nogo_audit(sharp_instrument, _forced(sharp_instrument, IN, IN), report, tol)
    assert "class-II-rank-one-disturbs-all" in conflicts


def test_audit_corpus_has_no_conflicts(cfg):
    instruments = [generators.random_instrument(seed=s, outcomes=2, dim=2) for s in range(4)]
    instruments += [
        generators.random_instrument(seed=s, outcomes=3, dim=2, kraus_rank=2) for s in range(3)
    ]
    instruments.append(
        generators.luders(effects=[np.diag([0.75, 0.25]), np.diag([0.25, 0.75])])
    )
    instruments.append(generators.qutrit_remark_instrument())
    for inst in instruments:
        verdict = hierarchy.instrument_hierarchy(inst, cfg)
        report = measurements.disturbance_report(inst, cfg.tol)
        assert measurements.nogo_audit(inst, verdict.per_operation, report, cfg.tol) == []
