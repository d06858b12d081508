import numpy as np
import pytest
from numpy.testing import assert_allclose

from qthermo.common import array_utils
from qthermo.common.errors import DimMismatch, NotPSD, NotSubunital
from qthermo.data_io import generators
from qthermo.maps import qmaps


def test_kraus_shapes_are_checked():
    with pytest.raises(DimMismatch):
        qmaps.CPMap(2, 2, (np.eye(3),))
    with pytest.raises(ValueError):
        qmaps.CPMap(2, 2, ())


def test_apply_dual_is_adjoint(rng):
    ch = generators.random_channel(seed=4, dim=3)
    a = array_utils.random_hermitian(3, seed=rng)
    b = array_utils.random_hermitian(3, seed=rng)
    lhs = np.trace(b @ qmaps.apply(ch, a))
    rhs = np.trace(qmaps.apply_dual(ch, b) @ a)
    assert_allclose(lhs, rhs, atol=1e-12)


def test_superoperator_acts_on_row_major_vec(rng):
    ch = generators.random_channel(seed=1, dim=2)
    a = array_utils.random_density(2, seed=rng)
    out = qmaps.superoperator(ch) @ a.reshape(-1)
    assert_allclose(out.reshape(2, 2), qmaps.apply(ch, a), atol=1e-12)
    back = qmaps.from_superoperator(qmaps.superoperator(ch), 2, 2)
    assert qmaps.maps_close(back, ch)


def test_choi_trace_and_canonical_form():
    ch = generators.random_channel(seed=2, dim=2)
    assert_allclose(np.trace(qmaps.choi(ch)), 2.0, atol=1e-12)
    reduced = qmaps.canonical(ch)
    assert len(reduced.kraus) <= 4
    assert qmaps.maps_close(reduced, ch)
    assert qmaps.maps_distance(reduced, ch) < 1e-9


def test_kraus_from_choi_rejects_negative_choi():
    with pytest.raises(NotPSD):
        qmaps.kraus_from_choi(-np.eye(4), 2, 2)


def test_identity_and_unitary_classification(tol):
    mc = qmaps.classify_map(qmaps.identity_map(3), tol)
    assert mc.trace_preserving and mc.unital and mc.bistochastic
    assert mc.strictly_positive and mc.purity_preserving
    u = array_utils.random_unitary(2, seed=7)
    assert qmaps.is_unitary_map(qmaps.unitary_map(u), tol)
    assert not qmaps.is_unitary_map(generators.depolarize_to_pure(), tol)


def test_depolarize_to_pure_classification(tol, depolarize):
    mc = qmaps.classify_map(depolarize, tol)
    assert mc.trace_preserving
    assert not mc.unital
    assert mc.strictly_positive
    assert not mc.purity_preserving
    assert_allclose(qmaps.apply(depolarize, np.eye(2)), np.diag([1.5, 0.5]), atol=1e-12)


def test_luders_operation_effect(tol):
    op = qmaps.luders_map(np.diag([0.75, 0.25]), tol)
    mc = qmaps.classify_map(op, tol)
    assert not mc.trace_preserving
    assert_allclose(mc.compatible_effect, np.diag([0.75, 0.25]), atol=1e-12)
    assert mc.strictly_positive


def test_classify_rejects_superunital_effect(tol):
    with pytest.raises(NotSubunital):
        qmaps.classify_map(qmaps.from_kraus([np.sqrt(2) * np.eye(2)]), tol)


def test_prepare_map_measures_effect(tol):
    op = qmaps.prepare_map(np.diag([1.0, 0.0]), effect=np.diag([0.5, 1.0]), tol=tol)
    out = qmaps.apply(op, np.diag([0.0, 1.0]))
    assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-12)
    assert not qmaps.classify_map(op, tol).strictly_positive


def test_compose_tensor_and_mix():
    u = qmaps.unitary_map(array_utils.random_unitary(2, seed=3))
    assert qmaps.maps_close(qmaps.compose(qmaps.dual(u), u), qmaps.identity_map(2))
    big = qmaps.tensor(u, qmaps.identity_map(3))
    assert (big.dim_in, big.dim_out) == (6, 6)
    with pytest.raises(DimMismatch):
        qmaps.compose(qmaps.identity_map(3), u)
    with pytest.raises(ValueError):
        qmaps.convex_mix(u, u, 1.5)
    assert qmaps.maps_close(qmaps.convex_mix(u, qmaps.identity_map(2), 1.0), u)


def test_convex_mix_reproduces_depolarize_to_pure(depolarize):
    phi_prep = qmaps.prepare_map(np.diag([1.0, 0.0]))
    mixed = qmaps.convex_mix(qmaps.identity_map(2), phi_prep, 0.5)
    assert qmaps.maps_close(mixed, depolarize)


def test_sum_and_scale_maps():
    inst = generators.qutrit_remark_instrument()
    total = qmaps.sum_maps([op for _, op in inst.items()])
    assert qmaps.classify_map(total).trace_preserving
    half = qmaps.scale_map(qmaps.identity_map(2), 0.5)
    assert_allclose(qmaps.effect_operator(half), 0.5 * np.eye(2), atol=1e-12)
