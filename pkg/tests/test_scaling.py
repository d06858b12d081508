import numpy as np
import pytest
from numpy.testing import assert_allclose

from qthermo.common import array_utils
from qthermo.common.errors import DimMismatch
from qthermo.common.opalg import AnalysisConfig
from qthermo.data_io import generators
from qthermo.maps import qmaps, scaling
from qthermo.maps.scaling import Decision


def test_ds_value_of_scaled_identity():
    eye = np.eye(2)
    assert_allclose(scaling.ds_value(qmaps.identity_map(2), 2 * eye, eye), 36.0)


def test_ds_value_of_preparation():
    prep = qmaps.prepare_map(np.diag([1.0, 0.0]))
    assert_allclose(scaling.ds_value(prep, np.eye(2), np.eye(2)), 2.0)


def test_ds_value_vanishes_on_bistochastic_channels():
    for seed in range(5):
        ch = generators.random_bistochastic(seed=seed, dim=3)
        assert scaling.ds_value(ch, np.eye(3), np.eye(3)) < 1e-12


def test_ds_value_rejects_rectangular_maps():
    with pytest.raises(DimMismatch):
        scaling.ds_value(qmaps.prepare_map(np.eye(3) / 3, effect=np.eye(2)), np.eye(2), np.eye(2))


def test_unitary_converges_immediately():
    u = qmaps.unitary_map(array_utils.random_unitary(3, seed=5))
    report = scaling.sinkhorn_scale(u, eps=1e-3)
    assert report.converged
    assert report.iterations == 0
    assert report.ds_value < 1e-12


def test_depolarize_to_pure_converges(depolarize, cfg):
    report = scaling.sinkhorn_scale(depolarize, eps=np.sqrt(cfg.tol.ds_eps), max_iter=cfg.max_iter)
    assert report.converged
    assert report.ds_value <= cfg.tol.ds_eps
    assert_allclose(
        scaling.ds_value(depolarize, report.c1, report.c2), report.ds_value, atol=1e-10
    )


def test_scaling_descends_on_random_channels():
    for seed in range(50):
        ch = generators.random_channel(seed=seed, dim=2, kraus_rank=2)
        report = scaling.sinkhorn_scale(ch, eps=1e-4, max_iter=200)
        history = np.asarray(report.ds_history)
        assert np.all(history[1:] <= history[:-1] * (1 + 1e-6) + 1e-15)


def test_singular_marginals_are_not_scaled():
    # rank one Kraus operator: both marginals singular
    op = qmaps.from_kraus([np.outer(array_utils.ket(0, 2), array_utils.ket(1, 2))])
    report = scaling.sinkhorn_scale(op, eps=1e-3)
    assert not report.converged
    assert report.singular


def test_decision_on_depolarize_to_pure(depolarize, cfg):
    decision = scaling.decide_rank_nondecreasing(depolarize, cfg)
    assert decision.verdict is Decision.YES
    assert scaling.verify_decision(depolarize, decision, cfg)


def test_decision_finds_rank_drop(rank_drop, cfg):
    decision = scaling.decide_rank_nondecreasing(rank_drop, cfg)
    assert decision.verdict is Decision.NO
    found = decision.counterexample
    assert found.rank_out < found.rank_in
    assert scaling.verify_counterexample(rank_drop, found, cfg.tol)
    assert scaling.verify_decision(rank_drop, decision, cfg)


def test_rank_drop_of_half_projection(rank_drop, tol):
    rho = np.diag([0.5, 0.5, 0.0])
    out = qmaps.apply(rank_drop, rho)
    assert_allclose(out, np.diag([1.0, 0.0, 0.0]), atol=1e-12)


def test_non_strictly_positive_map_is_no(cfg):
    op = qmaps.luders_map(np.diag([1.0, 0.0]))
    assert scaling.decide_rank_nondecreasing(op, cfg).verdict is Decision.NO


def test_extension_keeps_the_verdict(rank_drop, cfg):
    assert scaling.check_extension_rank_nondec(rank_drop, 2, cfg).verdict is Decision.NO
    ext = scaling.check_extension_rank_nondec(generators.depolarize_to_pure(), 2, cfg)
    assert ext.verdict is Decision.YES


def test_tampered_certificate_fails_verification(depolarize, cfg):
    decision = scaling.decide_rank_nondecreasing(depolarize, cfg)
    bad = scaling.RankDecision(
        Decision.YES,
        witness=scaling.ScalingReport(
            np.eye(2), np.eye(2), 0.0, 0, True, decision.witness.eps
        ),
    )
    assert not scaling.verify_decision(depolarize, bad, cfg)


def test_inconclusive_when_scaling_budget_is_exhausted(depolarize):
    cfg = AnalysisConfig(max_iter=1)
    decision = scaling.decide_rank_nondecreasing(depolarize, cfg.replace(tol=cfg.tol.replace(ds_eps=1e-30)))
    assert decision.verdict is Decision.INCONCLUSIVE
    assert decision.witness is not None


def _amplitude_damping(gamma):
    return qmaps.from_kraus(
        [np.diag([1.0, np.sqrt(1 - gamma)]), np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]])]
    )


def _sampled_rank_drop(cp_map, tol, samples=2000, seed=0):
    """True when some sampled Haar random state loses rank under cp_map."""
    rng = np.random.default_rng(seed)
    dim = cp_map.dim_in
    kraus = cp_map.stacked
    for rank in range(1, dim + 1):
        gauss = rng.normal(size=(samples, dim, rank)) + 1j * rng.normal(size=(samples, dim, rank))
        q, _ = np.linalg.qr(gauss)
        rho = q @ np.conj(np.swapaxes(q, 1, 2)) / rank
        out = np.einsum("kij,sjl,kml->sim", kraus, rho, kraus.conj())
        values = np.linalg.eigvalsh(out)
        threshold = tol.rank_tol * np.maximum(1.0, values.max(axis=1))
        if np.any((values > threshold[:, None]).sum(axis=1) < rank):
            return True
    return False


@pytest.mark.parametrize("gamma", [0.3, 1.0])
def test_amplitude_damping_decision_agrees_with_sampling(gamma, cfg):
    ch = _amplitude_damping(gamma)
    decision = scaling.decide_rank_nondecreasing(ch, cfg)
    assert decision.verdict is not Decision.INCONCLUSIVE
    assert (decision.verdict is Decision.NO) == _sampled_rank_drop(ch, cfg.tol)


@pytest.mark.parametrize("seed", range(100))
def test_decision_agrees_with_sampling_on_random_channels(seed, cfg):
    ch = generators.random_channel(seed=seed, dim=2, kraus_rank=1 + seed % 4)
    decision = scaling.decide_rank_nondecreasing(ch, cfg)
    assert decision.verdict is not Decision.INCONCLUSIVE
    if decision.verdict is Decision.YES:
        assert not _sampled_rank_drop(ch, cfg.tol, seed=seed)
    else:
        assert scaling.verify_counterexample(ch, decision.counterexample, cfg.tol)


@pytest.mark.parametrize("kraus_rank", [1, 2, 4])
def test_dual_symmetry(kraus_rank, cfg):
    definite = {Decision.YES, Decision.NO}
    for seed in range(15):
        ch = generators.random_channel(seed=seed, dim=2, kraus_rank=kraus_rank)
        verdicts = {
            scaling.decide_rank_nondecreasing(ch, cfg).verdict,
            scaling.decide_rank_nondecreasing(qmaps.dual(ch), cfg).verdict,
        }
        assert verdicts != definite


def test_preparation_examples(cfg):
    effect = np.diag([1.0, 0.5])
    pure = qmaps.prepare_map(np.diag([1.0, 0.0]), effect=effect)
    decision = scaling.decide_rank_nondecreasing(pure, cfg)
    assert decision.verdict is Decision.NO
    assert scaling.verify_decision(pure, decision, cfg)

    mixed = qmaps.prepare_map(np.diag([0.75, 0.25]), effect=effect)
    decision = scaling.decide_rank_nondecreasing(mixed, cfg)
    assert decision.verdict is Decision.YES
    assert scaling.verify_decision(mixed, decision, cfg)


def test_yes_witness_meets_ds_eps(depolarize, cfg):
    witness = scaling.decide_rank_nondecreasing(depolarize, cfg).witness
    assert witness.converged
    assert_allclose(witness.eps, np.sqrt(cfg.tol.ds_eps))
    assert witness.ds_value <= witness.eps ** 2
    assert witness.ds_value <= cfg.tol.ds_eps


def test_qutrit_operation_drops_rank(qutrit_instrument, cfg):
    decision = scaling.decide_rank_nondecreasing(qutrit_instrument.operation("+"), cfg)
    assert decision.verdict is Decision.NO
    assert decision.counterexample.rank_out < decision.counterexample.rank_in
