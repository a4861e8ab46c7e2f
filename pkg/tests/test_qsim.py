import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modules.dense_la import NORMAL_EQUATIONS, SymmetricSystem, exact_solve
from modules.errors import DivergingSolverError
from modules.qsim import (RESIDUAL_SPACE, SOLUTION_SPACE, CostLedger, CostModel, NoiseModel,
                          ledger_report, noisy_unit_solve, quantum_matvec, refined_linear_solve)

SADDLE = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]])


def _augmented(seed, n=8, s_low=0.5):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((max(1, n // 2), n))
    return SymmetricSystem.augmented(A, rng.uniform(s_low, 2.0, size=n)), rng


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(eps_tomo=0.5)
    with pytest.raises(ValueError):
        NoiseModel(mode='bogus')


def test_zero_noise_unit_solve_is_exact():
    sys = SymmetricSystem(SADDLE)
    r = np.array([0.0, 0.0, 2.0])
    u, n_p = noisy_unit_solve(sys, r, NoiseModel(eps_tomo=0.0, eps_norm=0.0, mode=SOLUTION_SPACE), CostLedger())
    p = exact_solve(sys, r / 2.0)
    np.testing.assert_allclose(u, p / np.linalg.norm(p))
    assert n_p == pytest.approx(np.linalg.norm(p))


@pytest.mark.parametrize('mode', [SOLUTION_SPACE, RESIDUAL_SPACE])
def test_identity_unit_solve_error_bound(mode):
    sys = SymmetricSystem(np.eye(4), NORMAL_EQUATIONS)
    e1 = np.eye(4)[0]
    for seed in range(20):
        noise = NoiseModel(eps_tomo=0.1, eps_norm=0.1, mode=mode, seed=seed)
        u, _ = noisy_unit_solve(sys, e1, noise, CostLedger())
        assert np.linalg.norm(u - e1) <= 2 * noise.eps_tomo


def test_unit_solve_deterministic_and_credited():
    sys = SymmetricSystem(SADDLE)
    noise = NoiseModel(mode=SOLUTION_SPACE, seed=3)
    l1, l2 = CostLedger(), CostLedger()
    a = noisy_unit_solve(sys, np.ones(3), noise, l1)
    b = noisy_unit_solve(sys, np.ones(3), noise, l2)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]
    assert l1.count('inverse_tomography') == 1 and l1.count('norm_estimation') == 1
    assert l1.to_dict() == l2.to_dict()


def test_quantum_matvec_examples():
    ledger = CostLedger()
    A = np.array([[1.0, 1.0]])
    assert np.array_equal(quantum_matvec(A, np.ones(2), NoiseModel(), ledger), [2.0])
    assert not quantum_matvec(A, np.zeros(2), NoiseModel(eps_matvec=0.2), ledger).any()
    assert ledger.count('matvec') == 2
    assert ledger.classical_ops == 0.0


def test_quantum_matvec_relative_error():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    out = quantum_matvec(M, np.ones(2), NoiseModel(eps_matvec=0.1, seed=1), CostLedger())
    assert np.all(np.abs(out / np.array([3.0, 4.0]) - 1.0) <= 0.1)


def test_refined_solve_zero_noise_one_iteration():
    sys = SymmetricSystem(SADDLE)
    sigma = np.array([0.0, 0.0, 1.0])
    rep = refined_linear_solve(sys, sigma, noise=NoiseModel(eps_tomo=0.0, eps_norm=0.0), ledger=CostLedger())
    assert rep.iterations == 1
    np.testing.assert_allclose(rep.solution, [0.5, 0.5, -0.5], atol=1e-14)


def test_refined_solve_default_noise_matches_exact():
    sys = SymmetricSystem(SADDLE)
    sigma = np.array([0.0, 0.0, 1.0])
    rep = refined_linear_solve(sys, sigma, tol=1e-10, noise=NoiseModel(), ledger=CostLedger())
    np.testing.assert_allclose(rep.solution, exact_solve(sys, sigma), atol=1e-9)


def test_residual_space_contraction_on_identity():
    sys = SymmetricSystem(np.eye(5), NORMAL_EQUATIONS)
    sigma = np.eye(5)[0]
    for seed in range(100):
        rep = refined_linear_solve(sys, sigma, noise=NoiseModel(eps_tomo=0.1, eps_norm=0.1, seed=seed),
                                   ledger=CostLedger())
        assert max(rep.contraction_ratios) <= 0.11
        assert rep.iterations <= 11


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_residual_space_contraction_is_kappa_free(seed):
    sys, rng = _augmented(seed, s_low=0.05)
    sigma = rng.standard_normal(sys.order)
    rep = refined_linear_solve(sys, sigma, noise=NoiseModel(eps_tomo=0.05, eps_norm=0.05, seed=seed),
                               ledger=CostLedger())
    h = rep.residual_history
    # ratios well above the floating-point floor
    ratios = [h[i + 1] / h[i] for i in range(len(h) - 1) if h[i + 1] > 1e-6]
    assert all(r <= 0.05 + 1e-6 for r in ratios)
    assert np.linalg.norm(sys.M @ rep.solution - sigma) <= 1e-8 * max(1.0, np.linalg.norm(sigma))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_zero_noise_equals_exact(seed):
    sys, rng = _augmented(seed)
    sigma = rng.standard_normal(sys.order)
    rep = refined_linear_solve(sys, sigma, noise=NoiseModel(eps_tomo=0.0, eps_norm=0.0), ledger=CostLedger())
    z = exact_solve(sys, sigma)
    assert np.linalg.norm(rep.solution - z) <= 1e-10 * np.linalg.norm(z)


def test_solution_space_refuses_large_kappa_eps():
    sys, rng = _augmented(7, s_low=0.01)
    noise = NoiseModel(eps_tomo=0.2, eps_norm=0.1, mode=SOLUTION_SPACE)
    with pytest.raises(DivergingSolverError) as info:
        refined_linear_solve(sys, rng.standard_normal(sys.order), noise=noise, ledger=CostLedger())
    assert info.value.kappa_eps >= 1.0


def test_solution_space_converges_when_well_conditioned():
    sys = SymmetricSystem(np.diag([1.0, 2.0, 3.0]), NORMAL_EQUATIONS)
    sigma = np.array([1.0, 1.0, 1.0])
    rep = refined_linear_solve(sys, sigma, noise=NoiseModel(eps_tomo=0.01, eps_norm=0.01, mode=SOLUTION_SPACE),
                               ledger=CostLedger())
    np.testing.assert_allclose(rep.solution, [1.0, 0.5, 1.0 / 3.0], atol=1e-9)
    bound = 3.0 * 0.03 * 1.05
    assert all(r <= bound for r in rep.contraction_ratios[:-1])


def test_ledger_tomography_formula():
    ledger = CostLedger(cost=CostModel(tomography_c=1.0))
    ledger.credit_quantum('inverse_tomography', dim=4, kappa=1.0, frob_norm=1.0, eps=1e-2)
    assert ledger.qram_queries == pytest.approx(400.0)


def test_empty_ledger_report():
    report = ledger_report(CostLedger(), n=4, kappa=1.0, frob_norm=1.0)
    assert report['qram_queries'] == 0 and report['classical_ops'] == 0
    assert report['reference_qram_queries'] == 0 and report['breakdown'] == {}
    assert report['labels']['qram_queries'] == 'modeled quantum'
    assert report['labels']['classical_ops'] == 'measured classical'


def test_ledger_report_reference_inputs():
    ledger = CostLedger()
    ledger.credit_quantum('inverse_tomography', dim=4, kappa=50.0, frob_norm=3.0, eps=1e-2)
    report = ledger_report(ledger, n=4, kappa=1.0, frob_norm=1.0)
    assert report['qram_queries'] == pytest.approx(400.0 * 150.0)
    assert report['reference_qram_queries'] == pytest.approx(400.0)


def test_ledger_merge_is_additive():
    a, b = CostLedger(), CostLedger()
    a.credit_quantum('store_slack', dim=5)
    a.credit_classical('vector_update', ops=10.0)
    b.credit_quantum('matvec', dim=8, eps=0.0)
    b.credit_classical('vector_update', ops=4.0)
    merged = a.merge(b)
    assert merged.qram_queries == pytest.approx(a.qram_queries + b.qram_queries)
    assert merged.classical_ops == pytest.approx(14.0)
    assert len(merged.events) == 4


def test_ledger_snapshot_delta():
    ledger = CostLedger()
    ledger.credit_quantum('store_slack', dim=3)
    snap = ledger.snapshot()
    ledger.credit_quantum('store_slack', dim=7)
    delta = ledger.delta(snap)
    assert delta.qram_queries == pytest.approx(7.0)
    assert snap.qram_queries == pytest.approx(3.0)


def test_ledger_json_roundtrip():
    ledger = CostLedger()
    ledger.credit_quantum('norm_estimation', dim=3, kappa=2.0, frob_norm=1.0, eps=0.01)
    payload = json.loads(ledger.to_json())
    assert set(payload) == {'qram_queries', 'classical_ops', 'events'}
    assert payload['events'][0]['kind'] == 'norm_estimation'
    again = CostLedger.from_dict(payload)
    assert again.qram_queries == ledger.qram_queries


def test_unknown_quantum_event():
    with pytest.raises(ValueError):
        CostLedger().credit_quantum('teleport', dim=1)


def test_ledger_is_deterministic_per_seed():
    sys, rng = _augmented(11)
    sigma = rng.standard_normal(sys.order)
    runs = [refined_linear_solve(sys, sigma, noise=NoiseModel(seed=5), ledger=CostLedger()).ledger_delta.to_json()
            for _ in range(2)]
    assert runs[0] == runs[1]
