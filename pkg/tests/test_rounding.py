import numpy as np
import pytest

from modules.errors import WrongPartitionError
from modules.ipm import IpmConfig, ae_qipm_solve
from modules.lp_core import DualIterate, InstanceSpec, generate_instance
from modules.rounding import (Partition, crossover, identify_partition, kkt_holds, kkt_residuals,
                              round_solution)


def test_identify_partition_default_tau():
    part = identify_partition(np.array([1.0, 1e-9]), np.array([1e-9, 1.0]))
    assert part.B == (0,) and part.N == (1,)
    assert part.decided
    assert part.tau == pytest.approx(np.sqrt(1e-9))


def test_identify_partition_explicit_tau_reports_undecided():
    part = identify_partition(np.array([1.0, 1e-3, 1e-3]), np.array([1e-3, 1.0, 1e-3]), tau=0.5)
    assert part.B == (0,) and part.N == (1,)
    assert part.undecided == (2,)
    assert not part.decided


def test_identify_partition_rejects_negative_entries():
    with pytest.raises(ValueError):
        identify_partition(np.array([1.0, -1e-3]), np.array([1e-3, 1.0]))


def test_crossover_hand_example(tiny_lp):
    x, y, s = crossover(tiny_lp, Partition(B=(0,), N=(1,)), np.array([0.99, 0.01]), np.array([0.98]))
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(y, [1.0], atol=1e-14)
    np.testing.assert_allclose(s, [0.0, 1.0], atol=1e-14)


def test_crossover_wrong_partition(tiny_lp):
    with pytest.raises(WrongPartitionError) as info:
        crossover(tiny_lp, Partition(B=(1,), N=(0,)), np.array([0.01, 0.99]), np.array([0.98]))
    assert info.value.details['kkt']['min_s'] < 0


def test_crossover_refuses_undecided(tiny_lp):
    with pytest.raises(WrongPartitionError):
        crossover(tiny_lp, Partition(B=(0,), N=(), undecided=(1,)), np.array([1.0, 0.0]), np.array([1.0]))


def test_certificate_is_a_fixed_point(small_instance):
    inst, _, cert = small_instance
    x, y, s = crossover(inst, Partition(cert.partition_B, cert.partition_N), cert.x_star, cert.y_star)
    np.testing.assert_allclose(x, cert.x_star, atol=1e-10)
    np.testing.assert_allclose(s, cert.s_star, atol=1e-10)
    assert kkt_holds(kkt_residuals(inst, x, y, s))


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_round_solution_recovers_planted_partition(seed):
    inst, start, cert = generate_instance(InstanceSpec(n=16, m=8, seed=seed))
    final, trace = ae_qipm_solve(inst, start, IpmConfig(mu_min=1e-14), gap_target=1e-8)
    out = round_solution(inst, final, trace.primal)
    assert out['partition'].B == cert.partition_B
    assert out['partition'].N == cert.partition_N
    assert out['objective'] == pytest.approx(cert.opt_value, rel=1e-9, abs=1e-9)
    assert kkt_holds(out['kkt'])
    assert out['attempts'] >= 1


def test_round_solution_gives_up_after_retries(tiny_lp):
    # interior point pointing at the wrong vertex
    it = DualIterate(y=[1.9], s=[1e-12, 0.1], mu=1e-12)
    with pytest.raises(WrongPartitionError):
        round_solution(tiny_lp, it, np.array([0.0, 1.0]), retries=1)
