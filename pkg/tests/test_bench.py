import math

import pandas as pd
import pytest

from modules.bench import (ACCEPTANCE_TARGETS, BANNER, BenchConfig, StudyResult, emit_plot,
                           fit_loglog_slope, run_acceptance, run_centering_study, run_condnum_study,
                           run_drift_study, run_inner_solver_study, run_iteration_study,
                           run_refinement_study, run_rounding_study, run_scaling_study)
from modules.config import load_config
from modules.errors import UnknownColumnError, UsageError
from modules.ipm import EXACT, QUANTUM
from modules.lp_core import InstanceSpec


@pytest.fixture
def cfg():
    return load_config(overrides={'bench': {'workers': 1}})


def test_fit_loglog_slope():
    xs = [16, 32, 64, 128]
    assert fit_loglog_slope(xs, [math.sqrt(x) for x in xs]) == pytest.approx(0.5)
    assert fit_loglog_slope(xs, [3.0 * x ** 1.5 for x in xs]) == pytest.approx(1.5)
    assert math.isnan(fit_loglog_slope([8, 8], [1.0, 2.0]))


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(m_ratio=0.0)
    with pytest.raises(ValueError):
        BenchConfig(seeds=())
    assert BenchConfig(workers=3).resolved_workers() == 3


def test_study_result_writes_csv_and_timings(tmp_path):
    frame = pd.DataFrame([{'n': 8, 'iterations': 3}])
    timings = pd.DataFrame([{'n': 8, 'seconds': 0.25}])
    result = StudyResult('demo', frame, {'ok': True}, timings=timings)
    result.write(str(tmp_path))
    assert result.passed
    assert pd.read_csv(tmp_path / 'demo.csv').to_dict('records') == [{'n': 8, 'iterations': 3}]
    assert (tmp_path / 'demo_timings.csv').exists()
    StudyResult('quiet', frame).write(None)


def test_scaling_study_needs_four_sizes(cfg):
    with pytest.raises(UsageError):
        run_scaling_study([16, 32, 64], config=cfg)
    with pytest.raises(UsageError):
        run_scaling_study([64, 32, 16, 8], config=cfg)


def test_iteration_study_small(cfg, tmp_path):
    result = run_iteration_study(n_list=(16, 32), config=cfg, out_dir=str(tmp_path))
    assert result.assertions['delta_below_half']
    assert result.assertions['iteration_count_exact']
    assert (tmp_path / 'iterations.csv').exists()
    assert (tmp_path / 'iterations_timings.csv').exists()


def test_centering_study_small(cfg):
    result = run_centering_study(n_list=(8, 16), samples=10, config=cfg)
    assert len(result.frame) == 10
    assert result.passed


def test_inner_solver_study_small(cfg):
    result = run_inner_solver_study(systems=5, config=cfg)
    assert result.assertions['contraction_ratio_le_0_11']
    assert result.assertions['zero_noise_matches_exact']
    assert result.assertions['iterations_le_11']


def test_drift_study_small(cfg):
    result = run_drift_study(n_list=(16,), seeds=(0,), config=cfg)
    assert result.passed


def test_rounding_study_small(cfg):
    result = run_rounding_study(instances=3, n_list=(16,), config=cfg)
    assert result.passed


def test_refinement_study_small(cfg):
    result = run_refinement_study(instances=2, n_list=(8,), config=cfg)
    assert result.assertions['stage_count']
    assert set(result.frame['solver']) == {EXACT, QUANTUM}
    assert (result.frame['objective_error'] <= 1e-8).all()


def test_condnum_study_requires_degenerate_spec(cfg):
    with pytest.raises(UsageError):
        run_condnum_study(InstanceSpec(n=12, m=4, seed=0), cfg)


def test_condnum_study_writes_report(cfg, tmp_path):
    result = run_condnum_study({'n': 20, 'm': 6, 'degenerate': True, 'seed': 0}, cfg, str(tmp_path),
                               control=False)
    df = pd.read_csv(tmp_path / 'condnum_0.csv')
    assert list(df.columns) == ['instance', 'run', 'stage', 'iter', 'mu', 'cond_M']
    assert set(df['run']) <= {'single', 'refined'}
    deg = result.summary['degenerate']
    assert deg['single_failure'] == '' and deg['refined_failure'] == ''
    assert result.assertions == {'single_run_growth_ge_100': True, 'refined_bounded_10x': True}


def test_reports_are_reproducible(cfg, tmp_path):
    a, b = tmp_path / 'a', tmp_path / 'b'
    run_iteration_study(n_list=(16,), config=cfg, out_dir=str(a))
    run_iteration_study(n_list=(16,), config=cfg, out_dir=str(b))
    assert (a / 'iterations.csv').read_bytes() == (b / 'iterations.csv').read_bytes()


def _write_csv(path, rows, columns):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return str(path)


def test_emit_plot_is_deterministic(tmp_path):
    csv = _write_csv(tmp_path / 'd.csv', [{'n': 8, 'q': 1.0}, {'n': 16, 'q': 2.9}], ['n', 'q'])
    first = emit_plot(csv, 'loglog', 'n', 'q', out_path=str(tmp_path / 'one.svg'))
    second = emit_plot(csv, 'loglog', 'n', 'q', out_path=str(tmp_path / 'two.svg'))
    with open(first, 'rb') as f1, open(second, 'rb') as f2:
        assert f1.read() == f2.read()


def test_emit_plot_edge_cases(tmp_path):
    empty = _write_csv(tmp_path / 'empty.csv', [], ['n', 'q'])
    assert emit_plot(empty, 'line', 'n', 'q').endswith('empty_q.svg')

    single = _write_csv(tmp_path / 'single.csv', [{'n': 8, 'q': 1.0}], ['n', 'q'])
    with open(emit_plot(single, 'line', 'n', 'q')) as f:
        assert '<svg' in f.read()

    two = _write_csv(tmp_path / 'two.csv',
                     [{'n': 8, 'q': 1.0, 'solver': 'cg'}, {'n': 8, 'q': 2.0, 'solver': 'quantum'}],
                     ['n', 'q', 'solver'])
    with open(emit_plot(two, 'line', 'n', 'q', series='solver')) as f:
        svg = f.read()
    assert 'legend' in svg


def test_emit_plot_errors(tmp_path):
    csv = _write_csv(tmp_path / 'd.csv', [{'n': 8, 'q': 1.0}], ['n', 'q'])
    with pytest.raises(UnknownColumnError):
        emit_plot(csv, 'line', 'n', 'missing')
    with pytest.raises(UsageError):
        emit_plot(csv, 'histogram', 'n', 'q')


def test_acceptance_rejects_unknown_target(cfg):
    with pytest.raises(UsageError):
        run_acceptance(['nope'], cfg)


def test_banner_mentions_modeled_queries():
    assert 'MODELED' in BANNER and 'MEASURED' in BANNER


@pytest.mark.slow
@pytest.mark.parametrize('target', sorted(ACCEPTANCE_TARGETS))
def test_acceptance_target(target, tmp_path):
    outcome = run_acceptance([target], out_dir=str(tmp_path))
    assert outcome['passed'], outcome['targets'][target]['assertions']
