import json

import pandas as pd
import pytest

import qipm_app


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / 'inst.json'
    assert qipm_app.main(['generate', '--n', '8', '--m', '4', '--seed', '0', '--out', str(path)]) == 0
    return path


def test_generate_then_solve(tmp_path, instance_file):
    trace = tmp_path / 'trace.csv'
    out = tmp_path / 'result.json'
    code = qipm_app.main(['solve', '--instance', str(instance_file), '--solver', 'exact',
                          '--mu-min', '1e-6', '--trace', str(trace), '--out', str(out)])
    assert code == 0
    result = json.loads(out.read_text())
    assert len(pd.read_csv(trace)) == result['summary']['iterations']
    assert len(result['primal']) == 8


def test_refine_runs_five_stages(tmp_path, instance_file):
    report = tmp_path / 'report.json'
    code = qipm_app.main(['refine', '--instance', str(instance_file), '--zeta', '1e-10',
                          '--zeta-tilde', '1e-2', '--report', str(report)])
    assert code == 0
    assert json.loads(report.read_text())['stages'] == 5


def test_round_after_refine(tmp_path, instance_file):
    report = tmp_path / 'report.json'
    rounded = tmp_path / 'rounded.json'
    assert qipm_app.main(['refine', '--instance', str(instance_file), '--zeta', '1e-8',
                          '--report', str(report)]) == 0
    assert qipm_app.main(['round', '--instance', str(instance_file), '--result', str(report),
                          '--out', str(rounded)]) == 0
    payload = json.loads(rounded.read_text())
    certificate = json.loads(instance_file.read_text())['certificate']
    assert payload['objective'] == pytest.approx(certificate['opt_value'], abs=1e-9)


def test_unknown_flag_is_usage_error(instance_file):
    assert qipm_app.main(['solve', '--instance', str(instance_file), '--warp-drive']) == 2
    assert qipm_app.main(['solve', '--instance', str(instance_file), '--solver', 'annealer']) == 2


def test_missing_instance_is_usage_or_solver_error(tmp_path):
    code = qipm_app.main(['solve', '--instance', str(tmp_path / 'absent.json')])
    assert code in (1, 2)


def test_solver_failure_exits_one(tmp_path, instance_file, capsys):
    payload = json.loads(instance_file.read_text())
    payload['start']['mu'] = payload['start']['mu'] * 50.0
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps(payload))
    assert qipm_app.main(['solve', '--instance', str(bad)]) == 1
    err = capsys.readouterr().err
    assert '"reason": "centrality_loss"' in err


def test_report_plot(tmp_path, capsys):
    csv = tmp_path / 'data.csv'
    pd.DataFrame({'n': [8, 16, 32], 'q': [1.0, 2.8, 8.0]}).to_csv(csv, index=False)
    svg = tmp_path / 'data.svg'
    assert qipm_app.main(['report', 'plot', '--csv', str(csv), '--kind', 'loglog',
                          '--x', 'n', '--y', 'q', '--out', str(svg)]) == 0
    assert svg.exists()
    assert qipm_app.main(['report', 'plot', '--csv', str(csv), '--x', 'n', '--y', 'nope']) == 1


def test_bench_rejects_short_size_list(tmp_path):
    assert qipm_app.main(['bench', 'scaling', '--n-list', '8,16', '--out-dir', str(tmp_path)]) == 2


def test_check_runs_smoke_test(capsys):
    assert qipm_app.main(['check']) == 0
    assert 'Smoke test succeeded' in capsys.readouterr().out


def test_same_seed_gives_identical_files(tmp_path):
    outputs = []
    for run in ('a', 'b'):
        d = tmp_path / run
        d.mkdir()
        inst, trace, result = d / 'inst.json', d / 'trace.csv', d / 'result.json'
        assert qipm_app.main(['generate', '--n', '8', '--m', '4', '--seed', '0', '--out', str(inst)]) == 0
        assert qipm_app.main(['solve', '--instance', str(inst), '--trace', str(trace),
                              '--out', str(result)]) == 0
        outputs.append([p.read_bytes() for p in (inst, trace, result)])
    assert outputs[0] == outputs[1]


def test_bench_condnum_exit_code(tmp_path, capsys):
    assert qipm_app.main(['bench', 'condnum', '--n-list', '20', '--seeds', '0',
                          '--out-dir', str(tmp_path)]) == 0
    assert (tmp_path / 'condnum_0.csv').exists()
    out = capsys.readouterr().out
    assert '[PASS] condnum_0.single_run_growth_ge_100' in out
    assert '[PASS] condnum_0.refined_bounded_10x' in out
