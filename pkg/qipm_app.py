#!/usr/bin/env python3
"""
qipm_app.py

Batch command line for the almost-exact quantum IPM simulator.

Subcommands:
  generate        planted-certificate instance (+ central start) to JSON
  solve           one IPM run; --trace writes the per-iteration CSV
  refine          iterative refinement; --report writes the stage report JSON
  round           partition identification + crossover on a solve result
  bench scaling   modeled-query vs measured-ops scaling study
  bench condnum   condition-number study on degenerate instances
  report plot     CSV -> SVG
  check           smoke test

Exit codes: 0 success, 1 solver error, 2 usage error.
"""

import argparse
import json
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from modules.config import load_config, resolve_seed
from modules.errors import QipmError, UsageError
from modules.ipm import CG, EXACT, QUANTUM, ae_qipm_solve
from modules.lp_core import (DualIterate, InstanceSpec, dual_objective, generate_instance,
                             load_instance, load_start, save_instance)
from modules.qsim import CostLedger
from modules.refine import ir_ae_qipm
from modules.rounding import round_solution
from modules.telemetry import get_logger

logger = get_logger('cli')

SOLVER_FLAGS = {'exact': EXACT, 'quantum': QUANTUM, 'cg': CG}

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; keep that but name the offending flag first."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: usage error: {message}\n")


def _csv_ints(raw: str) -> List[int]:
    try:
        return [int(v) for v in raw.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _write_json(path: str, payload: Dict[str, Any]) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _load_problem(path: str):
    inst = load_instance(path)
    start = load_start(path)
    if start is None:
        raise UsageError(f"--instance {path} carries no start iterate; create it with `generate`")
    return inst, start


def _run_config(args) -> Dict[str, Any]:
    """YAML config with command-line flags layered on top."""
    ipm: Dict[str, Any] = {}
    noise: Dict[str, Any] = {}
    refine: Dict[str, Any] = {}
    if getattr(args, 'solver', None):
        ipm['solver'] = SOLVER_FLAGS[args.solver]
    for flag, key in (('theta', 'theta'), ('mu_min', 'mu_min'), ('newton_tol', 'newton_tol')):
        if getattr(args, flag, None) is not None:
            ipm[key] = getattr(args, flag)
    if getattr(args, 'seed', None) is not None or 'QIPM_SEED' in os.environ:
        noise['seed'] = resolve_seed(getattr(args, 'seed', None))
    if getattr(args, 'zeta', None) is not None:
        refine['zeta'] = args.zeta
    if getattr(args, 'zeta_tilde', None) is not None:
        refine['zeta_tilde'] = args.zeta_tilde
    return load_config(getattr(args, 'config', None), {'ipm': ipm, 'noise': noise, 'refine': refine})


# ---- subcommands ----

def cmd_generate(args) -> int:
    seed = resolve_seed(args.seed)
    m = args.m if args.m is not None else max(1, args.n // 2)
    spec = InstanceSpec(n=args.n, m=m, degenerate=args.degenerate, seed=seed,
                        degenerate_count=args.degenerate_count)
    inst, start, _ = generate_instance(spec)
    save_instance(inst, args.out, start=start)
    print(f"{inst.name}: m={inst.m} n={inst.n} -> {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    inst, start = _load_problem(args.instance)
    ledger = CostLedger(cost=cfg['cost'])
    final, trace = ae_qipm_solve(inst, start, cfg['ipm'], cfg['noise'], ledger, gap_target=args.gap)
    if args.trace:
        trace.to_csv(args.trace)
    result = {
        'instance': inst.name,
        'summary': trace.summary(),
        'objective': dual_objective(inst, final.y),
        'iterate': final.to_dict(),
        'primal': trace.primal.tolist(),
        'ledger': trace.ledger.to_dict(),
    }
    if args.out:
        _write_json(args.out, result)
    print(json.dumps({'instance': inst.name, **trace.summary()}, indent=2))
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _run_config(args)
    inst, start = _load_problem(args.instance)
    ledger = CostLedger(cost=cfg['cost'])
    final, state = ir_ae_qipm(inst, start, cfg['ipm'], cfg['noise'], cfg['refine'], ledger,
                              certificate=inst.certificate)
    report = {'instance': inst.name, 'objective': dual_objective(inst, final.y),
              **state.to_report(), 'iterate': final.to_dict(),
              'primal': state.primal.tolist() if state.primal is not None else None}
    if args.report:
        _write_json(args.report, report)
    print(f"{inst.name}: {state.stages} stages, gap {state.gap_history[-1]:.3e}, "
          f"objective {report['objective']:.12g}")
    return EXIT_OK


def cmd_round(args) -> int:
    inst = load_instance(args.instance)
    try:
        with open(args.result, 'r', encoding='utf-8') as fh:
            result = json.load(fh)
        iterate = DualIterate.from_dict(result['iterate'])
        primal = np.asarray(result['primal'], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"--result {args.result} is not a solve/refine result: {e}")
    out = round_solution(inst, iterate, primal, tau=args.tau)
    payload = {
        'instance': inst.name,
        'x': out['x'].tolist(), 'y': out['y'].tolist(), 's': out['s'].tolist(),
        'partition': out['partition'].to_dict(),
        'objective': out['objective'],
        'attempts': out['attempts'],
        'kkt': out['kkt'],
    }
    if args.out:
        _write_json(args.out, payload)
    print(f"{inst.name}: |B|={len(out['partition'].B)} |N|={len(out['partition'].N)} "
          f"objective {out['objective']:.12g} after {out['attempts']} attempt(s)")
    return EXIT_OK


def cmd_bench(args) -> int:
    from modules import bench

    overrides: Dict[str, Any] = {}
    if args.seeds is not None:
        overrides['seeds'] = tuple(args.seeds)
    if args.n_list is not None:
        overrides['n_list'] = tuple(args.n_list)
    cfg = load_config(args.config, {'bench': overrides})
    print(bench.BANNER)
    if args.study == 'scaling':
        b = cfg['bench']
        results = [bench.run_scaling_study(b.n_list, b.m_ratio, b.seeds, cfg, args.out_dir)]
    else:
        n = args.n_list[0] if args.n_list else cfg['bench'].condnum_n
        seeds = args.seeds if args.seeds is not None else list(range(cfg['bench'].degenerate_instances))
        results = [bench.run_condnum_study(InstanceSpec(n=n, m=max(1, n // 3), degenerate=True, seed=s),
                                           cfg, args.out_dir) for s in seeds]
    failed = False
    for res in results:
        for key, ok in res.assertions.items():
            print(f"  [{'PASS' if ok else 'FAIL'}] {res.name}.{key}")
            failed = failed or not ok
        if res.summary:
            print(json.dumps(res.summary, indent=2, default=float))
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_report(args) -> int:
    from modules.bench import emit_plot

    path = emit_plot(args.csv, args.kind, args.x, args.y, series=args.series, out_path=args.out)
    print(path)
    return EXIT_OK


def cmd_check(args) -> int:
    import smoke_test
    return smoke_test.main()


# ---- parser ----

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--instance', required=True, help='instance JSON written by `generate`')
    p.add_argument('--config', help='YAML run configuration')
    p.add_argument('--solver', choices=sorted(SOLVER_FLAGS))
    p.add_argument('--theta', type=float)
    p.add_argument('--mu-min', dest='mu_min', type=float)
    p.add_argument('--newton-tol', dest='newton_tol', type=float)
    p.add_argument('--seed', type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='qipm_app.py', description='Almost-exact quantum IPM simulator')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    g = sub.add_parser('generate', help='write a planted-certificate instance')
    g.add_argument('--n', type=int, required=True)
    g.add_argument('--m', type=int)
    g.add_argument('--degenerate', action='store_true')
    g.add_argument('--degenerate-count', dest='degenerate_count', type=int, default=1)
    g.add_argument('--seed', type=int)
    g.add_argument('--out', required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser('solve', help='run the IPM once')
    _add_solver_flags(s)
    s.add_argument('--gap', type=float, help='stop once the gap bound reaches this value')
    s.add_argument('--trace', help='per-iteration CSV')
    s.add_argument('--out', help='result JSON (input to `round`)')
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser('refine', help='iterative refinement')
    _add_solver_flags(r)
    r.add_argument('--zeta', type=float)
    r.add_argument('--zeta-tilde', dest='zeta_tilde', type=float)
    r.add_argument('--report', help='stage report JSON')
    r.set_defaults(func=cmd_refine)

    rd = sub.add_parser('round', help='partition + crossover on a solve result')
    rd.add_argument('--instance', required=True)
    rd.add_argument('--result', required=True, help='JSON from `solve --out` or `refine --report`')
    rd.add_argument('--tau', type=float)
    rd.add_argument('--out')
    rd.set_defaults(func=cmd_round)

    b = sub.add_parser('bench', help='experiment studies')
    b.add_argument('study', choices=('scaling', 'condnum'))
    b.add_argument('--n-list', dest='n_list', type=_csv_ints)
    b.add_argument('--seeds', type=_csv_ints)
    b.add_argument('--out-dir', dest='out_dir')
    b.add_argument('--config')
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser('report', help='render study CSVs')
    rp.add_argument('action', choices=('plot',))
    rp.add_argument('--csv', required=True)
    rp.add_argument('--kind', choices=('line', 'loglog'), default='line')
    rp.add_argument('--x', required=True)
    rp.add_argument('--y', required=True)
    rp.add_argument('--series')
    rp.add_argument('--out')
    rp.set_defaults(func=cmd_report)

    c = sub.add_parser('check', help='run the smoke test')
    c.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except QipmError as e:
        logger.error('%s failed: %s', args.command, e.message)
        print(json.dumps(e.to_dict(), indent=2), file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
