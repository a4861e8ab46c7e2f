"""
Run the acceptance studies as named bench targets.

Run from repository root with:
    python tools/run_acceptance.py                 # every target
    python tools/run_acceptance.py --only drift    # one target (repeatable)
    python tools/run_acceptance.py --out-dir results --config run.yaml

Targets: centering, iterations, inner_solver, refinement, condnum, drift,
scaling, rounding. CSVs land in --out-dir when given. Exits 1 if any
assertion fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from modules.bench import ACCEPTANCE_TARGETS, BANNER, run_acceptance  # noqa: E402
from modules.config import load_config  # noqa: E402
from modules.errors import UsageError  # noqa: E402


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Run acceptance targets')
    parser.add_argument('--only', action='append', choices=sorted(ACCEPTANCE_TARGETS),
                        help='run only this target (repeatable)')
    parser.add_argument('--out-dir', dest='out_dir')
    parser.add_argument('--config')
    parser.add_argument('--json', action='store_true', help='print the full result as JSON')
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except UsageError as e:
        print(f"usage error: {e.message}", file=sys.stderr)
        return 2

    print(BANNER)
    result = run_acceptance(args.only, cfg, args.out_dir)
    for name, target in result['targets'].items():
        print(f"{'PASS' if target['passed'] else 'FAIL'}  {name}  ({target['seconds']:.1f}s)")
        for key, ok in target['assertions'].items():
            if not ok:
                print(f"      failed: {key}")
    if args.json:
        print(json.dumps(result, indent=2))
    return 0 if result['passed'] else 1


if __name__ == '__main__':
    sys.exit(main())
