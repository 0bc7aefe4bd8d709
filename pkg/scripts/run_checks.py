"""Run the oracle checks and the acceptance criteria, printing one line per item."""
import argparse
import runpy
import sys
from pathlib import Path

from qubitfb.checks import run_checks


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--oracles-only", action="store_true")
    args = ap.parse_args()

    ok = True
    for name, passed, detail in run_checks():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", flush=True)
    if not args.oracles_only:
        acceptance = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
        try:
            runpy.run_path(str(acceptance), run_name="__main__")
        except SystemExit as exc:
            ok &= exc.code == 0
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
