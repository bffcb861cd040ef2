"""Run the acceptance battery and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py [criterion numbers...]
"""

import sys

from fdlab.acceptance import run_suite


def main(argv):
    results = run_suite([int(a) for a in argv] or None)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
