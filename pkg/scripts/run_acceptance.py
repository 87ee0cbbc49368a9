"""Print one PASS/FAIL line per acceptance criterion (same checks as the pytest suite)."""

import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "tests"))

from test_acceptance import run_all  # noqa: E402

if __name__ == "__main__":
    sys.exit(0 if run_all() else 1)
