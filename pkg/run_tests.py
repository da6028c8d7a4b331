#!/usr/bin/env python3
"""
Test runner for the lattice emission simulator.

    python run_tests.py                 # fast checks only
    python run_tests.py --slow          # include the exact-oracle comparisons
    python run_tests.py -- -k directional -x
"""

import sys
import subprocess
import time
from pathlib import Path

ROOT = Path(__file__).parent
sys.path.insert(0, str(ROOT))

# (path, description, per-test timeout in seconds)
SUITES = [
    ("tests/unit", "Unit tests (solvers, couplings, directional)", 600),
    ("tests/integration", "Integration tests (experiments, presets, CLI)", 900),
]


def run_suite(path, description, timeout, pytest_args):
    """Run one pytest suite in a subprocess; returns (ok, seconds)."""
    print(f"\n{'=' * 60}")
    print(f"🧪 {description}")
    print(f"{'=' * 60}")

    command = [sys.executable, "-m", "pytest", path, f"--timeout={timeout}", *pytest_args]
    started = time.perf_counter()
    try:
        result = subprocess.run(command, capture_output=True, text=True, cwd=ROOT)
    except OSError as e:
        print(f"❌ Could not start pytest: {e}")
        return False, 0.0
    elapsed = time.perf_counter() - started

    print(result.stdout)
    if result.stderr:
        print("STDERR:", result.stderr)

    # exit code 5: every test in the suite was deselected
    if result.returncode in (0, 5):
        print(f"✅ Suite passed in {elapsed:.1f}s")
        return True, elapsed
    print(f"❌ Suite failed with exit code {result.returncode} after {elapsed:.1f}s")
    return False, elapsed


def main(argv):
    own, passthrough = _split(argv)
    pytest_args = list(passthrough)
    if "--slow" not in own:
        pytest_args = ["-m", "not slow", *pytest_args]

    print("🚀 Running lattice emission tests" + (" (with slow oracle runs)" if "--slow" in own else ""))
    print("=" * 60)

    results = []
    for path, description, timeout in SUITES:
        if not (ROOT / path).exists():
            print(f"⚠️  Test suite not found: {path}")
            results.append((path, False, 0.0))
            continue
        ok, elapsed = run_suite(path, description, timeout, pytest_args)
        results.append((path, ok, elapsed))

    print(f"\n{'=' * 60}")
    print("📊 Test Summary:")
    for path, ok, elapsed in results:
        print(f"   {'✅' if ok else '❌'} {path} ({elapsed:.1f}s)")
    failed = sum(1 for _, ok, _ in results if not ok)
    print(f"   📈 {len(results) - failed}/{len(results)} suites passed")
    print(f"{'=' * 60}")

    return 0 if failed == 0 else 1


def _split(argv):
    """Runner flags before ``--``, pytest arguments after it."""
    if "--" in argv:
        i = argv.index("--")
        return argv[:i], argv[i + 1:]
    return argv, []


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
