#!/usr/bin/env python
"""
Test runner for the svl application.

Runs each test class in its own `manage.py test` process so one slow or
crashing class does not hide the results of the others. The desk-scale
acceptance runs are tagged "slow" and only run with --slow.
"""

import subprocess
import sys

# Test classes in the svl.tests module
TEST_CLASSES = [
    "svl.tests.AutodiffTests",
    "svl.tests.NeuronTests",
    "svl.tests.GeometryTests",
    "svl.tests.EncoderTests",
    "svl.tests.AlignmentTests",
    "svl.tests.RepVLITests",
    "svl.tests.EnergyTests",
    "svl.tests.DataTests",
    "svl.tests.TrainerTests",
    "svl.tests.ConfigTests",
    "svl.tests.CommandTests",
]

SLOW_CLASSES = [
    "svl.tests.AcceptanceTests",
]

FAST_TIMEOUT = 300
SLOW_TIMEOUT = 3600


def run_tests(verbosity=1, test_pattern=None, slow=False):
    """Run all test classes individually.

    Args:
        verbosity: Django test verbosity level (0, 1, or 2)
        test_pattern: Optional pattern to filter test classes (e.g. "Neuron")
        slow: Also run the classes tagged "slow"
    """

    total_passed = 0
    total_failed = 0
    failed_classes = []

    print("=" * 70)
    print("Running SVL Tests (Sequential Mode)")
    print("=" * 70)

    candidates = TEST_CLASSES + (SLOW_CLASSES if slow else [])
    classes_to_run = candidates
    if test_pattern:
        classes_to_run = [c for c in candidates if test_pattern.lower() in c.lower()]
        if not classes_to_run:
            print(f"No test classes match pattern: {test_pattern}")
            return 1

    for test_class in classes_to_run:
        class_name = test_class.split(".")[-1]
        timeout = SLOW_TIMEOUT if test_class in SLOW_CLASSES else FAST_TIMEOUT
        command = [sys.executable, "manage.py", "test", test_class, "-v", str(verbosity)]
        if test_class not in SLOW_CLASSES:
            command += ["--exclude-tag", "slow"]
        print(f"\n[Running] {class_name}...", end=" ", flush=True)

        try:
            result = subprocess.run(command, capture_output=True, text=True, timeout=timeout)

            if result.returncode == 0:
                # The test runner reports "Ran N tests" on stderr
                output_lines = (result.stderr + result.stdout).strip().split("\n")
                for line in output_lines:
                    if line.startswith("Ran ") and "test" in line:
                        print(f"✓ {line.strip()}")
                        try:
                            total_passed += int(line.split()[1])
                        except (ValueError, IndexError):
                            pass
                        break
                else:
                    print("✓ OK")
                    total_passed += 1
            else:
                print("✗ FAILED")
                print(result.stdout)
                print(result.stderr)
                failed_classes.append(test_class)
                total_failed += 1

        except subprocess.TimeoutExpired:
            print(f"✗ TIMEOUT ({timeout}s)")
            failed_classes.append(test_class)
            total_failed += 1

        except Exception as e:
            print(f"✗ ERROR: {e}")
            failed_classes.append(test_class)
            total_failed += 1

    print("\n" + "=" * 70)
    print(f"Results: {total_passed} passed, {total_failed} failed")
    if failed_classes:
        print("\nFailed classes:")
        for cls in failed_classes:
            print(f"  - {cls}")
    print("=" * 70)

    return 0 if total_failed == 0 else 1


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Run SVL tests sequentially")
    parser.add_argument(
        "-v", "--verbosity", type=int, default=1, choices=[0, 1, 2], help="Test verbosity level"
    )
    parser.add_argument("-p", "--pattern", help="Filter test classes by pattern")
    parser.add_argument(
        "--slow", action="store_true", help="Include the desk-scale acceptance runs"
    )
    args = parser.parse_args()

    sys.exit(run_tests(verbosity=args.verbosity, test_pattern=args.pattern, slow=args.slow))
