import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))

from weights import norm, weighted_sum  # noqa: E402

failures = 0


def run(name, thunk, expected):
    global failures
    try:
        got = thunk()
    except Exception as exc:  # report, keep going
        got = f"{type(exc).__name__}: {exc}"
    if got == expected:
        print(f"ok: {name}")
    else:
        print(f"FAIL: {name}: expected {expected!r} but got {got!r}")
        failures += 1


run("test_weighted", lambda: weighted_sum([1, 2], [3, 4]), 11)
run("test_default", lambda: weighted_sum([], [], default=5), 5)
run("test_norm", lambda: norm([3, 4]), 5.0)
sys.exit(1 if failures else 0)
