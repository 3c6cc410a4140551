import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))

from text import is_palindrome  # noqa: E402

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


run("test_simple", lambda: is_palindrome("level"), True)
run("test_phrase", lambda: is_palindrome("Never odd or even"), True)
run("test_not_palindrome", lambda: is_palindrome("harness"), False)
sys.exit(1 if failures else 0)
