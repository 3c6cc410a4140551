#!/usr/bin/env python3
"""Writes the mini corpus, its mock response script and the fixtures derived from it.

Every file is produced from the tables below, so the expected outcomes, spans and summary
statistics are computed here from the scripted intent, independently of the harness.

Usage: python3 corpus/mini/build_fixtures.py   (from the repository root)
"""

import json
import math
import os
import statistics

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(os.path.dirname(HERE))
FIXTURES = os.path.join(ROOT, "crates", "core", "tests", "fixtures")

FORMATS = ["mask_hunk", "mask_func", "report_hunk", "report_func"]
MASK = ">>> INFILL <<<"

# Letter codes for scripted samples.
#   function formats: F fixed, A alternative fix, M restated bug then fix, W wrong fix,
#                     B does not compile, O unchanged buggy code, X prose only, T never terminates
#   hunk formats:     F fixed, W wrong, B does not compile, O unchanged, X prose only,
#                     N anchor absent from the function, C wrong number of filled masks
STATUS = {
    "F": "plausible", "A": "plausible", "M": "plausible",
    "W": "test_fail", "O": "test_fail",
    "B": "compile_error",
    "X": "extraction_error", "C": "extraction_error",
    "N": "apply_error",
    "T": "timeout",
}

# Base per-token log-probability of scripted responses, per format. Report-Func answers are
# the most probable, Mask-Hunk answers the least.
BASE_LOGPROB = {"report_func": -0.30, "mask_func": -1.10, "report_hunk": -2.10, "mask_hunk": -2.15}
PROMPT_LOGPROB = -1.60

C_CHECK = """\
static int failures = 0;

static void check(const char *name, long got, long expected)
{
    if (got == expected) {
        printf("ok: %s\\n", name);
    } else {
        printf("FAIL: %s: expected %ld but got %ld\\n", name, expected, got);
        failures++;
    }
}
"""

PY_CHECK = """\
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
"""


def c_test(include, checks, header="#include <stdio.h>", helpers=""):
    body = "\n".join(f"    check({c});" for c in checks)
    return (
        f'{header}\n#include "../src/{include}"\n\n{helpers}{C_CHECK}\n'
        f"int main(void)\n{{\n{body}\n    return failures ? 1 : 0;\n}}\n"
    )


def py_test(module, names, checks):
    body = "\n".join(f"run({c})" for c in checks)
    return (
        "import os\nimport sys\n\n"
        'sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))\n\n'
        f"from {module} import {names}  # noqa: E402\n\n{PY_CHECK}\n\n{body}\n"
        "sys.exit(1 if failures else 0)\n"
    )


BUGS = [
    {
        "id": "mc-001",
        "language": "c_like",
        "target": "src/clamp.c",
        "name": "clamp",
        "fence": "c",
        "prefix": "/* Range helpers. */\n\n",
        "function": [
            "int clamp(int v, int lo, int hi)",
            "{",
            "    if (v < lo)",
            "        return lo;",
            "    if (v > hi)",
            "        return lo;",
            "    return v;",
            "}",
        ],
        "hunks": [
            {"line": 6, "fixed": ["        return hi;"], "wrong": ["        return v;"], "broken": ["        return hi"]},
        ],
        "alt": [
            "int clamp(int v, int lo, int hi)",
            "{",
            "    /* saturate at both ends */",
            "    return v < lo ? lo : (v > hi ? hi : v);",
            "}",
        ],
        "suffix": "\n\nint clamp_percent(int v)\n{\n    return clamp(v, 0, 100);\n}\n",
        "tests": (
            "tests/test_clamp.c",
            c_test("clamp.c", [
                '"test_clamp_high", clamp(15, 0, 10), 10',
                '"test_clamp_low", clamp(-3, 0, 10), 0',
                '"test_clamp_inside", clamp(5, 0, 10), 5',
                '"test_clamp_percent", clamp_percent(250), 100',
            ]),
        ),
        "command": "cc -std=c99 -o run_tests tests/test_clamp.c && ./run_tests",
        "doc": "Limits v to the closed range [lo, hi].",
        "failed_tests": [
            {"name": "test_clamp_high", "input": "clamp(15, 0, 10)", "expected": "10"},
            {"name": "test_clamp_percent", "input": "clamp_percent(250)", "expected": "100"},
        ],
        "messages": ["test_clamp_high: expected 10 but got 0", "test_clamp_percent: expected 100 but got 0"],
        "script": {
            "report_func": "WBXFWFAWFO",
            "mask_func": "WWBFWOXWFW",
            "report_hunk": "NWFBXWFOWN",
            "mask_hunk": "WXCBOWFXWB",
        },
    },
    {
        "id": "mc-002",
        "language": "c_like",
        "target": "src/braces.c",
        "name": "count_closing",
        "fence": "c",
        "prefix": "/* Counts closing braces that are not inside double quotes. */\n",
        "function": [
            "int count_closing(const char *s)",
            "{",
            '    const char *marker = "}"; /* the brace we look for: "}" */',
            "    int count = 0, quoted = 0;",
            "    for (int i = 1; s[i] != '\\0'; i++) {",
            "        if (s[i] == '\"')",
            "            quoted = !quoted;",
            "        else if (!quoted && s[i] == marker[0])",
            "            count++;",
            "    }",
            "    return count;",
            "}",
        ],
        "hunks": [
            {
                "line": 5,
                "fixed": ["    for (int i = 0; s[i] != '\\0'; i++) {"],
                "wrong": ["    for (int i = 0; s[i + 1] != '\\0'; i++) {"],
                "broken": ["    for (int i = 0; s[i] != '\\0'; i++ {"],
            },
        ],
        "alt": [
            "int count_closing(const char *s)",
            "{",
            "    int count = 0, quoted = 0;",
            "    for (; *s; s++) {",
            "        if (*s == '\"')",
            "            quoted = !quoted;",
            "        else if (!quoted && *s == '}')",
            "            count++;",
            "    }",
            "    return count;",
            "}",
        ],
        "suffix": "\n\nint is_balanced_tail(const char *s)\n{\n    return count_closing(s) > 0;\n}\n",
        "tests": (
            "tests/test_braces.c",
            c_test("braces.c", [
                '"test_leading_brace", count_closing("}"), 1',
                '"test_quoted_brace", count_closing("a}\\"}\\"}"), 2',
                '"test_tail_brace", count_closing("x}"), 1',
            ]),
        ),
        "command": "cc -std=c99 -o run_tests tests/test_braces.c && ./run_tests",
        "doc": "Counts the closing braces of s, skipping any that appear between double quotes.",
        "failed_tests": [{"name": "test_leading_brace", "input": 'count_closing("}")', "expected": "1"}],
        "messages": ["test_leading_brace: expected 1 but got 0"],
        "script": {
            "report_func": "OMWFBWFXWA",
            "mask_func": "WBOXWWBOXW",
            "report_hunk": "WNXBOWNXWB",
            "mask_hunk": "XWCBOWXBWC",
        },
    },
    {
        "id": "mc-003",
        "language": "c_like",
        "target": "src/factorial.c",
        "name": "factorial",
        "fence": "c",
        "prefix": "",
        "function": [
            "unsigned long factorial(unsigned n)",
            "{",
            "    unsigned long result = 0;",
            "    for (unsigned k = 2; k <= n; k++)",
            "        result *= k;",
            "    return result;",
            "}",
        ],
        "hunks": [
            {
                "line": 3,
                "fixed": ["    unsigned long result = 1;"],
                "wrong": ["    unsigned long result = n;"],
                "broken": ["    unsigned long result = 1"],
            },
        ],
        "alt": [
            "unsigned long factorial(unsigned n)",
            "{",
            "    return n < 2 ? 1 : n * factorial(n - 1);",
            "}",
        ],
        "suffix": "\n",
        "tests": (
            "tests/test_factorial.c",
            c_test("factorial.c", [
                '"test_factorial_zero", (long)factorial(0), 1',
                '"test_factorial_five", (long)factorial(5), 120',
            ]),
        ),
        "command": "cc -std=c99 -o run_tests tests/test_factorial.c && ./run_tests",
        "doc": None,
        "failed_tests": [
            {"name": "test_factorial_zero", "input": "factorial(0)", "expected": "1"},
            {"name": "test_factorial_five", "input": "factorial(5)", "expected": "120"},
        ],
        "messages": [],
        "script": {
            "report_func": "WBXOWWBXOW",
            "mask_func": "WBWOXWBWOW",
            "report_hunk": "NWBXOWNBXW",
            "mask_hunk": "WCBXOWCBXW",
        },
    },
    {
        "id": "mc-004",
        "language": "c_like",
        "target": "src/peak.c",
        "name": "max_of",
        "fence": "c",
        "prefix": (
            "static int\nmax_of(const int *xs, int n);\n\n"
            "int peak_gap(const int *xs, int n, int ceiling)\n{\n    return ceiling - max_of(xs, n);\n}\n\n"
        ),
        "function": [
            "static int",
            "max_of(const int *xs, int n)",
            "{",
            "    int best = 0;",
            "    int i;",
            "    for (i = 1; i < n - 1; i++) {",
            "        if (xs[i] > best)",
            "            best = xs[i];",
            "    }",
            "    return best;",
            "}",
        ],
        "hunks": [
            {"line": 4, "fixed": ["    int best = xs[0];"], "wrong": ["    int best = xs[0];"], "broken": ["    int best = xs[0]"]},
            {
                "line": 6,
                "fixed": ["    for (i = 1; i < n; i++) {"],
                "wrong": ["    for (i = 1; i < n - 1; i++) {"],
                "broken": ["    for (i = 1; i < n; i++) {"],
            },
        ],
        "alt": [
            "static int",
            "max_of(const int *xs, int n)",
            "{",
            "    int best = xs[0];",
            "    for (int i = 1; i < n; i++)",
            "        best = xs[i] > best ? xs[i] : best;",
            "    return best;",
            "}",
        ],
        "suffix": "\n",
        "tests": (
            "tests/test_peak.c",
            c_test("peak.c", [
                '"test_all_negative", max_of((int[]){-5, -2, -9}, 3), -2',
                '"test_last_largest", max_of((int[]){1, 2, 7}, 3), 7',
                '"test_peak_gap", peak_gap((int[]){4, 9, 1}, 3, 10), 1',
            ]),
        ),
        "command": "cc -std=c99 -o run_tests tests/test_peak.c && ./run_tests",
        "doc": "Returns the largest of the n > 0 values in xs.",
        "failed_tests": [
            {"name": "test_all_negative", "input": "max_of({-5, -2, -9}, 3)", "expected": "-2"},
            {"name": "test_last_largest", "input": "max_of({1, 2, 7}, 3)", "expected": "7"},
        ],
        "messages": ["test_all_negative: expected -2 but got 0", "test_last_largest: expected 7 but got 2"],
        "script": {
            "report_func": "FWFBAXWFOW",
            "mask_func": "WFWBOXWFWO",
            "report_hunk": "WNBXFWOWNB",
            "mask_hunk": "CWXBOFWXCB",
        },
    },
    {
        "id": "mc-005",
        "language": "c_like",
        "target": "src/ring_buffer.cpp",
        "name": "size",
        "fence": "cpp",
        "prefix": (
            "#include <vector>\n\n"
            "class RingBuffer {\n"
            "public:\n"
            "    explicit RingBuffer(int cap) : buf_(cap), cap_(cap) {}\n\n"
            "    void push(int v) {\n"
            "        buf_[tail_] = v;\n"
            "        tail_ = (tail_ + 1) % cap_;\n"
            "        if (count_ < cap_)\n"
            "            count_++;\n"
            "        else\n"
            "            head_ = (head_ + 1) % cap_;\n"
            "    }\n\n"
        ),
        "function": [
            "    int size() const {",
            "        return (tail_ - head_) % cap_;",
            "    }",
        ],
        "hunks": [
            {
                "line": 2,
                "fixed": ["        return count_;"],
                "wrong": ["        return (tail_ - head_ + cap_) % cap_;"],
                "broken": ["        return count_"],
            },
        ],
        "alt": [
            "    int size() const {",
            "        return count_ < cap_ ? count_ : cap_;",
            "    }",
        ],
        "suffix": (
            "\n\nprivate:\n"
            "    std::vector<int> buf_;\n"
            "    int cap_;\n"
            "    int head_ = 0;\n"
            "    int tail_ = 0;\n"
            "    int count_ = 0;\n"
            "};\n"
        ),
        "tests": (
            "tests/test_ring.cpp",
            c_test("ring_buffer.cpp", [
                '"test_partial", partial(), 2',
                '"test_full_buffer", full(), 3',
                '"test_overwritten", overwritten(), 3',
            ], header="#include <cstdio>", helpers=(
                "static long fill(int cap, int n)\n{\n    RingBuffer rb(cap);\n"
                "    for (int i = 0; i < n; i++)\n        rb.push(i);\n    return rb.size();\n}\n\n"
                "static long partial() { return fill(3, 2); }\n"
                "static long full() { return fill(3, 3); }\n"
                "static long overwritten() { return fill(3, 5); }\n\n"
            )),
        ),
        "command": "c++ -std=c++17 -o run_tests tests/test_ring.cpp && ./run_tests",
        "doc": "Number of elements currently stored; never exceeds the capacity.",
        "failed_tests": [
            {"name": "test_full_buffer", "input": "push 0, 1, 2 into a RingBuffer(3); size()", "expected": "3"},
        ],
        "messages": ["test_full_buffer: expected 3 but got 0"],
        "script": {
            "report_func": "WBOXWBAWWW",
            "mask_func": "WBOXWBOWXW",
            "report_hunk": "NXWBOWNXBW",
            "mask_hunk": "WXCBOWXCBW",
        },
    },
    {
        "id": "mc-006",
        "language": "c_like",
        "target": "src/gcd.c",
        "name": "gcd",
        "fence": "c",
        "prefix": "/* Euclid's algorithm. */\n",
        "function": [
            "int gcd(int a, int b)",
            "{",
            "    while (b != 0) {",
            "        int t = a % b;",
            "        a = b;",
            "        b = t;",
            "    }",
            "    return b;",
            "}",
        ],
        "hunks": [
            {"line": 8, "fixed": ["    return a;"], "wrong": ["    return a + 1;"], "broken": ["    return a"]},
        ],
        "alt": [
            "int gcd(int a, int b)",
            "{",
            "    return b == 0 ? a : gcd(b, a % b);",
            "}",
        ],
        "diverges": [
            "int gcd(int a, int b)",
            "{",
            "    while (a != b) {",
            "        if (a > b)",
            "            a -= b;",
            "        else",
            "            b -= a;",
            "    }",
            "    return a;",
            "}",
        ],
        "suffix": "\n",
        "tests": (
            "tests/test_gcd.c",
            c_test("gcd.c", [
                '"test_gcd_common", gcd(12, 8), 4',
                '"test_gcd_zero", gcd(5, 0), 5',
                '"test_gcd_coprime", gcd(7, 13), 1',
            ]),
        ),
        "command": "cc -std=c99 -o run_tests tests/test_gcd.c && ./run_tests",
        "doc": "Greatest common divisor of two non-negative integers; gcd(a, 0) is a.",
        "failed_tests": [
            {"name": "test_gcd_common", "input": "gcd(12, 8)", "expected": "4"},
            {"name": "test_gcd_zero", "input": "gcd(5, 0)", "expected": "5"},
        ],
        "messages": ["test_gcd_common: expected 4 but got 0"],
        "timeout_seconds": 10,
        "script": {
            "report_func": "TWFBOAXWFW",
            "mask_func": "WBOWFXWOBW",
            "report_hunk": "WBNFXWOBNW",
            "mask_hunk": "XCWBOWXCBW",
        },
    },
    {
        "id": "mc-007",
        "language": "python_like",
        "target": "src/stats.py",
        "name": "median",
        "fence": "python",
        "prefix": '"""Small descriptive statistics."""\n\n\n',
        "function": [
            "def median(values):",
            '    """Middle value of a non-empty sequence."""',
            "    ordered = list(values)",
            "    mid = len(ordered) // 2",
            "    if len(ordered) % 2:",
            "        return ordered[mid]",
            "    return (ordered[mid - 1] + ordered[mid]) / 2",
        ],
        "hunks": [
            {
                "line": 3,
                "fixed": ["    ordered = sorted(values)"],
                "wrong": ["    ordered = list(reversed(values))"],
                "broken": ["    ordered = sorted(values"],
            },
        ],
        "alt": [
            "def median(values):",
            "    ordered = sorted(values)",
            "    n = len(ordered)",
            "    half = n // 2",
            "    return ordered[half] if n % 2 else (ordered[half - 1] + ordered[half]) / 2",
        ],
        "suffix": "\n\n\ndef mean(values):\n    return sum(values) / len(values)\n",
        "tests": (
            "tests/test_stats.py",
            py_test("stats", "mean, median", [
                '"test_odd_unsorted", lambda: median([3, 1, 2]), 2',
                '"test_even_unsorted", lambda: median([4, 1, 3, 2]), 2.5',
                '"test_mean", lambda: mean([1, 2, 3]), 2',
            ]),
        ),
        "command": "python3 tests/test_stats.py",
        "doc": "Returns the middle value of a non-empty sequence, averaging the two middle values when the length is even.",
        "failed_tests": [
            {"name": "test_odd_unsorted", "input": "median([3, 1, 2])", "expected": "2"},
            {"name": "test_even_unsorted", "input": "median([4, 1, 3, 2])", "expected": "2.5"},
        ],
        "messages": ["AssertionError: test_odd_unsorted: expected 2 but got 1"],
        "script": {
            "report_func": "WFAXBOFWMW",
            "mask_func": "WOXWBFWOWX",
            "report_hunk": "NWXBOWNXWF",
            "mask_hunk": "CWXBOWFXCW",
        },
    },
    {
        "id": "mc-008",
        "language": "python_like",
        "target": "src/text.py",
        "name": "is_palindrome",
        "fence": "python",
        "prefix": "",
        "function": [
            "def is_palindrome(text):",
            "    cleaned = [c.lower() for c in text if c.isalnum()]",
            "    return cleaned == cleaned[::-1][1:]",
        ],
        "hunks": [
            {
                "line": 3,
                "fixed": ["    return cleaned == cleaned[::-1]"],
                "wrong": ["    return cleaned == sorted(cleaned)"],
                "broken": ["    return cleaned == cleaned[::-1"],
            },
        ],
        "alt": [
            "def is_palindrome(text):",
            '    cleaned = "".join(c.lower() for c in text if c.isalnum())',
            "    return cleaned == cleaned[::-1]",
        ],
        "suffix": "\n",
        "tests": (
            "tests/test_text.py",
            py_test("text", "is_palindrome", [
                '"test_simple", lambda: is_palindrome("level"), True',
                '"test_phrase", lambda: is_palindrome("Never odd or even"), True',
                '"test_not_palindrome", lambda: is_palindrome("harness"), False',
            ]),
        ),
        "command": "python3 tests/test_text.py",
        "doc": None,
        "failed_tests": [],
        "messages": ["AssertionError: test_simple: expected True but got False"],
        "script": {
            "report_func": "XWBOWXBWOW",
            "mask_func": "WOXBWWOXBW",
            "report_hunk": "WNXBOWNXBW",
            "mask_hunk": "WXCBOWXCBW",
        },
    },
    {
        "id": "mc-009",
        "language": "python_like",
        "target": "src/shapes.py",
        "name": "area",
        "fence": "python",
        "prefix": (
            "class Rect:\n"
            "    def __init__(self, width, height):\n"
            "        self.width = width\n"
            "        self.height = height\n\n"
        ),
        "function": [
            "    @property",
            "    def area(self):",
            "        return self.width + self.height",
        ],
        "hunks": [
            {
                "line": 3,
                "fixed": ["        return self.width * self.height"],
                "wrong": ["        return 2 * (self.width + self.height)"],
                "broken": ["        return self.width * self.height)"],
            },
        ],
        "alt": [
            "    @property",
            "    def area(self):",
            "        w, h = self.width, self.height",
            "        return w * h",
        ],
        "suffix": "\n\n    def scaled(self, k):\n        return Rect(self.width * k, self.height * k)\n",
        "tests": (
            "tests/test_shapes.py",
            py_test("shapes", "Rect", [
                '"test_area", lambda: Rect(3, 4).area, 12',
                '"test_scaled_area", lambda: Rect(1, 2).scaled(3).area, 18',
            ]),
        ),
        "command": "python3 tests/test_shapes.py",
        "doc": "Area of the rectangle.",
        "failed_tests": [
            {"name": "test_area", "input": "Rect(3, 4).area", "expected": "12"},
            {"name": "test_scaled_area", "input": "Rect(1, 2).scaled(3).area", "expected": "18"},
        ],
        "messages": [],
        "script": {
            "report_func": "AFWXBFOWFW",
            "mask_func": "WFBOXWWFWO",
            "report_hunk": "WNFBXOWNFW",
            "mask_hunk": "FWXCBOWXCW",
        },
    },
    {
        "id": "mc-010",
        "language": "python_like",
        "target": "src/weights.py",
        "name": "weighted_sum",
        "fence": "python",
        "prefix": "import math\n\n\n",
        "function": [
            "def weighted_sum(",
            "    values,",
            "    weights,",
            "    default=0,",
            "):",
            "    total = default",
            "    for v, w in zip(values, weights):",
            "        total += v + w",
            "    return total",
        ],
        "hunks": [
            {
                "line": 8,
                "fixed": ["        total += v * w"],
                "wrong": ["        total = v * w"],
                "broken": ["        total += v * w:"],
            },
        ],
        "alt": [
            "def weighted_sum(values, weights, default=0):",
            "    return default + sum(v * w for v, w in zip(values, weights))",
        ],
        "suffix": "\n\n\ndef norm(values):\n    return math.sqrt(weighted_sum(values, values))\n",
        "tests": (
            "tests/test_weights.py",
            py_test("weights", "norm, weighted_sum", [
                '"test_weighted", lambda: weighted_sum([1, 2], [3, 4]), 11',
                '"test_default", lambda: weighted_sum([], [], default=5), 5',
                '"test_norm", lambda: norm([3, 4]), 5.0',
            ]),
        ),
        "command": "python3 tests/test_weights.py",
        "doc": "Sum of values[i] * weights[i], starting from default.",
        "failed_tests": [
            {"name": "test_weighted", "input": "weighted_sum([1, 2], [3, 4])", "expected": "11"},
            {"name": "test_norm", "input": "norm([3, 4])", "expected": "5.0"},
        ],
        "messages": ["test_weighted: expected 11 but got 10"],
        "script": {
            "report_func": "WBXOFAWFWB",
            "mask_func": "WBXOWWBXOF",
            "report_hunk": "NXWBOWNXBW",
            "mask_hunk": "WCXBOWCXBW",
        },
    },
]


def apply_hunks(lines, hunks, key):
    out = list(lines)
    for h in sorted(hunks, key=lambda h: h["line"], reverse=True):
        out[h["line"] - 1:h["line"]] = h[key]
    return out


def fence(tag, text):
    return f"```{tag}\n{text}\n```"


def function_response(bug, code):
    fn = "\n".join(bug["function"])
    fixed = "\n".join(apply_hunks(bug["function"], bug["hunks"], "fixed"))
    tag = bug["fence"]
    name = bug["name"]
    if code == "F":
        return f"The defect is in `{name}`. Here is the corrected function:\n\n{fence(tag, fixed)}\n"
    if code == "A":
        return f"A simpler correct version:\n\n{fence(tag, chr(10).join(bug['alt']))}\n"
    if code == "M":
        return (
            f"The original code:\n\n{fence(tag, fn)}\n\nhas a logic error. Fixed:\n\n{fence(tag, fixed)}\n"
        )
    if code == "W":
        return fence(tag, "\n".join(apply_hunks(bug["function"], bug["hunks"], "wrong"))) + "\n"
    if code == "B":
        return f"Corrected:\n{fence(tag, chr(10).join(apply_hunks(bug['function'], bug['hunks'], 'broken')))}\n"
    if code == "O":
        return f"The function already looks right to me:\n\n{fence(tag, fn)}\n"
    if code == "X":
        return f"I could not find a defect in `{name}`; the failure is probably caused by the tests.\n"
    if code == "T":
        return f"Use the subtraction form of Euclid's algorithm:\n\n{fence(tag, chr(10).join(bug['diverges']))}\n"
    raise ValueError(f"{bug['id']}: code {code} not valid for a function format")


def unique_context(function, line):
    """Lines preceding `line` needed to make the search block occur once in the function."""
    for k in range(line):
        window = function[line - 1 - k:line]
        hits = sum(function[i:i + len(window)] == window for i in range(len(function)))
        if hits == 1:
            return function[line - 1 - k:line - 1]
    raise ValueError("hunk line cannot be anchored uniquely")


def search_replace_response(bug, code):
    tag = bug["fence"]
    if code == "X":
        return "The hunk is correct as written; no change is needed.\n"
    blocks = []
    for h in bug["hunks"]:
        context = unique_context(bug["function"], h["line"])
        original = [bug["function"][h["line"] - 1]]
        search, replace = {
            "F": (context + original, context + h["fixed"]),
            "W": (context + original, context + h["wrong"]),
            "B": (context + original, context + h["broken"]),
            "O": (context + original, context + original),
            "N": (h["fixed"], h["fixed"]),
        }[code]
        blocks.append("\n".join(["<<<<<<< SEARCH", *search, "=======", *replace, ">>>>>>> REPLACE"]))
    return fence(tag, "\n".join(blocks)) + "\n"


def infill_response(bug, code):
    tag = bug["fence"]
    if code == "X":
        return "The masked statement cannot be determined from the report.\n"
    hunks = bug["hunks"]
    if code == "C":
        count = 1 if len(hunks) > 1 else 2
        segs = [[MASK, *hunks[0]["fixed"]] for _ in range(count)]
    else:
        key = {"F": "fixed", "W": "wrong", "B": "broken"}.get(code)
        segs = [[MASK, *(h[key] if key else [bug["function"][h["line"] - 1]])] for h in hunks]
    return fence(tag, "\n".join(line for seg in segs for line in seg)) + "\n"


def respond(bug, fmt, code):
    if fmt in ("report_func", "mask_func"):
        return function_response(bug, code)
    if fmt == "report_hunk":
        return search_replace_response(bug, code)
    return infill_response(bug, code)


class Lcg:
    """Deterministic noise source, so the script is reproducible without seeding a library RNG."""

    def __init__(self, seed):
        self.state = seed

    def uniform(self, lo, hi):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) % (1 << 64)
        return lo + (hi - lo) * (self.state >> 11) / float(1 << 53)


def tokens(text):
    return [text[i:i + 4] for i in range(0, len(text), 4)]


def scored(rng, toks, base):
    return [[t, round(min(-0.01, base + rng.uniform(-0.25, 0.25)), 6)] for t in toks]


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def pstd(xs):
    return statistics.pstdev(xs) if xs else None


def mean(xs):
    return sum(xs) / len(xs) if xs else None


def main():
    script = {}
    outcomes = {}
    spans = {}
    rng = Lcg(20240501)
    for bug in BUGS:
        bundle = os.path.join(HERE, bug["id"])
        fn = "\n".join(bug["function"])
        source = bug["prefix"] + fn + bug["suffix"]
        write(os.path.join(bundle, bug["target"]), source)
        write(os.path.join(bundle, bug["tests"][0]), bug["tests"][1])
        base_line = bug["prefix"].count("\n")
        fixed = "\n".join(apply_hunks(bug["function"], bug["hunks"], "fixed"))
        manifest = {
            "id": bug["id"],
            "language": bug["language"],
            "target_file": bug["target"],
            "function_name": bug["name"],
        }
        if bug["doc"]:
            manifest["doc_text"] = bug["doc"]
        if bug["failed_tests"]:
            manifest["failed_tests"] = bug["failed_tests"]
        if bug["messages"]:
            manifest["error_messages"] = bug["messages"]
        manifest["test_command"] = bug["command"]
        manifest["known_hunks"] = [
            {"start_line": base_line + h["line"], "end_line": base_line + h["line"]} for h in bug["hunks"]
        ]
        manifest["reference_fix"] = fixed
        if "timeout_seconds" in bug:
            manifest["timeout_seconds"] = bug["timeout_seconds"]
        write(os.path.join(bundle, "bug.json"), json.dumps(manifest, indent=2) + "\n")

        start = len(bug["prefix"].encode())
        spans[bug["id"]] = {
            "start_offset": start,
            "end_offset": start + len(fn.encode()),
            "header_line": base_line + 1,
            "signature": bug["function"][0],
        }
        if bug["id"] == "mc-001":
            write(os.path.join(FIXTURES, "mc-001.fixed.c"), bug["prefix"] + fixed + bug["suffix"])

        outcomes[bug["id"]] = {}
        for fmt in FORMATS:
            codes = bug["script"][fmt]
            assert len(codes) == 10, (bug["id"], fmt)
            prompt_scores = scored(rng, [f"p{i}" for i in range(24)], PROMPT_LOGPROB)
            statuses = []
            output_tokens = 0
            for i, code in enumerate(codes):
                text = respond(bug, fmt, code)
                script[f"{bug['id']}/{fmt}/{i}"] = {
                    "text": text,
                    "token_scores": scored(rng, tokens(text), BASE_LOGPROB[fmt]),
                    "prompt_scores": prompt_scores,
                }
                statuses.append(STATUS[code])
                output_tokens += math.ceil(len(text.encode()) / 4)
            plausible = [i + 1 for i, s in enumerate(statuses) if s == "plausible"]
            outcomes[bug["id"]][fmt] = {
                "statuses": statuses,
                "first_plausible_index": plausible[0] if plausible else None,
                "plausible_count": len(plausible),
                "reference_match": any(c in "FM" for c in codes),
                "output_tokens": output_tokens,
            }

    summary = {}
    for fmt in FORMATS:
        runs = [outcomes[b["id"]][fmt] for b in BUGS]
        firsts = [r["first_plausible_index"] for r in runs if r["first_plausible_index"]]
        counts = [r["plausible_count"] for r in runs if r["plausible_count"]]
        o_ppl = []
        for b in BUGS:
            for i in range(10):
                lps = [lp for _, lp in script[f"{b['id']}/{fmt}/{i}"]["token_scores"]]
                o_ppl.append(math.exp(-sum(lps) / len(lps)))
        summary[fmt] = {
            "bugs": len(runs),
            "plausible_bugs": len(firsts),
            "reference_matches": sum(1 for r in runs if r["reference_match"]),
            "mean_first_plausible_index": mean(firsts),
            "std_first_plausible_index": pstd(firsts),
            "mean_plausible_patches": mean(counts),
            "std_plausible_patches": pstd(counts),
            "samples_issued": 10 * len(runs),
            "output_tokens": sum(r["output_tokens"] for r in runs),
            "mean_output_ppl": mean(o_ppl),
        }

    entries = ",\n".join(f" {json.dumps(k)}: {json.dumps(script[k])}" for k in sorted(script))
    write(os.path.join(HERE, "mock_script.json"), "{\n" + entries + "\n}\n")
    write(os.path.join(HERE, "expected_spans.json"), json.dumps(spans, indent=2, sort_keys=True) + "\n")
    write(os.path.join(HERE, "expected_outcomes.json"), json.dumps(outcomes, indent=2, sort_keys=True) + "\n")
    write(os.path.join(HERE, "expected_summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
