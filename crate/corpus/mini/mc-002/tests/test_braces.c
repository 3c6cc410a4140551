#include <stdio.h>
#include "../src/braces.c"

static int failures = 0;

static void check(const char *name, long got, long expected)
{
    if (got == expected) {
        printf("ok: %s\n", name);
    } else {
        printf("FAIL: %s: expected %ld but got %ld\n", name, expected, got);
        failures++;
    }
}

int main(void)
{
    check("test_leading_brace", count_closing("}"), 1);
    check("test_quoted_brace", count_closing("a}\"}\"}"), 2);
    check("test_tail_brace", count_closing("x}"), 1);
    return failures ? 1 : 0;
}
