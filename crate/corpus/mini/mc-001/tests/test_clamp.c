#include <stdio.h>
#include "../src/clamp.c"

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
    check("test_clamp_high", clamp(15, 0, 10), 10);
    check("test_clamp_low", clamp(-3, 0, 10), 0);
    check("test_clamp_inside", clamp(5, 0, 10), 5);
    check("test_clamp_percent", clamp_percent(250), 100);
    return failures ? 1 : 0;
}
