#include <stdio.h>
#include "../src/gcd.c"

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
    check("test_gcd_common", gcd(12, 8), 4);
    check("test_gcd_zero", gcd(5, 0), 5);
    check("test_gcd_coprime", gcd(7, 13), 1);
    return failures ? 1 : 0;
}
