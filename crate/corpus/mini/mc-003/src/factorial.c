unsigned long factorial(unsigned n)
{
    unsigned long result = 0;
    for (unsigned k = 2; k <= n; k++)
        result *= k;
    return result;
}
