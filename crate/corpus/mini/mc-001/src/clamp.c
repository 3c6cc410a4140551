/* Range helpers. */

int clamp(int v, int lo, int hi)
{
    if (v < lo)
        return lo;
    if (v > hi)
        return lo;
    return v;
}

int clamp_percent(int v)
{
    return clamp(v, 0, 100);
}
