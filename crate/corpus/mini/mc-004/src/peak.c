static int
max_of(const int *xs, int n);

int peak_gap(const int *xs, int n, int ceiling)
{
    return ceiling - max_of(xs, n);
}

static int
max_of(const int *xs, int n)
{
    int best = 0;
    int i;
    for (i = 1; i < n - 1; i++) {
        if (xs[i] > best)
            best = xs[i];
    }
    return best;
}
