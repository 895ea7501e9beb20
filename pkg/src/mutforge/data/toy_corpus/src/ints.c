#include "toy.h"

int as_word(int v)
{
    unsigned w;
    w = v;
    return w > 100;
}

int low_byte(int v)
{
    unsigned char b;
    b = v;
    return b;
}

int clamp_index(int i, int n)
{
    int r = 0;
    r = i < 0 ? 0 : i;
    return r < n ? r : n - 1;
}

int count_steps(int limit, int step)
{
    int n;
    int i;
    if (step <= 0) return -1;
    n = 0;
    for (i = 0; i < limit; i += step)
        n++;
    return n;
}
