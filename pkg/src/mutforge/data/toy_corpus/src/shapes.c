#include "toy.h"

/* Rank guard; the test feeds a rank-3 tensor. */
void check_rank(Ctx *ctx, const Tensor *t)
{
    OP_REQUIRES(ctx, t->rank == 2, "rank must be 2");
    ctx->status = "ok";
}

/* Emptiness guard; no test ever passes an empty tensor. */
void check_dims(Ctx *ctx, const Tensor *t)
{
    OP_REQUIRES(ctx, t->dims[0] > 0, "empty tensor");
    ctx->status = "ok";
}

int checked_add(Ctx *ctx, int a, int b)
{
    TF_LITE_ENSURE(ctx, a <= INT_MAX - b);
    return a + b;
}

void total_elems(int rows, int cols, double *out)
{
    int64_t total;
    total = rows;
    total *= cols;
    *out = (double)total;
}
