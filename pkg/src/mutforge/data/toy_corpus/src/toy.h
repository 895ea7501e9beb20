#ifndef TOY_H
#define TOY_H

#include <limits.h>
#include <pthread.h>
#include <stddef.h>
#include <stdint.h>

typedef struct { int rank; int dims[4]; } Tensor;
typedef struct { const char *status; } Ctx;
typedef struct { int refcnt; } Object;
typedef struct { pthread_mutex_t mu; int value; } Counter;
typedef struct Node { struct Node *next; } Node;

#define OP_REQUIRES(ctx, cond, msg) \
    do { if (!(cond)) { (ctx)->status = (msg); return; } } while (0)
#define TF_LITE_ENSURE(ctx, cond) \
    do { if (!(cond)) { (ctx)->status = "ensure failed"; return -1; } } while (0)
#define Py_DECREF(o) ((o)->refcnt--)

void check_rank(Ctx *ctx, const Tensor *t);
void check_dims(Ctx *ctx, const Tensor *t);
int checked_add(Ctx *ctx, int a, int b);
void release(Object *o);
int locked_increment(Counter *c);
void total_elems(int rows, int cols, double *out);
int as_word(int v);
int low_byte(int v);
int first_value(const int *p);
int list_length(const Node *head);
int clamp_index(int i, int n);
int count_steps(int limit, int step);

#endif
