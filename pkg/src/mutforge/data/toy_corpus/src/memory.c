#include "toy.h"

void release(Object *o)
{
    Py_DECREF(o);
}

int locked_increment(Counter *c)
{
    pthread_mutex_lock(&c->mu);
    c->value++;
    return pthread_mutex_unlock(&c->mu);
}

int first_value(const int *p)
{
    if (p == NULL) return 0;
    return *p;
}

int list_length(const Node *head)
{
    int n;
    if (!head) return 0;
    for (n = 0; head; head = head->next)
        n++;
    return n;
}
