# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scheduling kernels; same contracts as ``_pykernels``."""

from libc.stdlib cimport malloc, free

BACKEND = "cython"

ctypedef long long i64


cdef inline i64 _imax(i64 a, i64 b) nogil:
    return a if a > b else b


def dp_table(int n, i64 alpha, i64 beta, i64 gamma):
    cdef i64* dp = <i64*> malloc((n + 1) * sizeof(i64))
    cdef int* prev = <int*> malloc((n + 1) * sizeof(int))
    cdef i64 ops = 0
    cdef i64 best, temp, ready
    cdef int i, j, arg
    if dp == NULL or prev == NULL:
        free(dp)
        free(prev)
        raise MemoryError()
    try:
        dp[0] = 0
        prev[0] = -1
        for j in range(1, n + 1):
            ready = gamma * j
            best = -1
            arg = -1
            for i in range(j):
                temp = _imax(dp[i], ready) + alpha + beta * (j - i)
                ops += 1
                if best < 0 or temp < best:
                    best = temp
                    arg = i
            dp[j] = best
            prev[j] = arg
        return [dp[j] for j in range(n + 1)], [prev[j] for j in range(n + 1)], ops
    finally:
        free(dp)
        free(prev)


cdef i64 _total(int* bounds, int k_count, int n, i64 alpha, i64 beta, i64 gamma) nogil:
    cdef i64 gen_end = 0, comm_end = 0, start
    cdef int k, size, nxt
    for k in range(k_count):
        nxt = bounds[k + 1] if k + 1 < k_count else n + 1
        size = nxt - bounds[k]
        gen_end += gamma * size
        start = gen_end if k == 0 else _imax(gen_end, comm_end)
        comm_end = start + alpha + beta * size
    return comm_end


def timeline(boundaries, int n, i64 alpha, i64 beta, i64 gamma):
    cdef list out = []
    cdef int k, k_count = len(boundaries), size, nxt
    cdef i64 gen_start = 0, gen_end, comm_start, comm_end_prev = 0, comm_end
    for k in range(k_count):
        nxt = boundaries[k + 1] if k + 1 < k_count else n + 1
        size = nxt - boundaries[k]
        gen_end = gen_start + gamma * size
        comm_start = gen_end if k == 0 else _imax(gen_end, comm_end_prev)
        comm_end = comm_start + alpha + beta * size
        out.append((gen_start, gen_end, comm_start, comm_end))
        gen_start = gen_end
        comm_end_prev = comm_end
    return out


def timeline_total(boundaries, int n, i64 alpha, i64 beta, i64 gamma):
    cdef int k_count = len(boundaries), k
    cdef int* bounds = <int*> malloc(k_count * sizeof(int))
    if bounds == NULL:
        raise MemoryError()
    try:
        for k in range(k_count):
            bounds[k] = boundaries[k]
        return _total(bounds, k_count, n, alpha, beta, gamma)
    finally:
        free(bounds)


def brute_force(int n, i64 alpha, i64 beta, i64 gamma):
    cdef int* bounds = <int*> malloc(n * sizeof(int))
    cdef int* best = <int*> malloc(n * sizeof(int))
    cdef int k_count, best_k = 0, t, k, cmp
    cdef long mask, n_masks = 1L << (n - 1)
    cdef i64 total, best_total = -1
    if bounds == NULL or best == NULL:
        free(bounds)
        free(best)
        raise MemoryError()
    try:
        for mask in range(n_masks):
            bounds[0] = 1
            k_count = 1
            for t in range(n - 1):
                if (mask >> t) & 1:
                    bounds[k_count] = t + 2
                    k_count += 1
            total = _total(bounds, k_count, n, alpha, beta, gamma)
            if best_total >= 0:
                if total > best_total:
                    continue
                if total == best_total:
                    if k_count > best_k:
                        continue
                    if k_count == best_k:
                        cmp = 0
                        for k in range(k_count):
                            if bounds[k] != best[k]:
                                cmp = -1 if bounds[k] < best[k] else 1
                                break
                        if cmp >= 0:
                            continue
            best_total = total
            best_k = k_count
            for k in range(k_count):
                best[k] = bounds[k]
        return tuple(best[k] for k in range(best_k)), best_total
    finally:
        free(bounds)
        free(best)


def greedy(int n, i64 alpha, i64 beta, i64 gamma):
    cdef int sent = 0, ready
    cdef i64 channel_free = 0, first_ready, t, comm_end
    bounds = []
    records = []
    while sent < n:
        first_ready = gamma * (sent + 1)
        t = _imax(channel_free, first_ready)
        ready = <int> (t // gamma)
        if ready > n:
            ready = n
        comm_end = t + alpha + beta * (ready - sent)
        bounds.append(sent + 1)
        records.append((gamma * sent, gamma * ready, t, comm_end))
        sent = ready
        channel_free = comm_end
    return tuple(bounds), records
