"""Pure-Python scheduling kernels.

Mirror of ``_ckernels.pyx``; used when the compiled extension is missing or
``EDGESPEC_PURE=1`` is set. All arguments and results are integer
microseconds.
"""

BACKEND = "python"


def dp_table(n, alpha, beta, gamma):
    """Fill the optimal-batching table for a window of ``n`` tokens.

    Returns ``(dp, prev, ops)`` where ``dp[j]`` is the minimal completion
    time of the first ``j`` tokens, ``prev[j]`` the start offset of the last
    batch in that optimum and ``ops`` the number of inner-loop evaluations.
    """
    inf = float("inf")
    dp = [0] + [inf] * n
    prev = [-1] * (n + 1)
    ops = 0
    for j in range(1, n + 1):
        ready = gamma * j
        best = dp[j]
        arg = -1
        for i in range(j):
            start = dp[i] if dp[i] > ready else ready
            temp = start + alpha + beta * (j - i)
            ops += 1
            # strict < keeps the smallest i among ties
            if temp < best:
                best = temp
                arg = i
        dp[j] = best
        prev[j] = arg
    return dp, prev, ops


def timeline(boundaries, n, alpha, beta, gamma):
    """Per-batch ``(gen_start, gen_end, comm_start, comm_end)`` records."""
    out = []
    k_count = len(boundaries)
    gen_start = 0
    comm_end_prev = 0
    for k in range(k_count):
        b = boundaries[k]
        nxt = boundaries[k + 1] if k + 1 < k_count else n + 1
        size = nxt - b
        gen_end = gen_start + gamma * size
        comm_start = gen_end if k == 0 or gen_end > comm_end_prev else comm_end_prev
        comm_end = comm_start + alpha + beta * size
        out.append((gen_start, gen_end, comm_start, comm_end))
        gen_start = gen_end
        comm_end_prev = comm_end
    return out


def timeline_total(boundaries, n, alpha, beta, gamma):
    return timeline(boundaries, n, alpha, beta, gamma)[-1][3]


def brute_force(n, alpha, beta, gamma):
    """Exhaustively evaluate all ``2**(n-1)`` contiguous partitions.

    Ties are broken by fewest batches, then lexicographically smallest
    boundary tuple. Returns ``(boundaries, total)``.
    """
    best_key = None
    best_bounds = None
    for mask in range(1 << (n - 1)):
        bounds = [1]
        for t in range(n - 1):
            if mask >> t & 1:
                bounds.append(t + 2)
        total = timeline_total(bounds, n, alpha, beta, gamma)
        key = (total, len(bounds), bounds)
        if best_key is None or key < best_key:
            best_key = key
            best_bounds = bounds
    return tuple(best_bounds), best_key[0]


def greedy(n, alpha, beta, gamma):
    """Online policy: whenever the channel is idle, ship every finished token.

    Returns ``(boundaries, records)`` with records as in :func:`timeline`.
    """
    sent = 0
    channel_free = 0
    bounds = []
    records = []
    while sent < n:
        # earliest instant the channel is idle with at least one ready token
        first_ready = gamma * (sent + 1)
        t = channel_free if channel_free > first_ready else first_ready
        ready = t // gamma
        if ready > n:
            ready = n
        size = ready - sent
        gen_start = gamma * sent
        gen_end = gamma * ready
        comm_end = t + alpha + beta * size
        bounds.append(sent + 1)
        records.append((gen_start, gen_end, t, comm_end))
        sent = ready
        channel_free = comm_end
    return tuple(bounds), records
