"""Primal network simplex for the uncapacitated transportation problem.

Node layout: sources ``0..m-1``, sinks ``m..m+n-1``, artificial root ``m+n``.
Real arc ``e = i*n + j`` runs source ``i`` -> sink ``m+j``; artificial arc
``m*n + u`` joins node ``u`` to the root. The spanning tree is kept strongly
feasible (leaving arc chosen as the last blocking arc on the cycle), which
rules out cycling on the heavily degenerate assignment-type instances.
Potentials follow the convention ``reduced(e) = c(e) + pi[src] - pi[tgt]``.
"""

import numba as nb
import numpy as np

STATE_TREE = 0
STATE_LOWER = 1
UP = 1
DOWN = -1

# status codes
OPTIMAL = 0
MAX_ITER = 1
INFEASIBLE = 2

_EPS = 1e-14


@nb.njit(cache=True)
def _arc_src(e, n, n_arcs, art_src):
    if e < n_arcs:
        return e // n
    return art_src[e - n_arcs]


@nb.njit(cache=True)
def _arc_cost(e, n_arcs, cost, art_cost):
    if e < n_arcs:
        return cost[e]
    return art_cost[e - n_arcs]


@nb.njit(cache=True)
def _detach(w, parent, first_child, next_sib, prev_sib):
    p = parent[w]
    if prev_sib[w] != -1:
        next_sib[prev_sib[w]] = next_sib[w]
    else:
        first_child[p] = next_sib[w]
    if next_sib[w] != -1:
        prev_sib[next_sib[w]] = prev_sib[w]
    next_sib[w] = -1
    prev_sib[w] = -1


@nb.njit(cache=True)
def _attach(w, p, parent, first_child, next_sib, prev_sib):
    parent[w] = p
    head = first_child[p]
    next_sib[w] = head
    prev_sib[w] = -1
    if head != -1:
        prev_sib[head] = w
    first_child[p] = w


@nb.njit(cache=True)
def network_simplex(a, b, cost, max_iter):
    """Solve min <C, P> s.t. P 1 = a, P^T 1 = b, P >= 0.

    ``cost`` is the flattened (m*n,) cost matrix. Returns
    ``(flow (m*n,), f (m,), g (n,), iterations, status)`` where ``f_i + g_j <= c_ij``
    with equality on the support of the plan.
    """
    m = a.shape[0]
    n = b.shape[0]
    n_arcs = m * n
    N = m + n
    root = N

    cmax = 0.0
    for e in range(n_arcs):
        if abs(cost[e]) > cmax:
            cmax = abs(cost[e])
    art = (cmax + 1.0) * (N + 1)

    flow = np.zeros(n_arcs + N)
    state = np.full(n_arcs + N, STATE_LOWER, dtype=np.int8)
    art_src = np.empty(N, dtype=np.int64)
    art_cost = np.empty(N)

    parent = np.empty(N + 1, dtype=np.int64)
    pred = np.empty(N + 1, dtype=np.int64)
    pred_dir = np.zeros(N + 1, dtype=np.int64)
    depth = np.zeros(N + 1, dtype=np.int64)
    first_child = np.full(N + 1, -1, dtype=np.int64)
    next_sib = np.full(N + 1, -1, dtype=np.int64)
    prev_sib = np.full(N + 1, -1, dtype=np.int64)
    pi = np.zeros(N + 1)

    parent[root] = -1
    pred[root] = -1
    for u in range(N):
        e = n_arcs + u
        supply = a[u] if u < m else -b[u - m]
        state[e] = STATE_TREE
        pred[u] = e
        depth[u] = 1
        _attach(u, root, parent, first_child, next_sib, prev_sib)
        if supply >= 0:
            pred_dir[u] = UP
            art_src[u] = u
            art_cost[u] = 0.0
            flow[e] = supply
            pi[u] = 0.0
        else:
            pred_dir[u] = DOWN
            art_src[u] = root
            art_cost[u] = art
            flow[e] = -supply
            pi[u] = art

    block = int(np.sqrt(n_arcs))
    if block < 10:
        block = 10
    if block > n_arcs:
        block = n_arcs
    next_arc = 0

    path = np.empty(N + 1, dtype=np.int64)
    old_pred = np.empty(N + 1, dtype=np.int64)
    old_dir = np.empty(N + 1, dtype=np.int64)
    stack = np.empty(N + 1, dtype=np.int64)

    it = 0
    status = OPTIMAL
    while True:
        # -- pricing: block search over real arcs
        in_arc = -1
        best = 0.0
        cnt = block
        e = next_arc
        for _ in range(n_arcs):
            if state[e] == STATE_LOWER:
                i = e // n
                v = m + e - i * n
                c = cost[e] + pi[i] - pi[v]
                if c < best and c < -_EPS * (1.0 + abs(pi[i]) + abs(pi[v])):
                    best = c
                    in_arc = e
            e += 1
            if e == n_arcs:
                e = 0
            cnt -= 1
            if cnt == 0:
                if in_arc != -1:
                    break
                cnt = block
        if in_arc == -1:
            break
        next_arc = e
        if it >= max_iter:
            status = MAX_ITER
            break
        it += 1

        src = in_arc // n
        tgt = m + in_arc - src * n

        # -- join node of the cycle
        u = src
        v = tgt
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        join = u

        # -- leaving arc (strongly feasible rule)
        delta = np.inf
        u_out = -1
        result = 0
        u = src
        while u != join:
            if pred_dir[u] == UP:
                d = flow[pred[u]]
                if d < delta:
                    delta = d
                    u_out = u
                    result = 1
            u = parent[u]
        u = tgt
        while u != join:
            if pred_dir[u] == DOWN:
                d = flow[pred[u]]
                if d <= delta:
                    delta = d
                    u_out = u
                    result = 2
            u = parent[u]
        if result == 0:
            # unbounded cycle; cannot happen with finite supplies
            status = INFEASIBLE
            break
        if delta < 0.0:
            delta = 0.0

        # -- push flow around the cycle
        if delta > 0.0:
            flow[in_arc] += delta
            u = src
            while u != join:
                flow[pred[u]] -= pred_dir[u] * delta
                u = parent[u]
            u = tgt
            while u != join:
                flow[pred[u]] += pred_dir[u] * delta
                u = parent[u]
        leaving = pred[u_out]
        flow[leaving] = 0.0
        state[leaving] = STATE_LOWER
        state[in_arc] = STATE_TREE

        if result == 1:
            u_in = src
            v_in = tgt
        else:
            u_in = tgt
            v_in = src

        # -- re-hang the subtree at u_out below v_in, reversing the u_in..u_out path
        k = 0
        w = u_in
        path[0] = w
        while w != u_out:
            w = parent[w]
            k += 1
            path[k] = w
        for q in range(k + 1):
            w = path[q]
            old_pred[q] = pred[w]
            old_dir[q] = pred_dir[w]
            _detach(w, parent, first_child, next_sib, prev_sib)
        pred[u_in] = in_arc
        pred_dir[u_in] = UP if src == u_in else DOWN
        _attach(u_in, v_in, parent, first_child, next_sib, prev_sib)
        for q in range(1, k + 1):
            w = path[q]
            pred[w] = old_pred[q - 1]
            pred_dir[w] = -old_dir[q - 1]
            _attach(w, path[q - 1], parent, first_child, next_sib, prev_sib)

        # -- shift potentials and depths of the moved subtree
        sigma = pi[v_in] - pi[u_in] - pred_dir[u_in] * cost[in_arc]
        top = 0
        stack[0] = u_in
        top = 1
        while top > 0:
            top -= 1
            w = stack[top]
            pi[w] += sigma
            depth[w] = depth[parent[w]] + 1
            c_ = first_child[w]
            while c_ != -1:
                stack[top] = c_
                top += 1
                c_ = next_sib[c_]

    if status == OPTIMAL:
        residual = 0.0
        for u in range(N):
            residual += flow[n_arcs + u]
        if residual > 1e-9:
            status = INFEASIBLE

    # recompute potentials from the final tree instead of trusting accumulated shifts
    pi[root] = 0.0
    top = 0
    c_ = first_child[root]
    while c_ != -1:
        stack[top] = c_
        top += 1
        c_ = next_sib[c_]
    while top > 0:
        top -= 1
        w = stack[top]
        ce = _arc_cost(pred[w], n_arcs, cost, art_cost)
        if pred_dir[w] == UP:
            pi[w] = pi[parent[w]] - ce
        else:
            pi[w] = pi[parent[w]] + ce
        c_ = first_child[w]
        while c_ != -1:
            stack[top] = c_
            top += 1
            c_ = next_sib[c_]

    f = np.empty(m)
    g = np.empty(n)
    for i in range(m):
        f[i] = -pi[i]
    for j in range(n):
        g[j] = pi[m + j]
    return flow[:n_arcs].copy(), f, g, it, status
