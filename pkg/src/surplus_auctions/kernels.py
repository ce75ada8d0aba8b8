"""Numeric inner loops: welfare maximisation and Clarke payments.

Every function here takes and returns plain numpy arrays so it can be compiled
by numba or run as ordinary Python (see ``_accel``). Agents excluded from a
solve are switched off through the boolean ``active`` mask rather than by
slicing, which keeps agent indices stable across the payment re-solves.

Unit-demand residual graph layout: nodes ``0..n-1`` are agents, ``n..n+m-1``
items and ``n+m`` the sink. Every active agent routes one unit of flow to the
sink, either through an item (cost ``-w[i, j]``) or directly ("unassigned",
cost 0). Items forward at most ``caps[j]`` units.
"""

import numpy as np

from ._accel import jit

INF = np.inf
NOT_PLACED = -2
UNASSIGNED = -1


@jit
def _relax(dist, pred, u, v, nd, eps):
    if nd < dist[v] - eps:
        dist[v] = nd
        pred[v] = u
        return True
    return False


@jit
def _bellman_ford(w, caps, assign, load, present, dist, pred, eps):
    # dist/pred are initialised by the caller; single- or multi-source.
    n, m = w.shape
    sink = n + m
    n_nodes = n + m + 1
    for _ in range(n_nodes):
        changed = False
        for u in range(n_nodes):
            du = dist[u]
            if du == INF:
                continue
            if u < n:
                if not present[u]:
                    continue
                a = assign[u]
                for j in range(m):
                    if a != j:
                        changed |= _relax(dist, pred, u, n + j, du - w[u, j], eps)
                if a != UNASSIGNED:
                    changed |= _relax(dist, pred, u, sink, du, eps)
            elif u < sink:
                j = u - n
                if load[j] < caps[j]:
                    changed |= _relax(dist, pred, u, sink, du, eps)
                for b in range(n):
                    if present[b] and assign[b] == j:
                        changed |= _relax(dist, pred, u, b, du + w[b, j], eps)
            else:
                for j in range(m):
                    if load[j] > 0:
                        changed |= _relax(dist, pred, u, n + j, du, eps)
                for b in range(n):
                    if present[b] and assign[b] == UNASSIGNED:
                        changed |= _relax(dist, pred, u, b, du, eps)
        if not changed:
            break


@jit
def _apply_arc(n, m, assign, load, u, v):
    sink = n + m
    if u < n:
        assign[u] = v - n if v < sink else UNASSIGNED
    elif u < sink:
        if v == sink:
            load[u - n] += 1
    elif v < sink and v >= n:
        load[v - n] -= 1


@jit
def _arc_cost(w, n, m, assign, u, v):
    # Cost of residual arc u -> v (the arc is assumed to exist).
    sink = n + m
    if u < n:
        if v < sink:
            return -w[u, v - n]
        return 0.0
    if u < sink and v < n:
        return w[v, u - n]
    return 0.0


@jit
def _zero_path(w, caps, assign, load, present, pi, blocked, src, dst, pred, tol):
    """Breadth-first search for a src -> dst path of zero reduced cost arcs."""
    n, m = w.shape
    sink = n + m
    n_nodes = n + m + 1
    seen = np.zeros(n_nodes, dtype=np.bool_)
    queue = np.empty(n_nodes, dtype=np.int64)
    head = 0
    tail = 1
    queue[0] = src
    seen[src] = True
    pred[src] = -1
    while head < tail:
        u = queue[head]
        head += 1
        if u == dst:
            return True
        for v in range(n_nodes):
            if seen[v]:
                continue
            if v < n and (blocked[v] or not present[v]):
                continue
            exists = False
            if u < n:
                if v >= n and v < sink:
                    exists = assign[u] != v - n
                elif v == sink:
                    exists = assign[u] != UNASSIGNED
            elif u < sink:
                if v == sink:
                    exists = load[u - n] < caps[u - n]
                elif v < n:
                    exists = assign[v] == u - n
            else:
                if v < n:
                    exists = assign[v] == UNASSIGNED
                elif v < sink:
                    exists = load[v - n] > 0
            if not exists:
                continue
            if _arc_cost(w, n, m, assign, u, v) + pi[u] - pi[v] > tol:
                continue
            seen[v] = True
            pred[v] = u
            queue[tail] = v
            tail += 1
    return False


@jit
def _lexicographic_refine(w, caps, assign, load, present, tol):
    # Walk to the lexicographically smallest optimum (unassigned < item 0 < ...)
    # by cancelling zero reduced-cost cycles that leave earlier agents fixed.
    n, m = w.shape
    sink = n + m
    n_nodes = n + m + 1
    pi = np.zeros(n_nodes)
    pred = np.full(n_nodes, -1, dtype=np.int64)
    _bellman_ford(w, caps, assign, load, present, pi, pred, 1e-12)
    blocked = np.zeros(n, dtype=np.bool_)
    path_pred = np.full(n_nodes, -1, dtype=np.int64)
    for i in range(n):
        if not present[i]:
            continue
        blocked[i] = True
        cur = assign[i]
        y = sink if cur == UNASSIGNED else n + cur
        back = (w[i, cur] if cur >= 0 else 0.0) + pi[y] - pi[i]
        if back <= tol:
            for c in range(-1, m):
                if c == cur:
                    break
                x = sink if c == UNASSIGNED else n + c
                fwd = (-w[i, c] if c >= 0 else 0.0) + pi[i] - pi[x]
                if fwd > tol:
                    continue
                if _zero_path(w, caps, assign, load, present, pi, blocked, x, y, path_pred, tol):
                    # Apply y -> i, the path, then i -> x (i's own arc last).
                    v = y
                    while v != x:
                        u = path_pred[v]
                        _apply_arc(n, m, assign, load, u, v)
                        v = u
                    _apply_arc(n, m, assign, load, i, x)
                    break
    return assign


@jit
def ud_assign(w, caps, active, refine, tol):
    """Maximum-weight b-matching: each agent takes at most one item, item j serves
    at most ``caps[j]`` agents. Returns ``(assign, welfare)`` with -1 = unassigned.
    """
    n, m = w.shape
    sink = n + m
    n_nodes = n + m + 1
    assign = np.full(n, NOT_PLACED, dtype=np.int64)
    load = np.zeros(m, dtype=np.int64)
    present = np.zeros(n, dtype=np.bool_)
    dist = np.empty(n_nodes)
    pred = np.empty(n_nodes, dtype=np.int64)
    for k in range(n):
        if not active[k]:
            continue
        present[k] = True
        dist[:] = INF
        pred[:] = -1
        dist[k] = 0.0
        _bellman_ford(w, caps, assign, load, present, dist, pred, 1e-12)
        v = sink
        steps = 0
        while v != k and steps <= n_nodes:
            u = pred[v]
            _apply_arc(n, m, assign, load, u, v)
            v = u
            steps += 1
    if refine:
        _lexicographic_refine(w, caps, assign, load, present, tol)
    welfare = 0.0
    for i in range(n):
        if not present[i]:
            assign[i] = UNASSIGNED
        elif assign[i] >= 0:
            welfare += w[i, assign[i]]
    return assign, welfare


@jit
def ud_vcg(w, caps, tol):
    """Efficient assignment plus Clarke payments.

    Dropping agent i from an optimal flow frees one slot of its item j; a single
    min-cost cycle through that slot restores optimality for the others. The
    payment is that cycle's gain, i.e. minus the shortest sink -> j distance in
    the residual graph without i and without the freed j -> sink arc. If item j
    had a spare copy anyway, nobody else wanted it and the payment is 0.
    """
    n, m = w.shape
    sink = n + m
    n_nodes = n + m + 1
    active = np.ones(n, dtype=np.bool_)
    assign, welfare = ud_assign(w, caps, active, True, tol)
    payments = np.zeros(n)
    load = np.zeros(m, dtype=np.int64)
    for i in range(n):
        if assign[i] >= 0:
            load[assign[i]] += 1
    dist = np.empty(n_nodes)
    pred = np.empty(n_nodes, dtype=np.int64)
    for i in range(n):
        j = assign[i]
        if j < 0 or load[j] < caps[j]:
            continue
        active[i] = False
        dist[:] = INF
        pred[:] = -1
        dist[sink] = 0.0
        _bellman_ford(w, caps, assign, load, active, dist, pred, 1e-12)
        active[i] = True
        if dist[n + j] < 0.0:
            payments[i] = -dist[n + j]
    return assign, welfare, payments


@jit
def mu_counts(d, units, cap, active):
    """Greedy over nonincreasing marginals ``d[i, k]``; ties go to the lower index.

    Only strictly positive marginals are taken, so the result is non-redundant.
    """
    n, m = d.shape
    counts = np.zeros(n, dtype=np.int64)
    limit = min(cap, m)
    used = 0
    welfare = 0.0
    while used < units:
        best = -1
        best_value = 0.0
        for i in range(n):
            if active[i] and counts[i] < limit:
                value = d[i, counts[i]]
                if value > best_value:
                    best = i
                    best_value = value
        if best < 0:
            break
        counts[best] += 1
        used += 1
        welfare += best_value
    return counts, welfare


@jit
def mu_vcg(d, units, cap):
    n, m = d.shape
    active = np.ones(n, dtype=np.bool_)
    counts, welfare = mu_counts(d, units, cap, active)
    payments = np.zeros(n)
    for i in range(n):
        if counts[i] == 0:
            continue
        active[i] = False
        with_bundle = mu_counts(d, units, cap, active)[1]
        without_bundle = mu_counts(d, units - counts[i], cap, active)[1]
        active[i] = True
        payments[i] = max(with_bundle - without_bundle, 0.0)
    return counts, welfare, payments


@jit
def div_fill(slopes, ends, nseg, supply, q, active):
    """Water-filling for capped separable piecewise-linear concave curves.

    ``slopes[i, j, k]`` and ``ends[i, j, k]`` describe segment k of agent i's
    curve on item j; the segment starts at ``ends[i, j, k-1]`` (0 for k = 0).
    Per item, segments are served by decreasing slope (ties: lower agent,
    then earlier segment) until ``supply[j]`` is used up. No agent gets more
    than ``q`` of any item and zero-slope segments are never filled.
    """
    n, m, kmax = slopes.shape
    x = np.zeros((n, m))
    welfare = 0.0
    key = np.empty(n * kmax)
    owner = np.empty(n * kmax, dtype=np.int64)
    seg = np.empty(n * kmax, dtype=np.int64)
    for j in range(m):
        count = 0
        for i in range(n):
            if not active[i]:
                continue
            for k in range(nseg[i, j]):
                if slopes[i, j, k] <= 0.0:
                    continue
                start = ends[i, j, k - 1] if k > 0 else 0.0
                if start >= q:
                    break
                key[count] = -slopes[i, j, k]
                owner[count] = i
                seg[count] = k
                count += 1
        order = np.argsort(key[:count], kind="mergesort")
        left = supply[j]
        for t in range(count):
            if left <= 0.0:
                break
            idx = order[t]
            i = owner[idx]
            k = seg[idx]
            start = ends[i, j, k - 1] if k > 0 else 0.0
            stop = min(ends[i, j, k], q)
            take = min(stop - start, left)
            if take <= 0.0:
                continue
            x[i, j] += take
            left -= take
            welfare += take * slopes[i, j, k]
    return x, welfare


@jit
def div_vcg(slopes, ends, nseg, q):
    n, m, _ = slopes.shape
    active = np.ones(n, dtype=np.bool_)
    full = np.ones(m)
    x, welfare = div_fill(slopes, ends, nseg, full, q, active)
    payments = np.zeros(n)
    for i in range(n):
        held = 0.0
        for j in range(m):
            held += x[i, j]
        if held <= 0.0:
            continue
        active[i] = False
        with_bundle = div_fill(slopes, ends, nseg, full, q, active)[1]
        rest = np.maximum(full - x[i], 0.0)
        without_bundle = div_fill(slopes, ends, nseg, rest, q, active)[1]
        active[i] = True
        payments[i] = max(with_bundle - without_bundle, 0.0)
    return x, welfare, payments
