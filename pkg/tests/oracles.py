"""Independent reference computations used as test oracles.

Nothing here imports from the package's numeric paths; these are the slow,
obvious versions the fast code is checked against.
"""
import math


def mid_ranks(values):
    """1-based average ranks, by explicit sorting and tie grouping."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and values[order[end + 1]] == values[order[pos]]:
            end += 1
        avg = (pos + end) / 2.0 + 1.0
        for t in range(pos, end + 1):
            ranks[order[t]] = avg
        pos = end + 1
    return ranks


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den


def spearman_def(a, b):
    return pearson(mid_ranks(list(a)), mid_ranks(list(b)))


def kendall_pairs(a, b):
    """Tau-b by looping over every pair."""
    n = len(a)
    conc = disc = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = (a[i] > a[j]) - (a[i] < a[j])
            t = (b[i] > b[j]) - (b[i] < b[j])
            if s * t > 0:
                conc += 1
            elif s * t < 0:
                disc += 1
    n0 = n * (n - 1) // 2

    def ties(x):
        counts = {}
        for v in x:
            counts[v] = counts.get(v, 0) + 1
        return sum(c * (c - 1) // 2 for c in counts.values())

    return (conc - disc) / math.sqrt((n0 - ties(a)) * (n0 - ties(b)))


def brute_knn(train_X, train_y, query, k):
    """Exhaustive scan: sort by (distance, training index), majority vote, lowest label on ties."""
    dists = []
    for idx, row in enumerate(train_X):
        d = 0.0
        for u, v in zip(row, query):
            d += (u - v) ** 2
        dists.append((d, idx))
    dists.sort()
    votes = {}
    for _, idx in dists[:k]:
        lab = int(train_y[idx])
        votes[lab] = votes.get(lab, 0) + 1
    best = max(votes.values())
    return min(lab for lab, v in votes.items() if v == best)


def central_differences(loss, params, h=1e-5):
    """Numerical gradient of ``loss(params)`` for a list of float arrays (perturbed in place)."""
    grads = []
    for p in params:
        g = p.copy()
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss(params)
            flat[i] = old - h
            down = loss(params)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def bce_by_hand(p, t, eps=1e-7):
    total = 0.0
    for pi, ti in zip(p, t):
        pi = min(max(pi, eps), 1 - eps)
        total += -(ti * math.log(pi) + (1 - ti) * math.log(1 - pi))
    return total / len(p)
