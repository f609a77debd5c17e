"""Direct-from-definition reference implementations used as test oracles.

Plain Python loops over dicts; nothing here touches the package's numpy
code paths.
"""

from __future__ import annotations

import math


def ratings_dict(ds):
    """{user: {item: rating}} from a RatingDataset's record view."""
    out = {}
    for r in ds.ratings:
        out.setdefault(r.user_id, {})[r.item_id] = r.value
    return out


def item_mean(R, item):
    vals = [prof[item] for prof in R.values() if item in prof]
    return sum(vals) / len(vals)


def anomaly(R, u):
    prof = R[u]
    return sum(abs(r - item_mean(R, i)) for i, r in prof.items()) / len(prof)


def entropy(R, u):
    prof = R[u]
    n = len(prof)
    counts = {}
    for r in prof.values():
        counts[r] = counts.get(r, 0) + 1
    return -sum(c / n * math.log(c / n) for c in counts.values())


def precision(rec, test, k):
    return len([i for i in rec[:k] if i in test]) / k


def genre_mix(items, genres):
    acc = {}
    for i in items:
        for g in genres[i]:
            acc[g] = acc.get(g, 0.0) + 1.0 / len(genres[i]) / len(items)
    return acc


def kl_smoothed(p, q, alpha):
    total = 0.0
    for g, pg in p.items():
        if pg > 0:
            total += pg * math.log(pg / ((1 - alpha) * q.get(g, 0.0) + alpha * pg))
    return total


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


# -- neighbourhood models ----------------------------------------------------

def user_pearson(R, u, v, shrink=0.0):
    common = sorted(set(R[u]) & set(R[v]))
    if len(common) < 2:
        return 0.0
    x = [R[u][i] for i in common]
    y = [R[v][i] for i in common]
    mx, my = sum(x) / len(x), sum(y) / len(y)
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    if den <= 1e-12:
        return 0.0
    s = num / den
    return s * len(common) / (len(common) + shrink) if shrink else s


def user_mean(R, u):
    return sum(R[u].values()) / len(R[u])


def item_adjusted_cosine(R, i, j, shrink=0.0):
    raters = sorted(u for u in R if i in R[u] and j in R[u])
    if len(raters) < 2:
        return 0.0
    a = [R[u][i] - user_mean(R, u) for u in raters]
    b = [R[u][j] - user_mean(R, u) for u in raters]
    den = math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))
    if den <= 1e-12:
        return 0.0
    s = sum(x * y for x, y in zip(a, b)) / den
    return s * len(raters) / (len(raters) + shrink) if shrink else s


def neighbours(ids, target, sim, n):
    """Top-n other ids by similarity, positive only, ties by smaller id.

    Similarities are compared at 1e-9 so that values equal in exact
    arithmetic tie here regardless of rounding.
    """
    cands = [(sim(target, o), o) for o in ids if o != target]
    cands = [(s, o) for s, o in cands if s > 1e-12]
    cands.sort(key=lambda p: (-round(p[0], 9), p[1]))
    return cands[:n]


def userknn(R, u, i, n, shrink=0.0):
    """(predicted rating, summed similarity) or (None, None) if unscorable."""
    nb = neighbours(sorted(R), u, lambda a, b: user_pearson(R, a, b, shrink), n)
    used = [(s, v) for s, v in nb if i in R[v]]
    if not used:
        return None, None
    den = sum(abs(s) for s, _ in used)
    num = sum(s * (R[v][i] - user_mean(R, v)) for s, v in used)
    return user_mean(R, u) + num / den, den


def itemknn(R, u, i, n, shrink=0.0):
    items = sorted({j for prof in R.values() for j in prof})
    nb = neighbours(items, i, lambda a, b: item_adjusted_cosine(R, a, b, shrink), n)
    used = [(s, j) for s, j in nb if j in R[u]]
    if not used:
        return None, None
    den = sum(abs(s) for s, _ in used)
    return sum(s * R[u][j] for s, j in used) / den, den


def topk(scores, k):
    """scores: {item: score}; best first, ties by smaller item id."""
    return [i for i, _ in sorted(scores.items(), key=lambda p: (-p[1], p[0]))[:k]]
