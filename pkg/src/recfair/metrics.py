"""Per-user profile factors, per-user outcome metrics and Pearson correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import RatingDataset

# returned by pearson_correlation when a side has zero variance
UNDEFINED = None


@dataclass(frozen=True)
class UserFactors:
    user_id: int
    anomaly: float
    entropy: float
    size: int


@dataclass(frozen=True)
class OutcomeMetrics:
    user_id: int
    precision_at_k: float
    miscalibration: float


def _profile(u: int, ds: RatingDataset) -> slice:
    sl = ds.user_slice(u)  # KeyError for unknown users
    if sl.stop == sl.start:
        raise ValueError(f"user {u} has an empty profile")
    return sl


def item_means(ds: RatingDataset) -> np.ndarray:
    """Mean rating of every item (NaN for unrated items)."""
    n = np.bincount(ds.item_index, minlength=len(ds.item_ids))
    s = np.bincount(ds.item_index, weights=ds.r_value, minlength=len(ds.item_ids))
    with np.errstate(invalid="ignore", divide="ignore"):
        return s / n


def profile_anomaly(u: int, ds: RatingDataset) -> float:
    """Mean absolute deviation of u's ratings from the items' mean ratings,
    the means taken over every rating in ``ds``."""
    sl = _profile(u, ds)
    means = item_means(ds)
    dev = np.abs(ds.r_value[sl] - means[ds.item_index[sl]])
    return float(dev.sum() / (sl.stop - sl.start))


def profile_entropy(u: int, ds: RatingDataset) -> float:
    """Shannon entropy (nats) of u's distribution over rating values."""
    sl = _profile(u, ds)
    _, counts = np.unique(ds.r_value[sl], return_counts=True)
    d = counts / counts.sum()
    return float(-(d * np.log(d)).sum())


def profile_size(u: int, ds: RatingDataset) -> int:
    sl = ds.user_slice(u)
    return sl.stop - sl.start


def user_factors(ds: RatingDataset, basis: RatingDataset | None = None) -> list[UserFactors]:
    """Factors for every user with at least one rating, vectorised.

    ``basis`` supplies the item means for anomaly (default: ``ds`` itself);
    passing a training partition gives the train-only variant.
    """
    basis = ds if basis is None else basis
    means = item_means(basis)
    means = means[np.searchsorted(basis.item_ids, ds.item_ids)]
    uidx = ds.user_index
    nu = len(ds.user_ids)
    sizes = ds.profile_sizes
    dev = np.abs(ds.r_value - means[ds.item_index])
    anomaly = np.bincount(uidx, weights=dev, minlength=nu)

    counts = np.zeros((nu, len(ds.rating_domain)))
    np.add.at(counts, (uidx, np.searchsorted(ds.rating_domain, ds.r_value)), 1.0)
    out = []
    for k in np.flatnonzero(sizes):
        d = counts[k][counts[k] > 0] / sizes[k]
        out.append(UserFactors(int(ds.user_ids[k]), float(anomaly[k] / sizes[k]),
                               float(-(d * np.log(d)).sum()), int(sizes[k])))
    return out


def precision_at_k(rec: Sequence[int], test_items: Iterable[int], k: int) -> float:
    """|top-k(rec) ∩ test_items| / k. The denominator stays k even when the
    list is shorter."""
    if k <= 0:
        raise ValueError("k must be >= 1")
    test = set(test_items)
    return sum(1 for i in list(rec)[:k] if i in test) / k


def genre_distribution(items: Iterable[tuple[int, float]], ds: RatingDataset) -> dict[str, float]:
    """Weighted genre mix of ``items``; a multi-genre item splits its weight
    evenly over its genres."""
    acc: dict[str, float] = {}
    n = 0
    for item, w in items:
        n += 1
        genres = ds.genres_of(item)
        if not genres:
            raise ValueError(f"item {item} has no genres")
        share = w / len(genres)
        for g in genres:
            acc[g] = acc.get(g, 0.0) + share
    if n == 0:
        raise ValueError("empty item list")
    total = math.fsum(acc.values())
    return {g: acc[g] / total for g in sorted(acc)}


def miscalibration(p: Mapping[str, float], q: Mapping[str, float], alpha: float = 0.01) -> float:
    """KL(p || (1 - alpha) q + alpha p) in nats.

    ``p`` is the user's profile genre mix, ``q`` the recommended list's. Genres
    missing from a mapping have probability 0.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    kl = 0.0
    for g, pg in p.items():
        if pg <= 0.0:
            continue
        qg = (1.0 - alpha) * q.get(g, 0.0) + alpha * pg
        kl += pg * math.log(pg / qg)
    return max(kl, 0.0)


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson r, or ``UNDEFINED`` (None) if either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # relative guard: constant inputs leave rounding residue
    if sxx <= 1e-24 * max(1.0, float(x @ x)) or syy <= 1e-24 * max(1.0, float(y @ y)):
        return UNDEFINED
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))
