"""Neighbourhood recommenders.

UserKNN: Pearson correlation over co-rated items, prediction
``mean_u + sum_v s(u,v) (r_vi - mean_v) / sum_v |s(u,v)|``.
ItemKNN: adjusted cosine (ratings centred by user mean, norms over co-rating
users), prediction ``sum_j s(i,j) r_uj / sum_j |s(i,j)|``.

Neighbourhoods are the global top-n positively similar users (items); the
neighbours that actually rated the target form N(u, i). Pairs with fewer than
two co-ratings have similarity 0.

Ranking for top-k uses ``scoring``: "similarity" (default) ranks by the summed
similarity of N(u, i), the usual top-n scoring for neighbourhood models;
"rating" ranks by the predicted rating above. Ranking by predicted rating
favours items seen by a single neighbour and gives near-zero precision.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import Recommender
from .params import KNNParams

MIN_CO_RATED = 2


def _dense(R: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    X = R.toarray()
    M = (X != 0).astype(np.float64)
    return X, M


def _finish(sim, n, den, shrinkage):
    sim[(n < MIN_CO_RATED) | ~(den > 1e-12) | ~np.isfinite(sim)] = 0.0
    np.clip(sim, -1.0, 1.0, out=sim)
    sim[np.abs(sim) < 1e-12] = 0.0  # cancellation residue, not a real neighbour
    if shrinkage > 0:
        sim *= n / (n + shrinkage)
    return sim


def _pearson_rows(X, M, X2, rows, shrinkage):
    """Pearson rows ``rows`` against all rows, over co-rated columns."""
    Xa, Ma, X2a = X[rows], M[rows], X2[rows]
    n = Ma @ M.T
    sxy = Xa @ X.T
    sa = Xa @ M.T          # row-a ratings summed over columns co-rated with b
    sb = Ma @ X.T
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = sxy - sa * sb / n
        va = (X2a @ M.T) - sa * sa / n
        vb = (Ma @ X2.T) - sb * sb / n
        den = np.sqrt(va * vb)
        sim = cov / den
    return _finish(sim, n, den, shrinkage)


def _cosine_rows(C, M, C2, rows, shrinkage):
    """Cosine of rows ``rows`` against all rows, norms over co-rated columns."""
    Ca, Ma, C2a = C[rows], M[rows], C2[rows]
    n = Ma @ M.T
    num = Ca @ C.T
    with np.errstate(invalid="ignore", divide="ignore"):
        den = np.sqrt((C2a @ M.T) * (Ma @ C2.T))
        sim = num / den
    return _finish(sim, n, den, shrinkage)


def _user_major(R):
    X, M = _dense(R)
    return X, M, X * X


def _item_major(R):
    X, M = _dense(R)
    means = X.sum(1) / np.maximum(M.sum(1), 1)
    C = np.ascontiguousarray(((X - means[:, None]) * M).T)
    M = np.ascontiguousarray(M.T)
    return C, M, C * C


def pearson_similarity(R: sp.csr_matrix, shrinkage: float = 0.0) -> np.ndarray:
    """User-user Pearson correlation restricted to co-rated items."""
    X, M, X2 = _user_major(R)
    return _pearson_rows(X, M, X2, slice(None), shrinkage)


def adjusted_cosine_similarity(R: sp.csr_matrix, shrinkage: float = 0.0) -> np.ndarray:
    """Item-item cosine of user-mean-centred ratings over co-rating users."""
    C, M, C2 = _item_major(R)
    return _cosine_rows(C, M, C2, slice(None), shrinkage)


def _select(s: np.ndarray, a: int, n: int) -> np.ndarray:
    s = s.copy()
    s[a] = 0.0
    cand = np.flatnonzero(s > 0)
    if len(cand) > n:
        kth = np.partition(s[cand], len(cand) - n)[len(cand) - n]
        cand = cand[s[cand] >= kth]
    return cand[np.lexsort((cand, -s[cand]))[:n]]


def top_neighbors(sim: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per row, the ``n`` most similar other rows with positive similarity.

    Returns (index, weight) arrays of shape (rows, n) padded with -1 / 0.
    Ties go to the lower index.
    """
    return _blocked_neighbors(lambda rows: sim[rows], sim.shape[0], n)


def _blocked_neighbors(sim_rows, size: int, n: int, block: int = 512):
    idx = np.full((size, n), -1, dtype=np.int64)
    w = np.zeros((size, n))
    for lo in range(0, size, block):
        hi = min(size, lo + block)
        S = sim_rows(slice(lo, hi))
        for a in range(lo, hi):
            nb = _select(S[a - lo], a, n)
            idx[a, :len(nb)] = nb
            w[a, :len(nb)] = S[a - lo, nb]
    return idx, w


class _KNN(Recommender):
    hp: KNNParams

    def _sums(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(weighted numerator, sum of |similarity|) over N(u, i) for all items."""
        raise NotImplementedError

    def rating_scores(self, u: int) -> np.ndarray:
        raise NotImplementedError

    def scores(self, u: int) -> np.ndarray:
        if self.hp.scoring == "rating":
            return self.rating_scores(u)
        _, den = self._sums(u)
        return np.where(den > 0, den, np.nan)

    def predict(self, user_id: int, item_id: int) -> float:
        """Predicted rating; NaN when no neighbour covers the item."""
        u = self.user_pos(user_id)
        j = int(np.searchsorted(self.item_ids, item_id))
        if j >= len(self.item_ids) or self.item_ids[j] != item_id:
            return float("nan")
        return float(self.rating_scores(u)[j])

    def _params(self):
        return {"neighbor_idx": self.neighbor_idx, "neighbor_sim": self.neighbor_sim}

    def _neighbor_matrix(self) -> sp.csr_matrix:
        rows = np.repeat(np.arange(self.neighbor_idx.shape[0]), self.neighbor_idx.shape[1])
        cols = self.neighbor_idx.ravel()
        keep = cols >= 0
        size = self.neighbor_idx.shape[0]
        return sp.csr_matrix((self.neighbor_sim.ravel()[keep], (rows[keep], cols[keep])),
                             shape=(size, size))


class UserKNN(_KNN):
    algorithm = "UserKNN"

    def _fit(self):
        X, M, X2 = _user_major(self.R)
        self.neighbor_idx, self.neighbor_sim = _blocked_neighbors(
            lambda rows: _pearson_rows(X, M, X2, rows, self.hp.shrinkage), X.shape[0], self.hp.neighbors)
        self._setup()

    def _setup(self):
        R = self.R
        counts = np.diff(R.indptr)
        self.user_mean = np.asarray(R.sum(1)).ravel() / np.maximum(counts, 1)
        dev = R.copy()
        dev.data = dev.data - np.repeat(self.user_mean, counts)
        self._dev = dev.tocsr()
        self._mask = R.copy()
        self._mask.data = np.ones_like(self._mask.data)

    def _set_params(self, params):
        super()._set_params(params)
        self._setup()

    def _sums(self, u: int):
        nb = self.neighbor_idx[u]
        keep = nb >= 0
        nb, w = nb[keep], self.neighbor_sim[u][keep]
        return w @ self._dev[nb], np.abs(w) @ self._mask[nb]

    def rating_scores(self, u: int) -> np.ndarray:
        num, den = self._sums(u)
        out = np.full(len(self.item_ids), np.nan)
        ok = den > 0
        out[ok] = self.user_mean[u] + num[ok] / den[ok]
        return out


class ItemKNN(_KNN):
    algorithm = "ItemKNN"

    def _fit(self):
        C, M, C2 = _item_major(self.R)
        self.neighbor_idx, self.neighbor_sim = _blocked_neighbors(
            lambda rows: _cosine_rows(C, M, C2, rows, self.hp.shrinkage), C.shape[0], self.hp.neighbors)
        self._setup()

    def _setup(self):
        self._S = self._neighbor_matrix()
        self._absS = abs(self._S)

    def _set_params(self, params):
        super()._set_params(params)
        self._setup()

    def _sums(self, u: int):
        lo, hi = self.R.indptr[u], self.R.indptr[u + 1]
        r = np.zeros(len(self.item_ids))
        m = np.zeros(len(self.item_ids))
        r[self.R.indices[lo:hi]] = self.R.data[lo:hi]
        m[self.R.indices[lo:hi]] = 1.0
        return self._S @ r, self._absS @ m

    def rating_scores(self, u: int) -> np.ndarray:
        num, den = self._sums(u)
        out = np.full(len(self.item_ids), np.nan)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out
