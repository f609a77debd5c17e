from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import scipy.sparse as sp

from ..data import RatingDataset


class TrainingDivergence(RuntimeError):
    def __init__(self, algorithm: str, epoch: int, loss: float):
        super().__init__(f"{algorithm}: loss became non-finite ({loss}) at epoch {epoch}")
        self.algorithm = algorithm
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class RecommendationList:
    user_id: int
    items: tuple[int, ...]
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.items, self.scores))


def top_k(scores: np.ndarray, item_ids: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k best finite scores; ties go to the smaller item id."""
    ok = np.flatnonzero(np.isfinite(scores))
    if len(ok) == 0:
        return ok
    if len(ok) > k:
        kth = np.partition(scores[ok], len(ok) - k)[len(ok) - k]
        ok = ok[scores[ok] >= kth]
    order = np.lexsort((item_ids[ok], -scores[ok]))
    return ok[order[:k]]


class Recommender:
    """Common surface of the fitted models.

    Subclasses implement ``_fit`` and ``scores``; models index users and items
    densely over the training set (items = those with a training rating).
    Parameters are frozen (read-only arrays) once ``_fit`` returns.
    """

    algorithm: ClassVar[str] = ""

    def __init__(self, hp, seed: int = 0):
        self.hp = hp
        self.seed = int(seed)
        self.fingerprint = ""
        self.user_ids = np.empty(0, dtype=np.int64)
        self.item_ids = np.empty(0, dtype=np.int64)
        self.R = sp.csr_matrix((0, 0))
        self.loss_history: list[float] = []

    # -- fitting --------------------------------------------------------------

    def fit(self, train: RatingDataset) -> "Recommender":
        if train.num_ratings == 0:
            raise ValueError("empty training set")
        self.hp.validate()
        self.fingerprint = train.fingerprint()
        self.user_ids = np.unique(train.r_user)
        self.item_ids = np.unique(train.r_item)
        u = np.searchsorted(self.user_ids, train.r_user)
        i = np.searchsorted(self.item_ids, train.r_item)
        self.R = sp.csr_matrix((train.r_value.astype(np.float64), (u, i)),
                               shape=(len(self.user_ids), len(self.item_ids)))
        self.R.sort_indices()
        self._fit()
        self._freeze()
        return self

    def _fit(self) -> None:
        raise NotImplementedError

    def _params(self) -> dict[str, np.ndarray]:
        """Fitted arrays (besides the rating matrix) that define the model."""
        raise NotImplementedError

    def _set_params(self, params: dict[str, np.ndarray]) -> None:
        for name, value in params.items():
            setattr(self, name, value)

    def _freeze(self) -> None:
        for a in list(self._params().values()) + [self.user_ids, self.item_ids,
                                                  self.R.data, self.R.indices, self.R.indptr]:
            a.setflags(write=False)

    # -- scoring --------------------------------------------------------------

    def user_pos(self, user_id: int) -> int:
        k = int(np.searchsorted(self.user_ids, user_id))
        if k >= len(self.user_ids) or self.user_ids[k] != user_id:
            raise KeyError(f"user {user_id} has no training ratings (cold start)")
        return k

    def scores(self, u: int) -> np.ndarray:
        """Score of every training item for dense user ``u``; NaN = unscorable."""
        raise NotImplementedError

    def predict(self, user_id: int, item_id: int) -> float:
        u = self.user_pos(user_id)
        j = int(np.searchsorted(self.item_ids, item_id))
        if j >= len(self.item_ids) or self.item_ids[j] != item_id:
            return float("nan")
        return float(self.scores(u)[j])

    def recommend(self, user_id: int, k: int = 10) -> RecommendationList:
        if k < 1:
            raise ValueError("k must be >= 1")
        u = self.user_pos(user_id)
        s = self.scores(u).copy()
        s[self.R.indices[self.R.indptr[u]:self.R.indptr[u + 1]]] = np.nan
        pos = top_k(s, self.item_ids, k)
        return RecommendationList(int(user_id), tuple(int(i) for i in self.item_ids[pos]),
                                  tuple(float(x) for x in s[pos]))

    def recommend_all(self, user_ids, k: int = 10) -> dict[int, RecommendationList]:
        return {int(u): self.recommend(int(u), k) for u in user_ids}
