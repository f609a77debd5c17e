"""ListRank-MF: list-wise matrix factorisation on top-one probabilities.

For user u with training items I_u the target and model top-one
distributions are

    t_ui = exp(r_ui) / sum_k exp(r_uk)
    p_ui = exp(g(U_u . V_i)) / sum_k exp(g(U_u . V_k)),    g = logistic

and the objective is

    sum_u  -sum_{i in I_u} t_ui log p_ui  +  reg/2 (|U|_F^2 + |V|_F^2).

SGD takes one step per user list; V_i's penalty is shared evenly among the
users who rated i, so an epoch applies the full Frobenius penalty once. The
list gradient is O(1/|I_u|) per item, so steps are scaled by |I_u| and the
learning rate reads per rated item, as in pointwise SGD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .base import Recommender, TrainingDivergence
from .params import MFParams

INIT_SCALE = 0.01


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


@dataclass
class ListRankState:
    U: np.ndarray
    V: np.ndarray


def init_state(R: sp.csr_matrix, factors: int, seed: int) -> ListRankState:
    rng = np.random.default_rng(seed)
    nu, ni = R.shape
    return ListRankState(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(nu, factors)),
                         rng.uniform(-INIT_SCALE, INIT_SCALE, size=(ni, factors)))


def target_distribution(ratings: np.ndarray) -> np.ndarray:
    return softmax(np.asarray(ratings, dtype=np.float64))


def item_penalty_weights(R: sp.csr_matrix) -> np.ndarray:
    """1 / (number of training raters) per item."""
    return 1.0 / np.maximum(np.bincount(R.indices, minlength=R.shape[1]), 1)


def listrankmf_loss_and_grad(state: ListRankState, users, R: sp.csr_matrix, reg: float):
    """Loss and gradient over the rating lists of ``users`` (dense indices).

    Summed over all users this is the full objective. Returns (loss, grads)
    with grads a ``ListRankState``.
    """
    if not (np.isfinite(state.U).all() and np.isfinite(state.V).all()):
        raise ValueError("non-finite parameters")
    w = item_penalty_weights(R)
    gU = np.zeros_like(state.U)
    gV = np.zeros_like(state.V)
    loss = 0.0
    for u in users:
        lo, hi = R.indptr[u], R.indptr[u + 1]
        if hi == lo:
            raise ValueError(f"user {u} has no training ratings")
        items = R.indices[lo:hi]
        t = target_distribution(R.data[lo:hi])
        Vi = state.V[items]
        a = logistic(Vi @ state.U[u])
        p = softmax(a)
        loss += float(-(t * np.log(p)).sum())
        loss += 0.5 * reg * (float(state.U[u] @ state.U[u]) + float(w[items] @ (Vi ** 2).sum(1)))
        d = (p - t) * a * (1.0 - a)            # d loss / d (U_u . V_i)
        gU[u] += d @ Vi + reg * state.U[u]
        np.add.at(gV, items, d[:, None] * state.U[u] + reg * w[items, None] * Vi)
    return loss, ListRankState(gU, gV)


def entropy_floor(users, R: sp.csr_matrix) -> float:
    """Sum of target entropies: the cross-entropy part never goes below it."""
    h = 0.0
    for u in users:
        t = target_distribution(R.data[R.indptr[u]:R.indptr[u + 1]])
        h += float(-(t * np.log(t)).sum())
    return h


@numba.njit(cache=True)
def _list_terms(u, indptr, indices, data, U, V):
    lo, hi = indptr[u], indptr[u + 1]
    n = hi - lo
    f = U.shape[1]
    a = np.empty(n)
    t = np.empty(n)
    for k in range(n):
        i = indices[lo + k]
        s = 0.0
        for c in range(f):
            s += U[u, c] * V[i, c]
        a[k] = 1.0 / (1.0 + np.exp(-s))
        t[k] = data[lo + k]
    t = np.exp(t - t.max())
    t /= t.sum()
    p = np.exp(a - a.max())
    p /= p.sum()
    return a, t, p


@numba.njit(cache=True)
def _sgd_epoch(indptr, indices, data, user_order, U, V, lr, reg, item_w):
    f = U.shape[1]
    gU = np.empty(f)
    for u in user_order:
        lo, hi = indptr[u], indptr[u + 1]
        if hi == lo:
            continue
        a, t, p = _list_terms(u, indptr, indices, data, U, V)
        step = lr * (hi - lo)
        gU[:] = 0.0
        for k in range(hi - lo):
            i = indices[lo + k]
            d = (p[k] - t[k]) * a[k] * (1.0 - a[k])
            for c in range(f):
                gU[c] += d * V[i, c]
                V[i, c] -= step * (d * U[u, c] + reg * item_w[i] * V[i, c])
        for c in range(f):
            U[u, c] -= step * (gU[c] + reg * U[u, c])


@numba.njit(cache=True)
def _full_loss(indptr, indices, data, U, V, reg, item_w):
    loss = 0.0
    f = U.shape[1]
    for u in range(indptr.shape[0] - 1):
        lo, hi = indptr[u], indptr[u + 1]
        if hi == lo:
            continue
        a, t, p = _list_terms(u, indptr, indices, data, U, V)
        sq = 0.0
        for c in range(f):
            sq += U[u, c] * U[u, c]
        for k in range(hi - lo):
            loss -= t[k] * np.log(p[k])
            i = indices[lo + k]
            for c in range(f):
                sq += item_w[i] * V[i, c] * V[i, c]
        loss += 0.5 * reg * sq
    return loss


class ListRankMF(Recommender):
    algorithm = "ListRankMF"
    hp: MFParams

    def _fit(self):
        hp = self.hp
        R = self.R
        st = init_state(R, hp.factors, self.seed)
        rng = np.random.default_rng([self.seed, 1])
        indptr, indices, data = R.indptr.astype(np.int64), R.indices.astype(np.int64), R.data
        w = item_penalty_weights(R)
        self.loss_history = [_full_loss(indptr, indices, data, st.U, st.V, hp.regularization, w)]
        for epoch in range(1, hp.epochs + 1):
            _sgd_epoch(indptr, indices, data, rng.permutation(R.shape[0]).astype(np.int64),
                       st.U, st.V, hp.learning_rate, hp.regularization, w)
            loss = _full_loss(indptr, indices, data, st.U, st.V, hp.regularization, w)
            if not np.isfinite(loss):
                raise TrainingDivergence(self.algorithm, epoch, loss)
            self.loss_history.append(float(loss))
        self.U, self.V = st.U, st.V

    def _params(self):
        return {"U": self.U, "V": self.V}

    def scores(self, u: int) -> np.ndarray:
        # g is monotone: ranking by U.V equals ranking by g(U.V)
        return self.V @ self.U[u]
