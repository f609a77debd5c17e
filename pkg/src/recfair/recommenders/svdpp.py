"""SVD++: biased matrix factorisation with implicit feedback.

    r_hat(u, i) = mu + b_u + b_i + q_i . (p_u + |N(u)|^-1/2 sum_{j in N(u)} y_j)

N(u) is u's training profile. The objective over a set of ratings B is

    sum_{(u,i) in B} e_ui^2
        + reg * (b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2 + sum_{j in N(u)} |y_j|^2)

i.e. every parameter is penalised once per rating it takes part in, the
penalty that per-rating SGD minimises. SGD steps are
``theta += lr * (e * d r_hat / d theta - reg * theta)`` (the factor 2 of the
gradient is folded into the learning rate).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numba
import numpy as np
import scipy.sparse as sp

from .base import Recommender, TrainingDivergence
from .params import MFParams

INIT_SCALE = 0.01


@dataclass
class SVDppState:
    mu: float
    bu: np.ndarray
    bi: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    Y: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "mu"}

    def copy(self) -> "SVDppState":
        return SVDppState(self.mu, *(a.copy() for a in self.arrays().values()))


def init_state(R: sp.csr_matrix, factors: int, seed: int) -> SVDppState:
    """Zero biases, zero user factors and implicit factors, item factors
    uniform(-0.01, 0.01); an untrained model therefore predicts mu exactly."""
    nu, ni = R.shape
    rng = np.random.default_rng(seed)
    return SVDppState(
        mu=float(R.data.mean()) if R.nnz else 0.0,
        bu=np.zeros(nu),
        bi=np.zeros(ni),
        P=np.zeros((nu, factors)),
        Q=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(ni, factors)),
        Y=np.zeros((ni, factors)),
    )


def implicit_sum(state: SVDppState, R: sp.csr_matrix) -> np.ndarray:
    """|N(u)|^-1/2 sum_{j in N(u)} y_j for every user."""
    n = np.diff(R.indptr).astype(np.float64)
    N = sp.csr_matrix((np.ones(R.nnz), R.indices, R.indptr), shape=R.shape)
    with np.errstate(divide="ignore"):
        scale = np.where(n > 0, 1.0 / np.sqrt(n), 0.0)
    return (N @ state.Y) * scale[:, None]


def svdpp_loss_and_grad(state: SVDppState, batch, R: sp.csr_matrix, reg: float):
    """Objective and gradient over ``batch = (users, items, ratings)``.

    ``R`` is the training matrix defining N(u). Returns (loss, grads) with
    grads an ``SVDppState`` (its ``mu`` is unused and set to 0).
    """
    u, i, r = (np.asarray(a) for a in batch)
    if len(u) == 0:
        raise ValueError("empty batch")
    for name, a in state.arrays().items():
        if not np.isfinite(a).all():
            raise ValueError(f"non-finite parameters in {name}")
    Z = implicit_sum(state, R)
    pz = state.P[u] + Z[u]
    pred = state.mu + state.bu[u] + state.bi[i] + np.einsum("nf,nf->n", state.Q[i], pz)
    e = r - pred

    n_u = np.diff(R.indptr).astype(np.float64)
    batch_count = np.bincount(u, minlength=R.shape[0]).astype(np.float64)
    N = sp.csr_matrix((np.ones(R.nnz), R.indices, R.indptr), shape=R.shape)
    y_weight = N.T @ batch_count          # ratings in batch whose N(u) contains j
    y_sq = float((y_weight * (state.Y ** 2).sum(1)).sum())

    loss = float(e @ e) + reg * (float(state.bu[u] @ state.bu[u]) + float(state.bi[i] @ state.bi[i])
                                 + float((state.P[u] ** 2).sum()) + float((state.Q[i] ** 2).sum())
                                 + y_sq)

    nu, ni = R.shape
    g = SVDppState(0.0, np.zeros(nu), np.zeros(ni), np.zeros_like(state.P),
                   np.zeros_like(state.Q), np.zeros_like(state.Y))
    np.add.at(g.bu, u, -2 * e + 2 * reg * state.bu[u])
    np.add.at(g.bi, i, -2 * e + 2 * reg * state.bi[i])
    np.add.at(g.P, u, -2 * e[:, None] * state.Q[i] + 2 * reg * state.P[u])
    np.add.at(g.Q, i, -2 * e[:, None] * pz + 2 * reg * state.Q[i])
    # d loss / d Z[u], then spread to y_j for j in N(u)
    gz = np.zeros((nu, state.P.shape[1]))
    np.add.at(gz, u, -2 * e[:, None] * state.Q[i])
    with np.errstate(divide="ignore"):
        scale = np.where(n_u > 0, 1.0 / np.sqrt(n_u), 0.0)
    g.Y = N.T @ (gz * scale[:, None]) + 2 * reg * y_weight[:, None] * state.Y
    return loss, g


@numba.njit(cache=True)
def _sgd_epoch(indptr, indices, data, user_order, item_perm_keys,
               mu, bu, bi, P, Q, Y, lr, reg):
    f = P.shape[1]
    z = np.empty(f)
    acc = np.empty(f)
    for u in user_order:
        lo, hi = indptr[u], indptr[u + 1]
        n = hi - lo
        if n == 0:
            continue
        s = 1.0 / np.sqrt(n)
        z[:] = 0.0
        for k in range(lo, hi):
            z += Y[indices[k]]
        z *= s
        acc[:] = 0.0
        order = np.argsort(item_perm_keys[lo:hi], kind="mergesort") + lo
        for k in order:
            i = indices[k]
            pred = mu + bu[u] + bi[i]
            for c in range(f):
                pred += Q[i, c] * (P[u, c] + z[c])
            e = data[k] - pred
            bu[u] += lr * (e - reg * bu[u])
            bi[i] += lr * (e - reg * bi[i])
            for c in range(f):
                q = Q[i, c]
                Q[i, c] += lr * (e * (P[u, c] + z[c]) - reg * q)
                P[u, c] += lr * (e * q - reg * P[u, c])
                acc[c] += e * q
        # penalty applied once per rating of u, as repeated decay
        decay = (1.0 - lr * reg) ** n
        for k in range(lo, hi):
            j = indices[k]
            for c in range(f):
                Y[j, c] = Y[j, c] * decay + lr * s * acc[c]


@numba.njit(cache=True)
def _full_loss(indptr, indices, data, mu, bu, bi, P, Q, Y, reg):
    nu = indptr.shape[0] - 1
    f = P.shape[1]
    z = np.empty(f)
    loss = 0.0
    for u in range(nu):
        lo, hi = indptr[u], indptr[u + 1]
        n = hi - lo
        if n == 0:
            continue
        z[:] = 0.0
        ysq = 0.0
        for k in range(lo, hi):
            j = indices[k]
            for c in range(f):
                z[c] += Y[j, c]
                ysq += Y[j, c] * Y[j, c]
        z /= np.sqrt(n)
        psq = 0.0
        for c in range(f):
            psq += P[u, c] * P[u, c]
        for k in range(lo, hi):
            i = indices[k]
            pred = mu + bu[u] + bi[i]
            qsq = 0.0
            for c in range(f):
                pred += Q[i, c] * (P[u, c] + z[c])
                qsq += Q[i, c] * Q[i, c]
            e = data[k] - pred
            loss += e * e + reg * (bu[u] * bu[u] + bi[i] * bi[i] + psq + qsq + ysq)
    return loss


class SVDpp(Recommender):
    algorithm = "SVDpp"
    hp: MFParams

    def _fit(self):
        hp = self.hp
        R = self.R
        st = init_state(R, hp.factors, self.seed)
        rng = np.random.default_rng([self.seed, 1])
        indptr, indices, data = R.indptr.astype(np.int64), R.indices.astype(np.int64), R.data
        self.loss_history = [_full_loss(indptr, indices, data, st.mu, st.bu, st.bi, st.P, st.Q, st.Y,
                                        hp.regularization)]
        for epoch in range(1, hp.epochs + 1):
            user_order = rng.permutation(R.shape[0]).astype(np.int64)
            keys = rng.random(R.nnz)
            _sgd_epoch(indptr, indices, data, user_order, keys, st.mu, st.bu, st.bi, st.P, st.Q, st.Y,
                       hp.learning_rate, hp.regularization)
            loss = _full_loss(indptr, indices, data, st.mu, st.bu, st.bi, st.P, st.Q, st.Y,
                              hp.regularization)
            if not np.isfinite(loss):
                raise TrainingDivergence(self.algorithm, epoch, loss)
            self.loss_history.append(float(loss))
        self._set_state(st)

    def _set_state(self, st: SVDppState):
        self.state = st
        self._Z = implicit_sum(st, self.R)
        self.mu = np.array([st.mu])

    def _params(self):
        return {"mu": self.mu, **self.state.arrays()}

    def _set_params(self, params):
        self._set_state(SVDppState(float(params["mu"][0]), params["bu"], params["bi"],
                                   params["P"], params["Q"], params["Y"]))

    def _freeze(self):
        super()._freeze()
        self._Z.setflags(write=False)

    def scores(self, u: int) -> np.ndarray:
        st = self.state
        return st.mu + st.bu[u] + st.bi + st.Q @ (st.P[u] + self._Z[u])
