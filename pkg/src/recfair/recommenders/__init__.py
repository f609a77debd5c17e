"""Collaborative-filtering recommenders behind one fit/recommend surface."""

from __future__ import annotations

import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..data import RatingDataset, split_train_test
from ..metrics import precision_at_k
from .base import RecommendationList, Recommender, TrainingDivergence, top_k
from .knn import ItemKNN, UserKNN
from .listrankmf import ListRankMF
from .params import (ALGORITHMS, HyperParamGrid, InvalidHyperParams, KNNParams, MFParams,
                     make_params, params_class)
from .svdpp import SVDpp

log = logging.getLogger(__name__)

MODELS: dict[str, type[Recommender]] = {
    "UserKNN": UserKNN,
    "ItemKNN": ItemKNN,
    "SVDpp": SVDpp,
    "ListRankMF": ListRankMF,
}

__all__ = [
    "ALGORITHMS", "MODELS", "HyperParamGrid", "InvalidHyperParams", "KNNParams", "MFParams",
    "RecommendationList", "Recommender", "TrainingDivergence", "GridResult", "fit", "grid_search",
    "load_checkpoint", "make_params", "mean_precision", "save_checkpoint", "top_k",
]


def fit(algorithm: str, train: RatingDataset, hp=None, seed: int = 0) -> Recommender:
    """Train ``algorithm`` on ``train``. Deterministic in (train, hp, seed)."""
    if algorithm not in MODELS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if hp is None:
        hp = params_class(algorithm)()
    elif isinstance(hp, dict):
        hp = make_params(algorithm, hp)
    if not isinstance(hp, params_class(algorithm)):
        raise InvalidHyperParams(f"{type(hp).__name__} is not valid for {algorithm}")
    return MODELS[algorithm](hp, seed).fit(train)


def test_items_by_user(test: RatingDataset, min_rating: int | None = None) -> dict[int, set[int]]:
    keep = np.ones(test.num_ratings, dtype=bool) if min_rating is None else test.r_value >= min_rating
    out: dict[int, set[int]] = {}
    for u, i in zip(test.r_user[keep].tolist(), test.r_item[keep].tolist()):
        out.setdefault(u, set()).add(i)
    return out


test_items_by_user.__test__ = False  # not a pytest test


def mean_precision(model: Recommender, test: RatingDataset, k: int = 10,
                   min_rating: int | None = None) -> float:
    """Mean precision@k over users that have held-out ratings and a model row."""
    truth = test_items_by_user(test, min_rating)
    known = set(model.user_ids.tolist())
    users = sorted(u for u in truth if u in known)
    if not users:
        return 0.0
    return float(np.mean([precision_at_k(model.recommend(u, k).items, truth[u], k) for u in users]))


@dataclass
class GridResult:
    algorithm: str
    best_hp: object
    best_precision: float
    table: list[tuple[dict, float | None]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "best_hp": asdict(self.best_hp),
            "best_precision": self.best_precision,
            "table": [{"hp": hp, "precision": p} for hp, p in self.table],
        }


def grid_search(algorithm: str, train: RatingDataset, validation: RatingDataset | None = None,
                grid: HyperParamGrid | None = None, k: int = 10, seed: int = 0,
                min_rating: int | None = None) -> GridResult:
    """Pick the configuration with the highest validation precision@k.

    Without ``validation`` the training partition is split 90/10 (seeded) and
    models are tuned on the 90%. Ties keep the earlier grid entry.
    """
    grid = grid or HyperParamGrid()
    configs = grid.configs(algorithm)
    if validation is None:
        inner = split_train_test(train, 0.9, seed)
        train, validation = inner.train, inner.test
    best, best_p, table = None, -1.0, []
    for hp in configs:
        try:
            model = fit(algorithm, train, hp, seed)
        except (TrainingDivergence, InvalidHyperParams, ValueError) as e:
            log.warning("%s %s failed: %s", algorithm, hp, e)
            table.append((asdict(hp), None))
            continue
        p = mean_precision(model, validation, k, min_rating)
        log.info("%s %s precision@%d=%.4f", algorithm, hp, k, p)
        table.append((asdict(hp), p))
        if p > best_p:
            best, best_p = hp, p
    if best is None:
        raise RuntimeError(f"every {algorithm} configuration failed to train")
    return GridResult(algorithm, best, best_p, table)


# ---------------------------------------------------------------------------
# checkpoints: a zip of .npy arrays plus meta.json

def save_checkpoint(model: Recommender, path) -> Path:
    path = Path(path)
    meta = {
        "algorithm": model.algorithm,
        "hp": asdict(model.hp),
        "seed": model.seed,
        "fingerprint": model.fingerprint,
        "shape": list(model.R.shape),
        "loss_history": model.loss_history,
    }
    arrays = {"user_ids": model.user_ids, "item_ids": model.item_ids,
              "R_data": model.R.data, "R_indices": model.R.indices, "R_indptr": model.R.indptr,
              **{f"param_{k}": v for k, v in model._params().items()}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        # fixed timestamps keep checkpoints byte-reproducible
        zf.writestr(zipfile.ZipInfo("meta.json", (1980, 1, 1, 0, 0, 0)),
                    json.dumps(meta, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", (1980, 1, 1, 0, 0, 0)), buf.getvalue(),
                        compress_type=zipfile.ZIP_DEFLATED)
    return path


def load_checkpoint(path) -> Recommender:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        arrays = {n[:-4]: np.load(io.BytesIO(zf.read(n)), allow_pickle=False)
                  for n in zf.namelist() if n.endswith(".npy")}
    algorithm = meta["algorithm"]
    model = MODELS[algorithm](make_params(algorithm, meta["hp"]), meta["seed"])
    model.fingerprint = meta["fingerprint"]
    model.loss_history = meta["loss_history"]
    model.user_ids = arrays["user_ids"]
    model.item_ids = arrays["item_ids"]
    model.R = sp.csr_matrix((arrays["R_data"], arrays["R_indices"], arrays["R_indptr"]),
                            shape=tuple(meta["shape"]))
    model._set_params({k[6:]: v for k, v in arrays.items() if k.startswith("param_")})
    model._freeze()
    return model
