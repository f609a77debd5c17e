"""Hyperparameter containers and the search grid."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field, fields


class InvalidHyperParams(ValueError):
    pass


@dataclass(frozen=True)
class KNNParams:
    neighbors: int = 50
    shrinkage: float = 100.0
    scoring: str = "similarity"

    def validate(self) -> None:
        if self.scoring not in ("similarity", "rating"):
            raise InvalidHyperParams("scoring must be 'similarity' or 'rating'")
        if self.neighbors < 1:
            raise InvalidHyperParams("neighbors must be >= 1")
        if self.shrinkage < 0:
            raise InvalidHyperParams("shrinkage must be >= 0")


@dataclass(frozen=True)
class MFParams:
    factors: int = 20
    learning_rate: float = 0.01
    regularization: float = 0.1
    epochs: int = 30

    def validate(self) -> None:
        if self.factors < 1:
            raise InvalidHyperParams("factors must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidHyperParams("learning_rate must be > 0")
        if self.regularization < 0:
            raise InvalidHyperParams("regularization must be >= 0")
        if self.epochs < 0:
            raise InvalidHyperParams("epochs must be >= 0")


ALGORITHMS = ("UserKNN", "ItemKNN", "SVDpp", "ListRankMF")
KNN_ALGORITHMS = ("UserKNN", "ItemKNN")


def params_class(algorithm: str):
    if algorithm in KNN_ALGORITHMS:
        return KNNParams
    if algorithm in ("SVDpp", "ListRankMF"):
        return MFParams
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def make_params(algorithm: str, values: dict | None = None):
    cls = params_class(algorithm)
    values = dict(values or {})
    known = {f.name for f in fields(cls)}
    extra = set(values) - known
    if extra:
        raise InvalidHyperParams(f"{algorithm} does not take {sorted(extra)}")
    hp = cls(**values)
    hp.validate()
    return hp


@dataclass(frozen=True)
class HyperParamGrid:
    """Candidate values per hyperparameter; configs enumerate the product in
    declaration order (last field varies fastest)."""

    neighbors: tuple[int, ...] = (10, 30, 50, 80)
    shrinkage: tuple[float, ...] = (100.0,)
    scoring: tuple[str, ...] = ("similarity",)
    factors: tuple[int, ...] = (20, 50, 100)
    learning_rate: tuple[float, ...] = (0.005, 0.01, 0.05)
    regularization: tuple[float, ...] = (0.01, 0.1)
    epochs: tuple[int, ...] = (30, 100)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParamGrid":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidHyperParams(f"unknown grid fields {sorted(extra)}")
        return cls(**{k: tuple(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    def configs(self, algorithm: str) -> list:
        cls = params_class(algorithm)
        names = [f.name for f in fields(cls)]
        lists = [getattr(self, n) for n in names]
        if any(len(v) == 0 for v in lists):
            raise InvalidHyperParams(f"empty candidate list in grid for {algorithm}")
        out = []
        for combo in itertools.product(*lists):
            hp = cls(**dict(zip(names, combo)))
            hp.validate()
            out.append(hp)
        return out
