"""Run configuration: JSON file < command-line flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .audit import FACTORS, OUTCOMES
from .recommenders.params import ALGORITHMS, HyperParamGrid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    ratings: str = ""
    users: str = ""
    movies: str = ""
    ratio: float = 0.8
    seed: int = 42
    algorithms: tuple[str, ...] = ALGORITHMS
    grid: HyperParamGrid = field(default_factory=HyperParamGrid)
    k: int = 10
    factors: tuple[str, ...] = FACTORS
    metrics: tuple[str, ...] = OUTCOMES
    buckets: int = 20
    alpha: float = 0.01
    min_rating: int | None = None
    anomaly_basis: str = "full"
    out: str = "runs"

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if check_paths:
            for name in ("ratings", "users", "movies"):
                p = getattr(self, name)
                if not p:
                    raise ConfigError(f"missing dataset path '{name}'")
                if not Path(p).is_file():
                    raise ConfigError(f"{name} file not found: {p}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("ratio must be in (0, 1]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.buckets < 2:
            raise ConfigError("buckets must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}")
        for f in self.factors:
            if f not in FACTORS:
                raise ConfigError(f"unknown factor {f!r}")
        for m in self.metrics:
            if m not in OUTCOMES:
                raise ConfigError(f"unknown metric {m!r}")
        if self.anomaly_basis not in ("full", "train"):
            raise ConfigError("anomaly_basis must be 'full' or 'train'")
        try:
            for a in self.algorithms:
                self.grid.configs(a)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad grid: {e}") from None
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        d["algorithms"] = list(self.algorithms)
        d["factors"] = list(self.factors)
        d["metrics"] = list(self.metrics)
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        if "data_dir" in d:
            root = Path(d.pop("data_dir"))
            for name, fname in (("ratings", "ratings.dat"), ("users", "users.dat"), ("movies", "movies.dat")):
                d.setdefault(name, str(root / fname))
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        if base_dir is not None:
            for name in ("ratings", "users", "movies"):
                if d.get(name) and not Path(d[name]).is_absolute():
                    d[name] = str(base_dir / d[name])
        try:
            if "grid" in d:
                d["grid"] = HyperParamGrid.from_dict(d["grid"])
            for name in ("algorithms", "factors", "metrics"):
                if name in d:
                    d[name] = tuple(d[name])
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def override(self, **flags) -> "RunConfig":
        """Apply non-None flag values."""
        return replace(self, **{k: v for k, v in flags.items() if v is not None})
