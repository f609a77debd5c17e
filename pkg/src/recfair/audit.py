"""Group-level fairness analysis: factor-sorted buckets per gender, bucket
means of an outcome metric, and the correlation across buckets."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .data import Gender, RatingDataset, SplitPair
from .metrics import (OutcomeMetrics, UserFactors, genre_distribution, miscalibration,
                      pearson_correlation, precision_at_k, user_factors)
from .recommenders import Recommender, test_items_by_user

FACTORS = ("anomaly", "entropy", "size")
OUTCOMES = ("precision", "miscalibration")


@dataclass(frozen=True)
class BucketSpec:
    factor: str
    gender: Gender
    num_buckets: int = 20

    def __post_init__(self):
        if self.factor not in FACTORS:
            raise ValueError(f"factor must be one of {FACTORS}")
        if self.num_buckets < 2:
            raise ValueError("num_buckets must be >= 2")


@dataclass(frozen=True)
class GroupRow:
    bucket: int
    mean_factor: float
    mean_outcome: float
    user_count: int

    @property
    def empty(self) -> bool:
        return self.user_count == 0


@dataclass(frozen=True)
class GroupReport:
    spec: BucketSpec
    outcome_metric: str
    rows: tuple[GroupRow, ...]
    correlation: float | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "mean_factor", "mean_outcome", "user_count"])
        for r in self.rows:
            w.writerow([r.bucket, repr(r.mean_factor), repr(r.mean_outcome), r.user_count])
        return buf.getvalue()

    def sidecar(self, **extra) -> dict:
        return {
            "spec": {"factor": self.spec.factor, "gender": self.spec.gender.value,
                     "num_buckets": self.spec.num_buckets},
            "outcome_metric": self.outcome_metric,
            "correlation": self.correlation,
            "tool_version": __version__,
            **extra,
        }

    def write(self, stem, **extra) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` and the ``<stem>.json`` sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        c, j = stem.with_suffix(".csv"), stem.with_suffix(".json")
        c.write_text(self.to_csv(), encoding="utf-8", newline="\n")
        j.write_text(json.dumps(self.sidecar(**extra), indent=2, sort_keys=True) + "\n",
                     encoding="utf-8", newline="\n")
        return c, j


def bucket_users(population: Sequence[tuple[int, float]], num_buckets: int) -> list[list[int]]:
    """Sort (user, value) ascending by value (ties by user id) and cut into
    ``num_buckets`` contiguous groups whose sizes differ by at most one; the
    larger groups come first."""
    n = len(population)
    if num_buckets < 1:
        raise ValueError("num_buckets must be >= 1")
    if n < num_buckets:
        raise ValueError(f"population of {n} is smaller than {num_buckets} buckets")
    ordered = [u for u, _ in sorted(population, key=lambda p: (p[1], p[0]))]
    base, extra = divmod(n, num_buckets)
    out, start = [], 0
    for b in range(num_buckets):
        size = base + (1 if b < extra else 0)
        out.append(ordered[start:start + size])
        start += size
    return out


def group_aggregate(buckets: Sequence[Sequence[int]], factors: Mapping[int, float],
                    outcomes: Mapping[int, float]) -> list[GroupRow]:
    """Per bucket, the arithmetic means of factor and outcome. Users without
    an outcome are dropped; a bucket left empty gets NaN means and count 0."""
    rows = []
    for b, users in enumerate(buckets):
        kept = [u for u in users if u in outcomes]
        if not kept:
            rows.append(GroupRow(b, math.nan, math.nan, 0))
            continue
        rows.append(GroupRow(b, math.fsum(factors[u] for u in kept) / len(kept),
                             math.fsum(outcomes[u] for u in kept) / len(kept), len(kept)))
    return rows


def report_from_rows(spec: BucketSpec, outcome_metric: str, rows: Sequence[GroupRow]) -> GroupReport:
    full = [r for r in rows if not r.empty]
    corr = (pearson_correlation([r.mean_factor for r in full], [r.mean_outcome for r in full])
            if len(full) >= 2 else None)
    return GroupReport(spec, outcome_metric, tuple(rows), corr)


# ---------------------------------------------------------------------------
# per-user outcomes

def evaluate_outcomes(model: Recommender, split: SplitPair, k: int = 10, alpha: float = 0.01,
                      min_rating: int | None = None) -> dict[int, OutcomeMetrics]:
    """Precision@k and miscalibration for every user with held-out ratings
    and training ratings (cold-start users are skipped).

    Miscalibration compares the genre mix of the user's training profile with
    that of the recommended list, both with uniform item weights.
    """
    covered = test_items_by_user(split.test)
    relevant = covered if min_rating is None else test_items_by_user(split.test, min_rating)
    known = set(model.user_ids.tolist())
    train = split.train
    out = {}
    for u in sorted(covered):
        if u not in known:
            continue
        rec = model.recommend(u, k)
        p = genre_distribution(((i, 1.0) for i in train.user_items(u).tolist()), train)
        q = genre_distribution(((i, 1.0) for i in rec.items), train) if len(rec) else {}
        out[u] = OutcomeMetrics(u, precision_at_k(rec.items, relevant.get(u, ()), k),
                                miscalibration(p, q, alpha))
    return out


def outcome_values(outcomes: Mapping[int, OutcomeMetrics], metric: str) -> dict[int, float]:
    if metric == "precision":
        return {u: o.precision_at_k for u, o in outcomes.items()}
    if metric == "miscalibration":
        return {u: o.miscalibration for u, o in outcomes.items()}
    raise ValueError(f"outcome metric must be one of {OUTCOMES}")


def factor_values(factors: Iterable[UserFactors], factor: str) -> dict[int, float]:
    if factor not in FACTORS:
        raise ValueError(f"factor must be one of {FACTORS}")
    return {f.user_id: float(getattr(f, factor)) for f in factors}


def audit_report(ds: RatingDataset, split: SplitPair, model: Recommender | None, spec: BucketSpec,
                 outcome_metric: str, k: int = 10, alpha: float = 0.01, *,
                 factors: Sequence[UserFactors] | None = None,
                 outcomes: Mapping[int, OutcomeMetrics] | None = None,
                 min_rating: int | None = None) -> GroupReport:
    """Bucket the users of ``spec.gender`` that have outcomes by a factor
    computed on the full dataset and average the outcome per bucket.

    ``factors`` / ``outcomes`` may be passed to reuse earlier computations.
    """
    if outcomes is None:
        if model is None:
            raise ValueError("need a model or precomputed outcomes")
        outcomes = evaluate_outcomes(model, split, k, alpha, min_rating)
    if factors is None:
        factors = user_factors(ds)
    fv = factor_values(factors, spec.factor)
    ov = outcome_values(outcomes, outcome_metric)
    members = set(ds.users_of(spec.gender).tolist())
    population = [(u, fv[u]) for u in sorted(members) if u in ov and u in fv]
    buckets = bucket_users(population, spec.num_buckets)
    return report_from_rows(spec, outcome_metric, group_aggregate(buckets, fv, ov))


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    gender: Gender
    users: int
    precision: float
    miscalibration: float


def summarize(algorithm: str, ds: RatingDataset, outcomes: Mapping[int, OutcomeMetrics]) -> list[SummaryRow]:
    """Mean precision and miscalibration per gender over evaluated users."""
    rows = []
    for g in (Gender.MALE, Gender.FEMALE):
        members = set(ds.users_of(g).tolist())
        vals = [o for u, o in outcomes.items() if u in members]
        rows.append(SummaryRow(
            algorithm, g, len(vals),
            float(np.mean([o.precision_at_k for o in vals])) if vals else math.nan,
            float(np.mean([o.miscalibration for o in vals])) if vals else math.nan,
        ))
    return rows
