"""Rating data: MovieLens-1M parsing, canonical CSV serialization, seeded
per-user splitting and a synthetic generator for tests."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RATING_DOMAIN: tuple[int, ...] = (1, 2, 3, 4, 5)


class DataError(ValueError):
    """Raised for malformed or inconsistent rating data."""


class Gender(str, Enum):
    MALE = "M"
    FEMALE = "F"


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    gender: Gender


@dataclass(frozen=True)
class ItemRecord:
    item_id: int
    genres: frozenset[str]


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    value: int
    timestamp: int = 0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Immutable rating data with user gender and item genre metadata.

    Ratings are stored column-wise, sorted by (user, item), so each user's
    profile is a contiguous slice (see ``user_slice``).
    """

    user_ids: np.ndarray
    genders: tuple[Gender, ...]
    item_ids: np.ndarray
    item_genres: tuple[frozenset[str], ...]
    r_user: np.ndarray
    r_item: np.ndarray
    r_value: np.ndarray
    r_time: np.ndarray
    rating_domain: tuple[int, ...] = RATING_DOMAIN

    # -- construction -------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        users: Iterable[UserRecord],
        items: Iterable[ItemRecord],
        ratings: Iterable[RatingRecord],
        rating_domain: Sequence[int] = RATING_DOMAIN,
    ) -> "RatingDataset":
        users = list(users)
        items = list(items)
        ratings = list(ratings)
        return cls.from_arrays(
            user_ids=[u.user_id for u in users],
            genders=[u.gender for u in users],
            item_ids=[i.item_id for i in items],
            item_genres=[i.genres for i in items],
            r_user=[r.user_id for r in ratings],
            r_item=[r.item_id for r in ratings],
            r_value=[r.value for r in ratings],
            r_time=[r.timestamp for r in ratings],
            rating_domain=rating_domain,
        )

    @classmethod
    def from_arrays(
        cls,
        user_ids,
        genders,
        item_ids,
        item_genres,
        r_user,
        r_item,
        r_value,
        r_time=None,
        rating_domain: Sequence[int] = RATING_DOMAIN,
    ) -> "RatingDataset":
        """Validate and build a dataset. Raises ``DataError`` on any
        violated invariant."""
        user_ids = np.asarray(user_ids, dtype=np.int64).reshape(-1)
        item_ids = np.asarray(item_ids, dtype=np.int64).reshape(-1)
        genders = tuple(Gender(g) for g in genders)
        item_genres = tuple(frozenset(g) for g in item_genres)
        r_user = np.asarray(r_user, dtype=np.int64).reshape(-1)
        r_item = np.asarray(r_item, dtype=np.int64).reshape(-1)
        r_value = np.asarray(r_value, dtype=np.int64).reshape(-1)
        r_time = (np.zeros_like(r_user) if r_time is None
                  else np.asarray(r_time, dtype=np.int64).reshape(-1))
        domain = tuple(sorted(int(v) for v in rating_domain))

        if len(genders) != len(user_ids):
            raise DataError("one gender per user required")
        if len(item_genres) != len(item_ids):
            raise DataError("one genre set per item required")
        if not (len(r_user) == len(r_item) == len(r_value) == len(r_time)):
            raise DataError("rating columns differ in length")
        if len(np.unique(user_ids)) != len(user_ids):
            raise DataError("duplicate user id")
        if len(np.unique(item_ids)) != len(item_ids):
            raise DataError("duplicate item id")
        if any(len(g) == 0 for g in item_genres):
            bad = next(int(i) for i, g in zip(item_ids, item_genres) if not g)
            raise DataError(f"item {bad} has no genres")

        # canonical order: users and items ascending by id
        uo = np.argsort(user_ids, kind="stable")
        io = np.argsort(item_ids, kind="stable")
        user_ids, genders = user_ids[uo], tuple(genders[k] for k in uo)
        item_ids, item_genres = item_ids[io], tuple(item_genres[k] for k in io)

        if len(r_user):
            known_u = np.isin(r_user, user_ids)
            if not known_u.all():
                raise DataError(f"rating references unknown user {int(r_user[~known_u][0])}")
            known_i = np.isin(r_item, item_ids)
            if not known_i.all():
                raise DataError(f"rating references unknown item {int(r_item[~known_i][0])}")
            in_domain = np.isin(r_value, domain)
            if not in_domain.all():
                raise DataError(f"rating value {int(r_value[~in_domain][0])} outside domain {domain}")
        order = np.lexsort((r_item, r_user))
        r_user, r_item, r_value, r_time = (a[order] for a in (r_user, r_item, r_value, r_time))
        dup = (r_user[1:] == r_user[:-1]) & (r_item[1:] == r_item[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DataError(f"duplicate rating for user {int(r_user[k])}, item {int(r_item[k])}")

        return cls(
            user_ids=_readonly(user_ids),
            genders=genders,
            item_ids=_readonly(item_ids),
            item_genres=item_genres,
            r_user=_readonly(r_user),
            r_item=_readonly(r_item),
            r_value=_readonly(r_value),
            r_time=_readonly(r_time),
            rating_domain=domain,
        )

    def with_ratings(self, mask: np.ndarray) -> "RatingDataset":
        """Same users/items, keeping only ratings where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return RatingDataset(
            user_ids=self.user_ids,
            genders=self.genders,
            item_ids=self.item_ids,
            item_genres=self.item_genres,
            r_user=_readonly(self.r_user[mask]),
            r_item=_readonly(self.r_item[mask]),
            r_value=_readonly(self.r_value[mask]),
            r_time=_readonly(self.r_time[mask]),
            rating_domain=self.rating_domain,
        )

    # -- record views -------------------------------------------------------

    @property
    def users(self) -> list[UserRecord]:
        return [UserRecord(int(u), g) for u, g in zip(self.user_ids, self.genders)]

    @property
    def items(self) -> list[ItemRecord]:
        return [ItemRecord(int(i), g) for i, g in zip(self.item_ids, self.item_genres)]

    @property
    def ratings(self) -> list[RatingRecord]:
        return [RatingRecord(int(u), int(i), int(v), int(t))
                for u, i, v, t in zip(self.r_user, self.r_item, self.r_value, self.r_time)]

    @property
    def num_ratings(self) -> int:
        return len(self.r_user)

    def __len__(self) -> int:
        return self.num_ratings

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingDataset):
            return NotImplemented
        return (self.genders == other.genders
                and self.item_genres == other.item_genres
                and self.rating_domain == other.rating_domain
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("user_ids", "item_ids", "r_user", "r_item", "r_value", "r_time")))

    __hash__ = None  # type: ignore[assignment]

    # -- indexing -----------------------------------------------------------

    @cached_property
    def user_index(self) -> np.ndarray:
        """Dense user position of every rating."""
        return np.searchsorted(self.user_ids, self.r_user)

    @cached_property
    def item_index(self) -> np.ndarray:
        """Dense item position of every rating."""
        return np.searchsorted(self.item_ids, self.r_item)

    @cached_property
    def user_indptr(self) -> np.ndarray:
        counts = np.bincount(self.user_index, minlength=len(self.user_ids))
        return np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    @cached_property
    def profile_sizes(self) -> np.ndarray:
        return np.diff(self.user_indptr)

    def user_position(self, user_id: int) -> int:
        k = int(np.searchsorted(self.user_ids, user_id))
        if k >= len(self.user_ids) or self.user_ids[k] != user_id:
            raise KeyError(f"unknown user {user_id}")
        return k

    def item_position(self, item_id: int) -> int:
        k = int(np.searchsorted(self.item_ids, item_id))
        if k >= len(self.item_ids) or self.item_ids[k] != item_id:
            raise KeyError(f"unknown item {item_id}")
        return k

    def user_slice(self, user_id: int) -> slice:
        k = self.user_position(user_id)
        return slice(int(self.user_indptr[k]), int(self.user_indptr[k + 1]))

    def user_items(self, user_id: int) -> np.ndarray:
        return self.r_item[self.user_slice(user_id)]

    def gender_of(self, user_id: int) -> Gender:
        return self.genders[self.user_position(user_id)]

    def users_of(self, gender: Gender) -> np.ndarray:
        mask = np.array([g is gender for g in self.genders], dtype=bool)
        return self.user_ids[mask]

    @cached_property
    def gender_array(self) -> np.ndarray:
        """Per-user gender code as a string array ('M'/'F')."""
        return np.array([g.value for g in self.genders])

    def ratings_by_gender(self) -> dict[Gender, int]:
        codes = self.gender_array[self.user_index]
        return {g: int((codes == g.value).sum()) for g in Gender}

    def genres_of(self, item_id: int) -> frozenset[str]:
        return self.item_genres[self.item_position(item_id)]

    def fingerprint(self) -> str:
        """sha256 over the rating columns; identifies a training set."""
        h = hashlib.sha256()
        for a in (self.r_user, self.r_item, self.r_value):
            h.update(np.ascontiguousarray(a, dtype="<i8").tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# MovieLens-1M format

def _read_lines(path: Path) -> list[str]:
    # ML1M movie titles are latin-1
    return Path(path).read_bytes().decode("latin-1").splitlines()


def _fields(line: str, n: int, path: Path, lineno: int) -> list[str]:
    parts = line.split("::")
    if len(parts) != n:
        raise DataError(f"{path}:{lineno}: expected {n} '::'-separated fields, got {len(parts)}")
    return parts


def _int(s: str, path: Path, lineno: int, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise DataError(f"{path}:{lineno}: bad {what} {s!r}") from None


def load_dataset(ratings_file, users_file, movies_file) -> RatingDataset:
    """Parse the ``::``-separated ML1M ratings/users/movies files."""
    users_file, movies_file, ratings_file = Path(users_file), Path(movies_file), Path(ratings_file)

    uids, genders = [], []
    for n, line in enumerate(_read_lines(users_file), 1):
        if not line.strip():
            continue
        f = _fields(line, 5, users_file, n)
        if f[1] not in ("M", "F"):
            raise DataError(f"{users_file}:{n}: bad gender {f[1]!r}")
        uids.append(_int(f[0], users_file, n, "user id"))
        genders.append(Gender(f[1]))

    iids, genres = [], []
    for n, line in enumerate(_read_lines(movies_file), 1):
        if not line.strip():
            continue
        # titles may in principle contain '::'; genres are always last
        head, sep, g = line.rpartition("::")
        if not sep or "::" not in head:
            raise DataError(f"{movies_file}:{n}: expected 3 '::'-separated fields")
        iids.append(_int(head.split("::", 1)[0], movies_file, n, "movie id"))
        gs = frozenset(x for x in g.strip().split("|") if x)
        if not gs:
            raise DataError(f"{movies_file}:{n}: movie without genres")
        genres.append(gs)

    lines = _read_lines(ratings_file)
    cols = np.zeros((4, len(lines)), dtype=np.int64)
    m = 0
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        f = _fields(line, 4, ratings_file, n)
        try:
            cols[0, m], cols[1, m], cols[2, m], cols[3, m] = int(f[0]), int(f[1]), int(f[2]), int(f[3])
        except ValueError:
            raise DataError(f"{ratings_file}:{n}: non-integer field in {line!r}") from None
        m += 1
    cols = cols[:, :m]
    try:
        return RatingDataset.from_arrays(uids, genders, iids, genres, cols[0], cols[1], cols[2], cols[3])
    except DataError as e:
        raise DataError(f"{ratings_file}: {e}") from None


def write_ml1m(ds: RatingDataset, directory) -> tuple[Path, Path, Path]:
    """Write ``ds`` in ML1M format (age/occupation/zip/title are placeholders)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rp, up, mp = d / "ratings.dat", d / "users.dat", d / "movies.dat"
    with open(up, "w", encoding="latin-1", newline="\n") as fh:
        for u, g in zip(ds.user_ids, ds.genders):
            fh.write(f"{u}::{g.value}::1::0::00000\n")
    with open(mp, "w", encoding="latin-1", newline="\n") as fh:
        for i, g in zip(ds.item_ids, ds.item_genres):
            fh.write(f"{i}::Item {i}::{'|'.join(sorted(g))}\n")
    with open(rp, "w", encoding="latin-1", newline="\n") as fh:
        for u, i, v, t in zip(ds.r_user, ds.r_item, ds.r_value, ds.r_time):
            fh.write(f"{u}::{i}::{v}::{t}\n")
    return rp, up, mp


# ---------------------------------------------------------------------------
# canonical CSV serialization (one file per record type)

def save_csv(ds: RatingDataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "users.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "gender"])
        w.writerows((int(u), g.value) for u, g in zip(ds.user_ids, ds.genders))
    with open(d / "items.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "genres"])
        w.writerows((int(i), "|".join(sorted(g))) for i, g in zip(ds.item_ids, ds.item_genres))
    with open(d / "ratings.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "item_id", "rating", "timestamp"])
        w.writerows(zip(ds.r_user.tolist(), ds.r_item.tolist(), ds.r_value.tolist(), ds.r_time.tolist()))
    with open(d / "domain.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rating_value"])
        w.writerows((v,) for v in ds.rating_domain)


def load_csv(directory) -> RatingDataset:
    d = Path(directory)

    def rows(name):
        with open(d / name, encoding="utf-8", newline="") as fh:
            r = csv.reader(fh)
            next(r)
            return list(r)

    users = rows("users.csv")
    items = rows("items.csv")
    domain = [int(v[0]) for v in rows("domain.csv")] if (d / "domain.csv").exists() else RATING_DOMAIN
    ratings = np.array([[int(x) for x in row] for row in rows("ratings.csv")], dtype=np.int64).reshape(-1, 4)
    return RatingDataset.from_arrays(
        [int(u) for u, _ in users], [g for _, g in users],
        [int(i) for i, _ in items], [frozenset(g.split("|")) for _, g in items],
        ratings[:, 0], ratings[:, 1], ratings[:, 2], ratings[:, 3],
        rating_domain=domain,
    )


# ---------------------------------------------------------------------------
# splitting

@dataclass(frozen=True, eq=False)
class SplitPair:
    train: RatingDataset
    test: RatingDataset
    seed: int
    ratio: float


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def split_train_test(ds: RatingDataset, ratio: float = 0.8, seed: int = 42) -> SplitPair:
    """Per-user random split: round(ratio * N_u) of each user's ratings go to
    train, the rest to test. Pure function of (ds, ratio, seed)."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    rng = np.random.default_rng(np.uint64(seed))
    keys = rng.random(ds.num_ratings)
    uidx = ds.user_index
    order = np.lexsort((keys, uidx))
    # ratings are grouped by user, so rank-within-user is position minus group start
    rank = np.empty(ds.num_ratings, dtype=np.int64)
    rank[order] = np.arange(ds.num_ratings) - ds.user_indptr[uidx[order]]
    n_train = round_half_up(ratio * ds.profile_sizes)
    in_train = rank < n_train[uidx]
    return SplitPair(ds.with_ratings(in_train), ds.with_ratings(~in_train), int(seed), float(ratio))


# ---------------------------------------------------------------------------
# synthetic data

DEFAULT_GENRES = ("Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi", "Thriller")


@dataclass(frozen=True)
class SyntheticSpec:
    num_users: int = 50
    num_items: int = 40
    gender_ratio: float = 0.5
    rating_distribution: tuple[float, ...] = (0.06, 0.11, 0.26, 0.35, 0.22)
    seed: int = 0
    min_ratings: int = 1
    max_ratings: int | None = None
    latent_dim: int = 3
    genres: tuple[str, ...] = DEFAULT_GENRES
    sizes: tuple[int, ...] | None = None


def generate_synthetic(spec: SyntheticSpec) -> RatingDataset:
    """Deterministic low-rank synthetic ratings with popularity skew.

    Ratings come from a latent-factor score mapped onto the rating domain by
    quantiles of ``rating_distribution``; ``sizes`` pins per-user profile
    sizes when given.
    """
    nu, ni = spec.num_users, spec.num_items
    if nu < 1 or ni < 1:
        raise ValueError("need at least one user and one item")
    p = np.asarray(spec.rating_distribution, dtype=np.float64)
    if len(p) != len(RATING_DOMAIN) or (p < 0).any() or p.sum() <= 0:
        raise ValueError("rating_distribution must be 5 non-negative weights")
    if not 0.0 <= spec.gender_ratio <= 1.0:
        raise ValueError("gender_ratio must be in [0, 1]")
    hi = ni if spec.max_ratings is None else min(spec.max_ratings, ni)
    lo = max(1, spec.min_ratings)
    if spec.sizes is not None:
        if len(spec.sizes) != nu or min(spec.sizes) < 1 or max(spec.sizes) > ni:
            raise ValueError("sizes must give 1..num_items ratings for each user")
    elif lo > hi:
        raise ValueError("min_ratings exceeds available items")

    rng = np.random.default_rng(spec.seed)
    n_male = int(round_half_up(spec.gender_ratio * nu))
    gender = np.array([Gender.FEMALE] * nu, dtype=object)
    gender[rng.permutation(nu)[:n_male]] = Gender.MALE

    glabels = np.asarray(spec.genres)
    item_genres = []
    for _ in range(ni):
        k = 1 + rng.binomial(min(2, len(glabels) - 1), 0.3)
        item_genres.append(frozenset(rng.choice(glabels, size=k, replace=False).tolist()))

    sizes = (np.asarray(spec.sizes, dtype=np.int64) if spec.sizes is not None
             else rng.integers(lo, hi + 1, size=nu))
    pop = 1.0 / np.arange(1, ni + 1) ** 0.8
    pop = pop[rng.permutation(ni)]
    pop /= pop.sum()

    U = rng.normal(size=(nu, spec.latent_dim))
    V = rng.normal(size=(ni, spec.latent_dim))
    bias = rng.normal(scale=0.5, size=ni)
    r_user, r_item, r_score = [], [], []
    for u in range(nu):
        chosen = np.sort(rng.choice(ni, size=int(sizes[u]), replace=False, p=pop))
        r_user.append(np.full(len(chosen), u))
        r_item.append(chosen)
        r_score.append(U[u] @ V[chosen].T + bias[chosen] + rng.normal(scale=0.5, size=len(chosen)))
    r_user = np.concatenate(r_user)
    r_item = np.concatenate(r_item)
    score = np.concatenate(r_score)

    cdf = np.cumsum(p / p.sum())
    ranks = np.empty(len(score))
    ranks[np.argsort(score, kind="stable")] = (np.arange(len(score)) + 0.5) / len(score)
    values = np.asarray(RATING_DOMAIN)[np.minimum(np.searchsorted(cdf, ranks), len(RATING_DOMAIN) - 1)]
    times = rng.integers(9.5e8, 1.0e9, size=len(values))

    return RatingDataset.from_arrays(
        np.arange(1, nu + 1), gender.tolist(), np.arange(1, ni + 1), item_genres,
        r_user + 1, r_item + 1, values, times,
    )
