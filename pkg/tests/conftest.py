import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from recfair.data import Gender, RatingDataset, SyntheticSpec, generate_synthetic, write_ml1m

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ML1M_DIR = os.environ.get("RECFAIR_ML1M_DIR", "")


def ml1m_paths():
    d = Path(ML1M_DIR) if ML1M_DIR else None
    if d is None or not all((d / f).is_file() for f in ("ratings.dat", "users.dat", "movies.dat")):
        return None
    return d / "ratings.dat", d / "users.dat", d / "movies.dat"


def make_ds(profiles, genders=None, genres=None):
    """profiles: {user: {item: rating}}"""
    users = sorted(profiles)
    items = sorted({i for p in profiles.values() for i in p} | set(genres or {}))
    genders = genders or {u: Gender.MALE if k % 2 == 0 else Gender.FEMALE for k, u in enumerate(users)}
    genres = genres or {}
    r = [(u, i, v) for u in users for i, v in sorted(profiles[u].items())]
    return RatingDataset.from_arrays(
        users, [genders[u] for u in users], items,
        [genres.get(i, frozenset({"Drama"})) for i in items],
        [x[0] for x in r], [x[1] for x in r], [x[2] for x in r])


@st.composite
def rating_profiles(draw, max_users=5, max_items=6, min_users=1):
    """Random {user: {item: rating}} with every user rating >= 1 item."""
    nu = draw(st.integers(min_users, max_users))
    ni = draw(st.integers(1, max_items))
    profiles = {}
    for u in range(1, nu + 1):
        items = draw(st.sets(st.integers(1, ni), min_size=1))
        profiles[u] = {i: draw(st.integers(1, 5)) for i in sorted(items)}
    return profiles


@pytest.fixture
def synthetic():
    return generate_synthetic(SyntheticSpec(num_users=60, num_items=50, seed=3, min_ratings=8, max_ratings=30))


@pytest.fixture
def toy_files(tmp_path):
    """A hand-written 3-user / 3-item ML1M-format fixture."""
    (tmp_path / "users.dat").write_text("1::F::1::10::48067\n2::M::56::16::70072\n3::M::25::15::55117\n")
    (tmp_path / "movies.dat").write_text(
        "1::Toy Story (1995)::Animation|Children's|Comedy\n"
        "2::Jumanji (1995)::Adventure|Children's|Fantasy\n"
        "3::Heat (1995)::Action|Crime|Thriller\n")
    (tmp_path / "ratings.dat").write_text(
        "1::1::5::978300760\n1::3::3::978302109\n2::2::4::978301968\n2::3::2::978300275\n3::1::1::978824291\n")
    return tmp_path


# -- acceptance report ----------------------------------------------------------

ACCEPTANCE: list[str] = []


def record_criterion(number: int, status: str, detail: str) -> None:
    line = f"criterion {number}: {status} - {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
