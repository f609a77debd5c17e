"""Acceptance checks, one test per criterion.

Criteria 1-3 need the MovieLens 1M files; point RECFAIR_ML1M_DIR at the
directory holding ratings.dat, users.dat and movies.dat. Without it they
skip. Criteria 4 and 5 always run. Each test records a PASS/FAIL/SKIP line
that is repeated in the terminal summary.
"""

import csv
import json
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

import oracles
from conftest import ml1m_paths, record_criterion
from recfair.cli import cmd_pipeline, stats_table
from recfair.config import RunConfig
from recfair.data import Gender, SyntheticSpec, generate_synthetic, load_dataset, write_ml1m
from recfair.recommenders import ALGORITHMS

TESTS = Path(__file__).parent
REFERENCE_PRECISION = {"UserKNN": 0.214, "ItemKNN": 0.223, "SVDpp": 0.122, "ListRankMF": 0.148}
MISCAL_EXEMPT = {"SVDpp"}
NO_ML1M = "RECFAIR_ML1M_DIR not set or missing ratings.dat/users.dat/movies.dat"


@contextmanager
def criterion(number: int, what: str):
    """Record PASS/FAIL/SKIP for ``number`` around the checks in the block."""
    notes: list[str] = []
    try:
        yield notes
    except pytest.skip.Exception as e:
        record_criterion(number, "SKIP", f"{what} ({e.msg})")
        raise
    except BaseException as e:
        record_criterion(number, "FAIL", f"{what}: {e}".splitlines()[0])
        raise
    record_criterion(number, "PASS", "; ".join([what] + notes))


def _require_ml1m():
    paths = ml1m_paths()
    if paths is None:
        pytest.skip(NO_ML1M)
    return paths


@pytest.fixture(scope="module")
def ml1m_run(tmp_path_factory):
    """One full default-grid pipeline run on ML1M, shared by criteria 2 and 3."""
    paths = ml1m_paths()
    if paths is None:
        return None
    cfg = RunConfig(ratings=str(paths[0]), users=str(paths[1]), movies=str(paths[2]),
                    out=str(tmp_path_factory.mktemp("ml1m")))
    t = time.perf_counter()
    run = cmd_pipeline(cfg)
    return run, time.perf_counter() - t


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------

@pytest.mark.ml1m
def test_criterion_1_profile_statistics():
    with criterion(1, "ML1M per-gender user counts, sizes and anomaly") as notes:
        paths = _require_ml1m()
        t = time.perf_counter()
        ds = load_dataset(*paths)
        rows = {r["gender"]: r for r in stats_table(ds)}
        elapsed = time.perf_counter() - t
        m, f = rows["M"], rows["F"]
        assert (m["users"], f["users"]) == (4331, 1709), f"users M={m['users']} F={f['users']}, want 4331/1709"
        assert abs(m["mean_size"] - 139.2) <= 0.1, f"male size {m['mean_size']:.2f}, want 139.2"
        assert abs(f["mean_size"] - 115.4) <= 0.1, f"female size {f['mean_size']:.2f}, want 115.4"
        assert abs(m["mean_anomaly"] - 0.781) <= 0.005, f"male anomaly {m['mean_anomaly']:.4f}, want 0.781"
        assert abs(f["mean_anomaly"] - 0.808) <= 0.005, f"female anomaly {f['mean_anomaly']:.4f}, want 0.808"
        # entropy has no reference value; check it against the independent oracle
        R = oracles.ratings_dict(ds)
        for g, row in rows.items():
            users = [u for u in ds.users_of(Gender(g)).tolist() if u in R]
            want = sum(oracles.entropy(R, u) for u in users) / len(users)
            assert abs(row["mean_entropy"] - want) <= 1e-12, (g, row["mean_entropy"], want)
        notes.append(f"anomaly M={m['mean_anomaly']:.4f} F={f['mean_anomaly']:.4f}, "
                     f"size M={m['mean_size']:.2f} F={f['mean_size']:.2f}, stats in {elapsed:.1f}s")


@pytest.mark.ml1m
@pytest.mark.slow
def test_criterion_2_directional_gaps(ml1m_run):
    with criterion(2, "ML1M gender gaps and tuned precision within 0.05 of reference") as notes:
        _require_ml1m()
        run, elapsed = ml1m_run
        summary = {(r["algorithm"], r["gender"]): r for r in _read_csv(run / "summary.csv")}
        problems = []
        for algo in ALGORITHMS:
            m, f = summary[(algo, "M")], summary[(algo, "F")]
            if not float(m["precision"]) > float(f["precision"]):
                problems.append(f"{algo}: male precision {m['precision']} <= female {f['precision']}")
            if algo not in MISCAL_EXEMPT and not float(f["miscalibration"]) > float(m["miscalibration"]):
                problems.append(f"{algo}: female miscalibration not above male")
            outcomes = _read_csv(run / "outcomes" / f"{algo}.csv")
            overall = sum(float(o["precision"]) for o in outcomes) / len(outcomes)
            notes.append(f"{algo} P@10={overall:.3f}")
            if abs(overall - REFERENCE_PRECISION[algo]) > 0.05:
                problems.append(f"{algo}: precision {overall:.3f} vs {REFERENCE_PRECISION[algo]}")
        notes.append(f"pipeline {elapsed / 60:.1f} min")
        assert not problems, "; ".join(problems)


@pytest.mark.ml1m
@pytest.mark.slow
def test_criterion_3_entropy_precision_correlation(ml1m_run):
    with criterion(3, "ML1M male entropy-vs-precision correlation >= 0.7") as notes:
        _require_ml1m()
        run, _ = ml1m_run
        low = []
        for algo in ALGORITHMS:
            meta = json.loads((run / "reports" / algo / "entropy_precision_male.json").read_text())
            r = meta["correlation"]
            notes.append(f"{algo} r={r:.3f}" if r is not None else f"{algo} r=undefined")
            if r is None or r < 0.7:
                low.append(notes[-1])
        assert not low, "correlation below 0.7 for " + ", ".join(low)


PROPERTY_MODULES = ["test_data.py", "test_metrics.py", "test_knn.py", "test_mf.py",
                    "test_recommenders.py", "test_audit.py"]


def test_criterion_4_property_suite():
    with criterion(4, "property suite passes without a dataset in under 2 minutes") as notes:
        t = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                               *[str(TESTS / m) for m in PROPERTY_MODULES]],
                              capture_output=True, text=True, cwd=TESTS.parent)
        elapsed = time.perf_counter() - t
        tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
        assert proc.returncode == 0, tail
        assert elapsed < 120, f"took {elapsed:.0f}s"
        notes.append(f"{tail} ({elapsed:.0f}s)")


def test_criterion_5_end_to_end_determinism(tmp_path):
    with criterion(5, "two pipeline runs give byte-identical reports") as notes:
        ds = generate_synthetic(SyntheticSpec(num_users=160, num_items=120, seed=5, min_ratings=10,
                                              max_ratings=60))
        paths = write_ml1m(ds, tmp_path / "data")
        cfg = RunConfig(ratings=str(paths[0]), users=str(paths[1]), movies=str(paths[2]),
                        out=str(tmp_path / "runs"), buckets=10)
        a = cmd_pipeline(cfg, tmp_path / "runs" / "a")
        b = cmd_pipeline(cfg, tmp_path / "runs" / "b")
        files = sorted(p.relative_to(a) for p in (a / "reports").rglob("*") if p.is_file())
        assert len(files) == 96, len(files)  # 48 CSVs, each with a JSON sidecar
        differing = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
        assert not differing, f"{len(differing)} files differ, e.g. {differing[0]}"
        notes.append(f"{len(files)} files compared on synthetic data, default grid")
