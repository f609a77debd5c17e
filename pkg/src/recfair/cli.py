"""Command-line front end.

    recfair stats --config run.json
    recfair pipeline --config run.json --out runs/

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data error, 4 training divergence, 5 run directory locked.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path

from . import __version__
from .audit import (BucketSpec, evaluate_outcomes, audit_report, summarize)
from .config import ConfigError, RunConfig
from .data import DataError, Gender, RatingDataset, load_dataset, save_csv, split_train_test
from .metrics import user_factors
from .recommenders import (TrainingDivergence, fit, grid_search, load_checkpoint, make_params,
                           save_checkpoint)

log = logging.getLogger("recfair")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_LOCKED = 0, 1, 2, 3, 4, 5


class StageError(RuntimeError):
    def __init__(self, stage: str, code: int, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage, self.code = stage, code


@contextmanager
def stage(name: str):
    """Tag failures with the pipeline stage and map them to exit codes."""
    t = time.perf_counter()
    log.info("[%s] start", name)
    try:
        yield
    except StageError:
        raise
    except ConfigError as e:
        raise StageError(name, EXIT_CONFIG, str(e)) from e
    except (DataError, OSError) as e:
        raise StageError(name, EXIT_DATA, str(e)) from e
    except TrainingDivergence as e:
        raise StageError(name, EXIT_DIVERGED, str(e)) from e
    except Exception as e:
        raise StageError(name, EXIT_FAIL, f"{type(e).__name__}: {e}") from e
    log.info("[%s] done in %.1fs", name, time.perf_counter() - t)


@contextmanager
def run_lock(directory: Path):
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError("lock", EXIT_LOCKED, f"{directory} is in use (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# configuration

def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    flags = dict(seed=args.seed, out=args.out, k=args.k, buckets=args.buckets,
                 alpha=getattr(args, "alpha", None), ratio=getattr(args, "ratio", None))
    if getattr(args, "data_dir", None):
        d = Path(args.data_dir)
        flags.update(ratings=str(d / "ratings.dat"), users=str(d / "users.dat"), movies=str(d / "movies.dat"))
    if args.algo:
        flags["algorithms"] = tuple(args.algo)
    if args.factor:
        flags["factors"] = tuple(args.factor)
    if args.metric:
        flags["metrics"] = tuple(args.metric)
    return cfg.override(**flags)


def load(cfg: RunConfig) -> RatingDataset:
    with stage("load"):
        cfg.validate()
        return load_dataset(cfg.ratings, cfg.users, cfg.movies)


# ---------------------------------------------------------------------------
# stats (per-gender profile statistics)

def stats_table(ds: RatingDataset) -> list[dict]:
    """Per gender: users, mean anomaly, mean entropy (nats), mean size.

    Only users with at least one rating are counted; genders without such
    users produce no row.
    """
    factors = {f.user_id: f for f in user_factors(ds)}
    rows = []
    for g in (Gender.MALE, Gender.FEMALE):
        fs = [factors[u] for u in ds.users_of(g).tolist() if u in factors]
        if not fs:
            continue
        rows.append({
            "gender": g.value,
            "users": len(fs),
            "ratings": sum(f.size for f in fs),
            "mean_anomaly": math.fsum(f.anomaly for f in fs) / len(fs),
            "mean_entropy": math.fsum(f.entropy for f in fs) / len(fs),
            "mean_size": math.fsum(f.size for f in fs) / len(fs),
        })
    return rows


STATS_HEADER = ["gender", "users", "ratings", "mean_anomaly", "mean_entropy", "mean_size"]


def cmd_stats(cfg: RunConfig, out=None, as_json: bool = False) -> list[dict]:
    out = out or sys.stdout
    ds = load(cfg)
    with stage("stats"):
        rows = stats_table(ds)
    if as_json:
        print(json.dumps(rows, indent=2), file=out)
    else:
        print(f"{'gender':<7}{'#users':>8}{'ratings':>10}{'anomaly':>10}{'entropy':>10}{'size':>9}", file=out)
        for r in rows:
            print(f"{r['gender']:<7}{r['users']:>8,}{r['ratings']:>10,}{r['mean_anomaly']:>10.3f}"
                  f"{r['mean_entropy']:>10.3f}{r['mean_size']:>9.1f}", file=out)
    return rows


def cmd_ingest(cfg: RunConfig) -> Path:
    ds = load(cfg)
    with stage("ingest"):
        dest = Path(cfg.out) / "dataset"
        save_csv(ds, dest)
        counts = ds.ratings_by_gender()
        print(f"{len(ds.user_ids)} users, {len(ds.item_ids)} items, {ds.num_ratings} ratings "
              f"({counts[Gender.MALE]} male, {counts[Gender.FEMALE]} female) -> {dest}")
    return dest


def cmd_split(cfg: RunConfig) -> Path:
    ds = load(cfg)
    with stage("split"):
        sp = split_train_test(ds, cfg.ratio, cfg.seed)
        dest = Path(cfg.out) / "split"
        save_csv(sp.train, dest / "train")
        save_csv(sp.test, dest / "test")
        _write_json(dest / "split.json", {"ratio": sp.ratio, "seed": sp.seed,
                                          "train": sp.train.num_ratings, "test": sp.test.num_ratings,
                                          "train_fingerprint": sp.train.fingerprint()})
        print(f"train {sp.train.num_ratings}, test {sp.test.num_ratings} -> {dest}")
    return dest


def cmd_gridsearch(cfg: RunConfig) -> dict:
    ds = load(cfg)
    sp = split_train_test(ds, cfg.ratio, cfg.seed)
    results = {}
    for algo in cfg.algorithms:
        with stage(f"gridsearch:{algo}"):
            res = grid_search(algo, sp.train, grid=cfg.grid, k=cfg.k, seed=cfg.seed, min_rating=cfg.min_rating)
            _write_json(Path(cfg.out) / "gridsearch" / f"{algo}.json", res.to_dict())
            print(f"{algo}: best {res.best_hp} validation precision@{cfg.k}={res.best_precision:.4f}")
            results[algo] = res
    return results


def _hp_for(algo: str, hp_json: str | None, grid_dir: str | None):
    if hp_json:
        return make_params(algo, json.loads(hp_json))
    if grid_dir:
        return make_params(algo, json.loads((Path(grid_dir) / f"{algo}.json").read_text())["best_hp"])
    return make_params(algo, {})


def cmd_train(cfg: RunConfig, hp_json: str | None = None, grid_dir: str | None = None) -> list[Path]:
    ds = load(cfg)
    sp = split_train_test(ds, cfg.ratio, cfg.seed)
    paths = []
    for algo in cfg.algorithms:
        with stage(f"train:{algo}"):
            model = fit(algo, sp.train, _hp_for(algo, hp_json, grid_dir), cfg.seed)
            p = Path(cfg.out) / "models" / f"{algo}.ckpt"
            p.parent.mkdir(parents=True, exist_ok=True)
            paths.append(save_checkpoint(model, p))
            print(f"{algo} -> {p}")
    return paths


def _checkpoint_model(path, sp):
    model = load_checkpoint(path)
    if model.fingerprint != sp.train.fingerprint():
        raise ConfigError(f"{path} was trained on a different split (fingerprint mismatch)")
    return model


def _outcome_rows(outcomes):
    return [(u, repr(o.precision_at_k), repr(o.miscalibration)) for u, o in sorted(outcomes.items())]


def cmd_evaluate(cfg: RunConfig, checkpoints) -> list:
    ds = load(cfg)
    sp = split_train_test(ds, cfg.ratio, cfg.seed)
    summary = []
    for ck in checkpoints:
        with stage(f"evaluate:{Path(ck).stem}"):
            model = _checkpoint_model(ck, sp)
            outcomes = evaluate_outcomes(model, sp, cfg.k, cfg.alpha, cfg.min_rating)
            _write_csv(Path(cfg.out) / "outcomes" / f"{model.algorithm}.csv",
                       ["user_id", "precision", "miscalibration"], _outcome_rows(outcomes))
            summary += summarize(model.algorithm, ds, outcomes)
    _print_summary(summary)
    return summary


def cmd_audit(cfg: RunConfig, checkpoints) -> list[Path]:
    ds = load(cfg)
    sp = split_train_test(ds, cfg.ratio, cfg.seed)
    factors = _factors(cfg, ds, sp)
    written = []
    for ck in checkpoints:
        with stage(f"audit:{Path(ck).stem}"):
            model = _checkpoint_model(ck, sp)
            outcomes = evaluate_outcomes(model, sp, cfg.k, cfg.alpha, cfg.min_rating)
            written += _write_reports(cfg, Path(cfg.out) / "reports", model.algorithm, ds, factors, outcomes)
    return written


def _factors(cfg: RunConfig, ds, sp):
    return user_factors(ds, basis=sp.train if cfg.anomaly_basis == "train" else None)


def _write_reports(cfg, root: Path, algo, ds, factors, outcomes) -> list[Path]:
    written = []
    for factor in cfg.factors:
        for metric in cfg.metrics:
            for g in (Gender.MALE, Gender.FEMALE):
                rep = audit_report(ds, None, None, BucketSpec(factor, g, cfg.buckets), metric,
                                   factors=factors, outcomes=outcomes)
                written += rep.write(root / algo / f"{factor}_{metric}_{g.name.lower()}",
                                     algorithm=algo, seed=cfg.seed, k=cfg.k)
    return written


def _print_summary(rows) -> None:
    print(f"{'algorithm':<12}{'precision M':>13}{'precision F':>13}{'miscal M':>11}{'miscal F':>11}")
    by_algo = {}
    for r in rows:
        by_algo.setdefault(r.algorithm, {})[r.gender] = r
    for algo, g in by_algo.items():
        m, f = g[Gender.MALE], g[Gender.FEMALE]
        print(f"{algo:<12}{m.precision:>13.3f}{f.precision:>13.3f}{m.miscalibration:>11.3f}{f.miscalibration:>11.3f}")


def _new_run_dir(root: Path) -> Path:
    stamp = datetime.now().strftime("run-%Y%m%d-%H%M%S")
    d, n = root / stamp, 1
    while d.exists():
        n += 1
        d = root / f"{stamp}-{n}"
    d.mkdir(parents=True)
    return d


def cmd_pipeline(cfg: RunConfig, run_dir: Path | None = None) -> Path:
    """split -> grid search -> fit -> recommend/evaluate -> audit, all under
    one timestamped run directory."""
    with stage("config"):
        cfg.validate()
    run = Path(run_dir) if run_dir else _new_run_dir(Path(cfg.out))
    run.mkdir(parents=True, exist_ok=True)
    with run_lock(run):
        _write_json(run / "config.json", {**cfg.to_dict(), "tool_version": __version__})
        ds = load(cfg)
        with stage("stats"):
            _write_csv(run / "stats.csv", STATS_HEADER,
                       [[r[h] if not isinstance(r[h], float) else repr(r[h]) for h in STATS_HEADER]
                        for r in stats_table(ds)])
        with stage("split"):
            sp = split_train_test(ds, cfg.ratio, cfg.seed)
            factors = _factors(cfg, ds, sp)
        summary = []
        for algo in cfg.algorithms:
            with stage(f"gridsearch:{algo}"):
                res = grid_search(algo, sp.train, grid=cfg.grid, k=cfg.k, seed=cfg.seed,
                                  min_rating=cfg.min_rating)
                _write_json(run / "gridsearch" / f"{algo}.json", res.to_dict())
            with stage(f"fit:{algo}"):
                model = fit(algo, sp.train, res.best_hp, cfg.seed)
            with stage(f"evaluate:{algo}"):
                outcomes = evaluate_outcomes(model, sp, cfg.k, cfg.alpha, cfg.min_rating)
                _write_csv(run / "outcomes" / f"{algo}.csv", ["user_id", "precision", "miscalibration"],
                           _outcome_rows(outcomes))
                rows = summarize(algo, ds, outcomes)
                summary += rows
            with stage(f"audit:{algo}"):
                _write_reports(cfg, run / "reports", algo, ds, factors, outcomes)
        _write_csv(run / "summary.csv",
                   ["algorithm", "gender", "users", "precision", "miscalibration"],
                   [[r.algorithm, r.gender.value, r.users, repr(r.precision), repr(r.miscalibration)]
                    for r in summary])
    _print_summary(summary)
    print(f"run directory: {run}")
    return run


def cmd_export_plots(run_dir) -> list[Path]:
    """Collect report CSV/JSON pairs into one tidy table per outcome metric
    (one row per bucket, tagged with algorithm/factor/gender/correlation)."""
    run = Path(run_dir)
    reports = sorted((run / "reports").glob("*/*.json"))
    if not reports:
        raise DataError(f"no reports under {run / 'reports'}")
    tables: dict[str, list] = {}
    for j in reports:
        meta = json.loads(j.read_text(encoding="utf-8"))
        with open(j.with_suffix(".csv"), encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        corr = meta["correlation"]
        for r in rows:
            tables.setdefault(meta["outcome_metric"], []).append([
                meta["algorithm"], meta["spec"]["factor"], meta["spec"]["gender"], r["bucket"],
                r["mean_factor"], r["mean_outcome"], r["user_count"], "n/a" if corr is None else repr(corr)])
    out = []
    for metric, rows in sorted(tables.items()):
        p = run / "plots" / f"{metric}_vs_factors.csv"
        _write_csv(p, ["algorithm", "factor", "gender", "bucket", "mean_factor", "mean_outcome",
                       "user_count", "correlation"], rows)
        out.append(p)
        print(p)
    return out


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--data-dir", help="directory holding ratings.dat, users.dat, movies.dat")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--k", type=int)
    common.add_argument("--algo", action="append", help="algorithm tag (repeatable)")
    common.add_argument("--factor", action="append", help="anomaly|entropy|size (repeatable)")
    common.add_argument("--metric", action="append", help="precision|miscalibration (repeatable)")
    common.add_argument("--buckets", type=int)
    common.add_argument("--ratio", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="recfair",
                                description="Gender fairness audit of collaborative-filtering recommenders.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse ML1M files into canonical CSVs")
    s = sub.add_parser("stats", parents=[common], help="per-gender profile statistics")
    s.add_argument("--json", action="store_true")
    sub.add_parser("split", parents=[common], help="write the seeded train/test split")
    sub.add_parser("gridsearch", parents=[common], help="tune hyperparameters on a validation split")
    t = sub.add_parser("train", parents=[common], help="fit and checkpoint models")
    t.add_argument("--hp", help="hyperparameters as a JSON object")
    t.add_argument("--grid-dir", help="use best_hp from <dir>/<algo>.json")
    for name, help_ in (("evaluate", "per-user precision and miscalibration from checkpoints"),
                        ("audit", "bucketed group reports from checkpoints")):
        e = sub.add_parser(name, parents=[common], help=help_)
        e.add_argument("checkpoint", nargs="+")
    sub.add_parser("pipeline", parents=[common], help="full run into a timestamped directory")
    x = sub.add_parser("export-plots", parents=[common], help="plot-ready tables from a run directory")
    x.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "export-plots":
            with stage("export-plots"):
                cmd_export_plots(args.run_dir)
            return EXIT_OK
        with stage("config"):
            cfg = resolve_config(args)
        if args.command == "stats":
            cmd_stats(cfg, as_json=args.json)
        elif args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "split":
            cmd_split(cfg)
        elif args.command == "gridsearch":
            cmd_gridsearch(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.hp, args.grid_dir)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.checkpoint)
        elif args.command == "audit":
            cmd_audit(cfg, args.checkpoint)
        elif args.command == "pipeline":
            cmd_pipeline(cfg)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
