"""Experiment grid over sample size x positive rate x epochs x initialisation,
plus a synthetic generator whose "users" rank features by a known truth.

Every cell gets its own seed derived from (base seed, repetition, sample size,
tp rate). The initialisation mode and epoch count are deliberately left out of
the derivation so that random and seeded runs are paired: same split, same
biased sample, same shuffling order.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    Dataset,
    FeatureSchema,
    SampleSpec,
    apply_scaler,
    biased_sample,
    standardize,
    train_test_split,
)
from .errors import DomainError, RankingError
from .models import TrainConfig, evaluate, train
from .rank_aggregation import Ranking, RankingProfile, aggregate, canonical_method
from .weight_seed import DirectionVotes, SeedWeights, resolve_directions, seed_from_aggregate

RESULT_COLUMNS = (
    "model", "aggregator", "init_mode", "sample_size", "tp_rate", "epochs",
    "repetition", "seed", "accuracy", "f1", "tp", "fp", "fn", "tn", "wall_ms", "status",
)


def normalize_init_mode(mode: str) -> str:
    mode = mode.lower().removesuffix("-seeded").removesuffix("_seeded")
    return "random" if mode == "random" else canonical_method(mode)


@dataclass(frozen=True)
class GridConfig:
    sample_sizes: tuple[int, ...] = (500, 1000, 1500, 2000)
    tp_rates: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    epoch_settings: tuple[int, ...] = (50, 200)
    init_modes: tuple[str, ...] = ("random", "borda", "mc4", "kemeny_young")
    repetitions: int = 20
    base_seed: int = 0
    model: str = "mlp"
    train_fraction: float = 0.8
    learning_rate: float = 0.01
    batch_size: int = 32
    l2: float = 1e-3
    record_timing: bool = False

    def __post_init__(self):
        for name in ("sample_sizes", "tp_rates", "epoch_settings", "init_modes"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise DomainError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "init_modes", tuple(normalize_init_mode(m) for m in self.init_modes))
        if self.repetitions < 1:
            raise DomainError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.model not in ("mlp", "svm"):
            raise DomainError(f"model must be 'mlp' or 'svm', got {self.model!r}")

    @property
    def n_cells(self) -> int:
        return (len(self.sample_sizes) * len(self.tp_rates) * len(self.epoch_settings)
                * len(self.init_modes) * self.repetitions)


@dataclass(frozen=True)
class GridRecord:
    model: str
    aggregator: str
    init_mode: str
    sample_size: int
    tp_rate: float
    epochs: int
    repetition: int
    seed: int
    accuracy: float | None = None
    f1: float | None = None
    tp: int | None = None
    fp: int | None = None
    fn: int | None = None
    tn: int | None = None
    wall_ms: float | None = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def row(self) -> list[str]:
        out = []
        for col in RESULT_COLUMNS:
            v = getattr(self, col)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


@dataclass
class GridResult:
    config: GridConfig
    records: list[GridRecord] = field(default_factory=list)

    @property
    def skipped(self) -> list[GridRecord]:
        return [r for r in self.records if not r.ok]


def derive_seed(base_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _tp_key(tp: float) -> int:
    return int(round(tp * 1_000_000))


def build_seeds(profile: RankingProfile | None, init_modes: Sequence[str]) -> dict[str, SeedWeights]:
    """Aggregate once per seeded mode. Profiles without direction flags are
    treated as all-positive."""
    methods = [m for m in init_modes if m != "random"]
    if not methods:
        return {}
    if profile is None:
        raise RankingError("seeded initialisation requested but no ranking profile given")
    if profile.directions is not None:
        signs = resolve_directions(DirectionVotes.from_profile(profile))
    else:
        signs = np.ones(profile.n_items, dtype=np.int64)
    return {m: seed_from_aggregate(aggregate(profile, m), signs, profile.feature_names) for m in methods}


def _run_cell(cfg: GridConfig, data: Dataset, seeds: dict, cell: tuple) -> GridRecord:
    size, tp, epochs, mode, rep = cell
    seed = derive_seed(cfg.base_seed, rep, size, _tp_key(tp))
    rec = dict(
        model=cfg.model,
        aggregator="none" if mode == "random" else mode,
        init_mode="random" if mode == "random" else "seeded",
        sample_size=size, tp_rate=float(tp), epochs=epochs, repetition=rep, seed=seed,
    )
    start = time.perf_counter()
    try:
        train_full, test = train_test_split(data, cfg.train_fraction, derive_seed(cfg.base_seed, rep))
        sample = biased_sample(train_full, SampleSpec(size, tp, seed))
    except DomainError as exc:
        return GridRecord(**rec, status=f"skipped: {exc}")
    # scaler is fit on the biased training sample only
    sample, scaler = standardize(sample)
    test = apply_scaler(test, scaler)
    tcfg = TrainConfig(
        epochs=epochs, learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
        rng_seed=seed, l2=cfg.l2,
        init_mode="random" if mode == "random" else "seeded",
        seed_weights=seeds.get(mode),
    )
    try:
        model = train(sample, tcfg, cfg.model)
    except DomainError as exc:
        return GridRecord(**rec, status=f"failed: {exc}")
    m = evaluate(model, test)
    wall = (time.perf_counter() - start) * 1000.0 if cfg.record_timing else None
    return GridRecord(**rec, accuracy=m.accuracy, f1=m.f1, tp=m.tp, fp=m.fp, fn=m.fn, tn=m.tn, wall_ms=wall)


_WORKER: dict = {}


def _worker_init(cfg, data, seeds):
    _WORKER.update(cfg=cfg, data=data, seeds=seeds)


def _worker_run(cell):
    return _run_cell(_WORKER["cfg"], _WORKER["data"], _WORKER["seeds"], cell)


def grid_cells(cfg: GridConfig) -> list[tuple]:
    return [
        (size, tp, epochs, mode, rep)
        for size in cfg.sample_sizes
        for tp in cfg.tp_rates
        for epochs in cfg.epoch_settings
        for mode in cfg.init_modes
        for rep in range(cfg.repetitions)
    ]


def run_grid(cfg: GridConfig, data: Dataset, profile: RankingProfile | None = None,
             jobs: int = 1) -> GridResult:
    seeds = build_seeds(profile, cfg.init_modes)
    for mode, sw in seeds.items():
        if len(sw) != data.schema.n_features:
            raise RankingError(f"profile ranks {len(sw)} features, data has {data.schema.n_features}")
    cells = grid_cells(cfg)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_worker_init, initargs=(cfg, data, seeds)) as pool:
            records = list(pool.map(_worker_run, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        records = [_run_cell(cfg, data, seeds, c) for c in cells]
    return GridResult(cfg, records)


def write_results_csv(result: GridResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in result.records:
            w.writerow(r.row())


def read_results_csv(path) -> list[GridRecord]:
    ints = {"sample_size", "epochs", "repetition", "seed", "tp", "fp", "fn", "tn"}
    floats = {"tp_rate", "accuracy", "f1", "wall_ms"}
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k in RESULT_COLUMNS:
                v = row[k]
                if k in ints:
                    kw[k] = int(v) if v != "" else None
                elif k in floats:
                    kw[k] = float(v) if v != "" else None
                else:
                    kw[k] = v
            out.append(GridRecord(**kw))
    return out


# -- seeded vs random comparison -------------------------------------------

REPORT_COLUMNS = (
    "model", "sample_size", "tp_rate", "epochs", "aggregator", "n_pairs",
    "random_acc_mean", "random_acc_sd", "seeded_acc_mean", "seeded_acc_sd",
    "random_f1_mean", "random_f1_sd", "seeded_f1_mean", "seeded_f1_sd",
    "acc_diff_mean", "f1_diff_mean", "acc_win_rate", "f1_win_rate",
)


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def win_rate(seeded: np.ndarray, random: np.ndarray) -> float:
    """Fraction of pairs where seeded beats random; ties count one half."""
    wins = (seeded > random).sum() + 0.5 * (seeded == random).sum()
    return float(wins / seeded.size)


@dataclass
class ComparisonReport:
    rows: list[dict]
    missing: list[str]


def seeded_vs_random_report(grid: GridResult | Sequence[GridRecord]) -> ComparisonReport:
    records = grid.records if isinstance(grid, GridResult) else list(grid)
    by_cell: dict[tuple, dict[str, dict[int, GridRecord]]] = {}
    for r in records:
        if not r.ok:
            continue
        cell = (r.model, r.sample_size, r.tp_rate, r.epochs)
        by_cell.setdefault(cell, {}).setdefault(r.aggregator, {})[r.repetition] = r

    rows, missing = [], []
    for cell in sorted(by_cell):
        arms = by_cell[cell]
        base = arms.get("none")
        seeded_aggs = sorted(a for a in arms if a != "none")
        if base is None:
            missing.append(f"{cell}: no random-init runs")
            continue
        if not seeded_aggs:
            missing.append(f"{cell}: no seeded runs")
            continue
        for agg in seeded_aggs:
            reps = sorted(set(base) & set(arms[agg]))
            if len(reps) < max(len(base), len(arms[agg])):
                missing.append(f"{cell} {agg}: unpaired repetitions")
            if not reps:
                continue
            ra = np.array([base[k].accuracy for k in reps])
            sa = np.array([arms[agg][k].accuracy for k in reps])
            rf = np.array([base[k].f1 for k in reps])
            sf = np.array([arms[agg][k].f1 for k in reps])
            rows.append(dict(
                model=cell[0], sample_size=cell[1], tp_rate=cell[2], epochs=cell[3],
                aggregator=agg, n_pairs=len(reps),
                random_acc_mean=float(ra.mean()), random_acc_sd=_sd(ra),
                seeded_acc_mean=float(sa.mean()), seeded_acc_sd=_sd(sa),
                random_f1_mean=float(rf.mean()), random_f1_sd=_sd(rf),
                seeded_f1_mean=float(sf.mean()), seeded_f1_sd=_sd(sf),
                acc_diff_mean=float((sa - ra).mean()), f1_diff_mean=float((sf - rf).mean()),
                acc_win_rate=win_rate(sa, ra), f1_win_rate=win_rate(sf, rf),
            ))
    return ComparisonReport(rows, missing)


def write_report_csv(report: ComparisonReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in report.rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in REPORT_COLUMNS])


def summary_table_rows(result: GridResult) -> list[tuple]:
    """Mean accuracy / F1 per (init, tp, epochs) in the layout of a per-size
    results table: one block per initialisation, rows ordered by tp then epochs."""
    acc: dict[tuple, list] = {}
    for r in result.records:
        if r.ok:
            acc.setdefault((r.sample_size, r.aggregator, r.tp_rate, r.epochs), []).append((r.accuracy, r.f1))
    rows = []
    for key in sorted(acc):
        vals = np.array(acc[key])
        rows.append((*key, float(vals[:, 0].mean()), float(vals[:, 1].mean())))
    return rows


# -- synthetic oracle data -------------------------------------------------

@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    n_features: int = 12
    n_rows: int = 6400
    true_weights: np.ndarray | None = None
    noise: float = 0.5
    n_users: int = 5
    perturbation: float = 0.1

    def __post_init__(self):
        w = default_true_weights(self.n_features) if self.true_weights is None else np.asarray(
            self.true_weights, dtype=np.float64)
        if w.shape != (self.n_features,):
            raise DomainError(f"true weight vector must have {self.n_features} entries")
        if not np.any(w != 0):
            raise DomainError("true weight vector must be non-zero")
        if not 0.0 <= self.perturbation < 1.0:
            raise DomainError(f"perturbation must lie in [0, 1), got {self.perturbation}")
        if self.noise < 0:
            raise DomainError("noise scale must be >= 0")
        if self.n_users < 1 or self.n_rows < 1:
            raise DomainError("need at least one user and one row")
        object.__setattr__(self, "true_weights", w)


def default_true_weights(n_features: int) -> np.ndarray:
    """Linearly decaying magnitudes with alternating signs."""
    mags = np.linspace(1.0, 0.1, n_features)
    signs = np.where(np.arange(n_features) % 2 == 0, 1.0, -1.0)
    return mags * signs


def oracle_ranking(w: np.ndarray) -> Ranking:
    return Ranking(tuple(int(i) for i in np.argsort(-np.abs(w), kind="stable")))


def generate_synthetic(spec: SyntheticSpec, rng_seed: int = 0):
    """Returns (Dataset, RankingProfile, DirectionVotes)."""
    data_rng, user_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(2))
    F, w = spec.n_features, spec.true_weights
    X = data_rng.standard_normal((spec.n_rows, F))
    y = (X @ w + spec.noise * data_rng.standard_normal(spec.n_rows) > 0).astype(np.int8)
    names = tuple(f"f{i:02d}" for i in range(F))
    ds = Dataset(FeatureSchema(names, "label"), X, y)

    truth = list(oracle_ranking(w).order)
    true_signs = np.where(w < 0, -1, 1)
    rankings, directions = [], []
    for _ in range(spec.n_users):
        order = truth.copy()
        for p in range(F - 1):
            if user_rng.random() < spec.perturbation:
                order[p], order[p + 1] = order[p + 1], order[p]
        rankings.append(Ranking(tuple(order)))
        flips = user_rng.random(F) < spec.perturbation
        directions.append(tuple(int(v) for v in np.where(flips, -true_signs, true_signs)))
    profile = RankingProfile(tuple(rankings), tuple(f"sim{h}" for h in range(spec.n_users)), names,
                             tuple(directions))
    return ds, profile, DirectionVotes.from_profile(profile)


def positive_fraction(ds: Dataset) -> float:
    return ds.n_positive / len(ds) if len(ds) else math.nan
