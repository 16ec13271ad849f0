"""Turn an aggregated ranking plus users' direction flags into initial weights.

The procedure is: negate the aggregate score of every feature the crowd
marked as having negative importance, then min-max rescale the signed vector
into [-1, 1]. Negation happens before scaling.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SeedError
from .rank_aggregation import AggregateResult, RankingProfile

NEW_MIN, NEW_MAX = -1.0, 1.0


@dataclass(frozen=True, eq=False)
class DirectionVotes:
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positive, dtype=np.int64)
        neg = np.asarray(self.negative, dtype=np.int64)
        if pos.shape != neg.shape or pos.ndim != 1:
            raise SeedError("positive and negative tallies must be equal-length vectors")
        if (pos < 0).any() or (neg < 0).any():
            raise SeedError("vote tallies must be non-negative")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)

    @classmethod
    def from_flags(cls, flags) -> "DirectionVotes":
        """``flags`` is an H x F array of +1/-1 entries."""
        flags = np.asarray(flags)
        if flags.ndim != 2:
            raise SeedError("direction flags must be an H x F array")
        return cls((flags == 1).sum(axis=0), (flags == -1).sum(axis=0))

    @classmethod
    def from_profile(cls, profile: RankingProfile) -> "DirectionVotes":
        if profile.directions is None:
            raise SeedError("profile carries no direction flags")
        return cls.from_flags(profile.directions)


def resolve_directions(votes: DirectionVotes) -> np.ndarray:
    """-1 where strictly more than half of a feature's voters said negative."""
    total = votes.positive + votes.negative
    if (total == 0).any():
        raise SeedError(f"no direction votes for feature(s) {np.flatnonzero(total == 0).tolist()}")
    return np.where(2 * votes.negative > total, -1, 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SeedWeights:
    values: np.ndarray
    provenance: str
    feature_names: tuple[str, ...] | None = None
    degenerate: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise SeedError("seed weights must be a vector")
        if not np.all(np.isfinite(v)):
            raise SeedError("seed weights must be finite")
        if (v < NEW_MIN).any() or (v > NEW_MAX).any():
            bad = v[(v < NEW_MIN) | (v > NEW_MAX)][0]
            raise SeedError(f"seed weight {bad!r} outside [-1, 1]")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != v.size:
                raise SeedError(f"{v.size} seed values for {len(names)} features")
            object.__setattr__(self, "feature_names", names)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def minmax_rescale(w: np.ndarray) -> tuple[np.ndarray, bool]:
    cur_min, cur_max = float(w.min()), float(w.max())
    if cur_max == cur_min:
        return np.zeros_like(w), True
    out = NEW_MIN + (NEW_MAX - NEW_MIN) * (w - cur_min) / (cur_max - cur_min)
    # guard the endpoints against round-off
    return np.clip(out, NEW_MIN, NEW_MAX), False


def seed_from_scores(
    scores: Sequence[float],
    signs: Sequence[int],
    provenance: str = "scores",
    feature_names: Sequence[str] | None = None,
) -> SeedWeights:
    w = np.array(scores, dtype=np.float64)
    s = np.asarray(signs)
    if w.ndim != 1 or w.size < 2:
        raise SeedError("need a score vector with at least 2 entries")
    if s.shape != w.shape:
        raise SeedError(f"{s.size} signs for {w.size} scores")
    if not np.all(np.isin(s, (1, -1))):
        raise SeedError("signs must be +1 or -1")
    if not np.all(np.isfinite(w)):
        raise SeedError("scores must be finite")
    w = np.where(s < 0, -w, w)
    out, degenerate = minmax_rescale(w)
    if degenerate:
        warnings.warn("all signed scores are equal; falling back to a zero seed", stacklevel=2)
    return SeedWeights(out, provenance, None if feature_names is None else tuple(feature_names), degenerate)


def seed_from_aggregate(agg: AggregateResult, signs, feature_names=None) -> SeedWeights:
    return seed_from_scores(agg.scores, signs, agg.method, feature_names)


def seed_from_profile(profile: RankingProfile, agg: AggregateResult) -> SeedWeights:
    signs = resolve_directions(DirectionVotes.from_profile(profile))
    return seed_from_aggregate(agg, signs, profile.feature_names)


def seed_to_dict(sw: SeedWeights) -> dict:
    return {
        "features": list(sw.feature_names) if sw.feature_names is not None else None,
        "values": [float(v) for v in sw.values],
        "provenance": sw.provenance,
        "degenerate": bool(sw.degenerate),
    }


def seed_to_file(sw: SeedWeights, path) -> None:
    # json writes floats via repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(seed_to_dict(sw), indent=2) + "\n", encoding="utf-8")


def seed_from_file(path, feature_names: Sequence[str] | None = None) -> SeedWeights:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SeedError(f"{path}: malformed seed file ({exc})") from None
    if not isinstance(doc, dict) or "values" not in doc:
        raise SeedError(f"{path}: malformed seed file (no 'values')")
    values = doc["values"]
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
        raise SeedError(f"{path}: 'values' must be a list of numbers")
    names = doc.get("features")
    if feature_names is not None:
        if len(values) != len(feature_names):
            raise SeedError(f"{path}: {len(values)} values but the schema has {len(feature_names)} features")
        if names is not None and list(names) != list(feature_names):
            raise SeedError(f"{path}: feature names do not match the schema")
        names = list(feature_names)
    if any(not math.isfinite(v) for v in values):
        raise SeedError(f"{path}: non-finite seed value")
    try:
        return SeedWeights(
            np.asarray(values, dtype=np.float64),
            str(doc.get("provenance", "unknown")),
            None if names is None else tuple(names),
            bool(doc.get("degenerate", False)),
        )
    except SeedError as exc:
        raise SeedError(f"{path}: {exc}") from None
