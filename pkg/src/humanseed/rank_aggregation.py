"""Ranking profiles and rank aggregation.

A ranking is a permutation of feature indices, most important first. Three
aggregators are provided: exact Kemeny-Young (subset dynamic programming in
the Held-Karp style), the MC4 Markov-chain method and a Borda mean-position
baseline. All of them are deterministic; ties are broken towards lower
feature indices.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import RankingError

KEMENY_MAX_FEATURES = 20
BRUTE_FORCE_MAX_FEATURES = 8
METHODS = ("kemeny_young", "mc4", "borda")


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        object.__setattr__(self, "order", order)
        if sorted(order) != list(range(len(order))):
            raise RankingError(f"not a permutation of 0..{len(order) - 1}: {order}")

    def __len__(self) -> int:
        return len(self.order)

    @property
    def positions(self) -> np.ndarray:
        """positions[i] is the rank slot (0 = top) held by feature i."""
        pos = np.empty(len(self.order), dtype=np.intp)
        pos[list(self.order)] = np.arange(len(self.order))
        return pos

    @classmethod
    def from_names(cls, names: Sequence[str], feature_names: Sequence[str]) -> "Ranking":
        feature_names = list(feature_names)
        seen = set()
        for n in names:
            if n not in feature_names:
                raise RankingError(f"unknown feature {n!r} in ranking")
            if n in seen:
                raise RankingError(f"feature {n!r} listed twice in ranking")
            seen.add(n)
        missing = [n for n in feature_names if n not in seen]
        if missing:
            raise RankingError(f"ranking is missing features: {missing}")
        return cls(tuple(feature_names.index(n) for n in names))

    def names(self, feature_names: Sequence[str]) -> list[str]:
        return [feature_names[i] for i in self.order]


@dataclass(frozen=True)
class RankingProfile:
    """H user rankings over the same F items.

    ``directions`` optionally holds each user's sign flag per feature
    (+1 or -1, indexed by feature, not by rank slot).
    """

    rankings: tuple[Ranking, ...]
    user_ids: tuple[str, ...] = ()
    feature_names: tuple[str, ...] | None = None
    directions: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        rankings = tuple(r if isinstance(r, Ranking) else Ranking(tuple(r)) for r in self.rankings)
        object.__setattr__(self, "rankings", rankings)
        if not rankings:
            raise RankingError("a profile needs at least one ranking")
        F = len(rankings[0])
        if any(len(r) != F for r in rankings):
            raise RankingError("all rankings in a profile must cover the same items")
        ids = tuple(str(u) for u in self.user_ids) or tuple(f"u{i}" for i in range(len(rankings)))
        if len(ids) != len(rankings):
            raise RankingError(f"{len(ids)} user ids for {len(rankings)} rankings")
        object.__setattr__(self, "user_ids", ids)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != F:
                raise RankingError(f"{len(names)} feature names for rankings of length {F}")
            object.__setattr__(self, "feature_names", names)
        if self.directions is not None:
            dirs = tuple(tuple(int(v) for v in d) for d in self.directions)
            if len(dirs) != len(rankings) or any(len(d) != F for d in dirs):
                raise RankingError("directions must give one flag per feature for every user")
            if any(v not in (1, -1) for d in dirs for v in d):
                raise RankingError("direction flags must be +1 or -1")
            object.__setattr__(self, "directions", dirs)

    @property
    def n_users(self) -> int:
        return len(self.rankings)

    @property
    def n_items(self) -> int:
        return len(self.rankings[0])

    def position_matrix(self) -> np.ndarray:
        """H x F matrix; entry (h, i) is the slot user h gives feature i."""
        return np.stack([r.positions for r in self.rankings])

    def preference_counts(self) -> np.ndarray:
        """P[i, j] = number of users ranking i strictly above j."""
        pos = self.position_matrix()
        return (pos[:, :, None] < pos[:, None, :]).sum(axis=0)

    def relabel(self, perm: Sequence[int]) -> "RankingProfile":
        """Rename item i to perm[i] in every ranking."""
        perm = list(perm)
        rankings = [Ranking(tuple(perm[i] for i in r.order)) for r in self.rankings]
        dirs = None
        if self.directions is not None:
            dirs = []
            for d in self.directions:
                nd = [0] * len(d)
                for i, v in enumerate(d):
                    nd[perm[i]] = v
                dirs.append(tuple(nd))
        return RankingProfile(tuple(rankings), self.user_ids, None, dirs)


@dataclass(frozen=True, eq=False)
class AggregateResult:
    ranking: Ranking
    scores: np.ndarray
    method: str
    cost: float | None = None
    trace: list = field(default_factory=list, repr=False)


def _order_by_scores(scores: np.ndarray) -> Ranking:
    # stable sort on negated scores: descending, ties to lower index
    return Ranking(tuple(int(i) for i in np.argsort(-np.asarray(scores), kind="stable")))


def _positional_scores(ranking: Ranking) -> np.ndarray:
    F = len(ranking)
    return (F - ranking.positions).astype(np.float64)


def _check_same_length(a: Ranking, b: Ranking) -> None:
    if len(a) != len(b):
        raise RankingError(f"rankings cover {len(a)} and {len(b)} items")


def kendall_tau(a: Ranking, b: Ranking) -> int:
    """Number of unordered item pairs ordered differently by a and b."""
    _check_same_length(a, b)
    pa, pb = a.positions, b.positions
    da = np.sign(pa[:, None] - pa[None, :])
    db = np.sign(pb[:, None] - pb[None, :])
    return int(np.count_nonzero(da != db)) // 2


def profile_distance(a: Ranking, profile: RankingProfile) -> int:
    if len(a) != profile.n_items:
        raise RankingError(f"ranking covers {len(a)} items, profile {profile.n_items}")
    return sum(kendall_tau(a, r) for r in profile.rankings)


def profile_distances(candidates: np.ndarray, profile: RankingProfile) -> np.ndarray:
    """Vectorised profile_distance for a (K, F) array of candidate orders."""
    candidates = np.asarray(candidates)
    K, F = candidates.shape
    if F != profile.n_items:
        raise RankingError(f"candidates cover {F} items, profile {profile.n_items}")
    pos = np.empty_like(candidates)
    np.put_along_axis(pos, candidates, np.arange(F)[None, :].repeat(K, axis=0), axis=1)
    P = profile.preference_counts()
    # ordering i above j costs the users who put j above i
    above = pos[:, :, None] < pos[:, None, :]
    return (above * P.T[None, :, :]).sum(axis=(1, 2))


def weighted_kendall_tau(a: Ranking, b: Ranking, k: int) -> float:
    """Positionally weighted disagreement count.

    Each ordered pair (f, f') with f above f' in ``a`` but below it in ``b``
    contributes ``(k - 2) * |below_f(a) | below_f'(b)|``, the inner sum over
    i = 1..k-2 having a summand that does not depend on i. For k = 2 that sum
    is empty; by convention the plain Kendall-tau count (unit pair weight) is
    returned instead of zero.
    """
    _check_same_length(a, b)
    F = len(a)
    if not 2 <= k <= F:
        raise RankingError(f"k must satisfy 2 <= k <= {F}, got {k}")
    if k == 2:
        return float(kendall_tau(a, b))
    pa, pb = a.positions, b.positions
    total = 0
    for f in range(F):
        below_f_a = {x for x in range(F) if pa[x] > pa[f]}
        for g in range(F):
            if f == g or not (pa[f] < pa[g] and pb[g] < pb[f]):
                continue
            below_g_b = {x for x in range(F) if pb[x] > pb[g]}
            total += (k - 2) * len(below_f_a | below_g_b)
    return float(total)


def kemeny_young(profile: RankingProfile) -> AggregateResult:
    """Exact Kemeny ranking by dynamic programming over subsets.

    ``rest[S]`` is the cheapest cost of ordering the items outside S below
    the items of S. Placing item f directly after the set S costs the users
    who rank some not-yet-placed item above f. Reconstruction walks from the
    empty set and always takes the smallest index that attains the optimum,
    which yields the lexicographically smallest optimal permutation.
    """
    F = profile.n_items
    if F > KEMENY_MAX_FEATURES:
        raise RankingError(f"Kemeny DP supports at most {KEMENY_MAX_FEATURES} items, got {F}")
    P = profile.preference_counts().astype(np.int64)
    full = (1 << F) - 1
    n_sets = 1 << F
    masks = np.arange(n_sets, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(F)) & 1).astype(bool)  # (2^F, F)

    # place_cost[S, f] = sum over g outside S, g != f, of P[g, f]
    # P[f, f] == 0, so f itself may stay in the sum
    place_cost = ((~bits).astype(np.int32) @ P.astype(np.int32))

    rest = np.full(n_sets, np.iinfo(np.int64).max // 4, dtype=np.int64)
    rest[full] = 0
    popcount = bits.sum(axis=1)
    for size in range(F - 1, -1, -1):
        layer = masks[popcount == size]
        best = np.full(layer.size, np.iinfo(np.int64).max // 4, dtype=np.int64)
        for f in range(F):
            free = ~bits[layer, f]
            if not free.any():
                continue
            S = layer[free]
            cand = place_cost[S, f] + rest[S | (1 << f)]
            best[free] = np.minimum(best[free], cand)
        rest[layer] = best

    order = []
    S = 0
    for _ in range(F):
        target = rest[S]
        for f in range(F):
            if S & (1 << f):
                continue
            if place_cost[S, f] + rest[S | (1 << f)] == target:
                order.append(f)
                S |= 1 << f
                break
    ranking = Ranking(tuple(order))
    return AggregateResult(ranking, _positional_scores(ranking), "kemeny_young", float(rest[0]))


def kemeny_brute_force(profile: RankingProfile) -> AggregateResult:
    """Exhaustive Kemeny search, used as an oracle for :func:`kemeny_young`."""
    F = profile.n_items
    if F > BRUTE_FORCE_MAX_FEATURES:
        raise RankingError(f"brute force supports at most {BRUTE_FORCE_MAX_FEATURES} items, got {F}")
    # permutations() yields in lexicographic order; argmin keeps the first minimum
    perms = np.array(list(itertools.permutations(range(F))), dtype=np.intp).reshape(-1, F)
    pos = np.empty_like(perms)
    np.put_along_axis(pos, perms, np.broadcast_to(np.arange(F), perms.shape).copy(), axis=1)
    cand = np.sign(pos[:, :, None] - pos[:, None, :])  # (K, F, F)
    costs = np.zeros(len(perms), dtype=np.int64)
    for r in profile.rankings:
        p = r.positions
        voter = np.sign(p[:, None] - p[None, :])
        costs += np.count_nonzero(cand != voter[None], axis=(1, 2)) // 2
    i = int(np.argmin(costs))
    best, best_cost = tuple(perms[i]), int(costs[i])
    ranking = Ranking(best)
    return AggregateResult(ranking, _positional_scores(ranking), "kemeny_young", float(best_cost))


def mc4_transition_matrix(profile: RankingProfile) -> np.ndarray:
    """From item i move to each j != i with probability 1/F when a strict
    majority of users rank j above i; the remaining mass stays on i."""
    F = profile.n_items
    P = profile.preference_counts()
    H = profile.n_users
    T = np.where(2 * P.T > H, 1.0 / F, 0.0)  # T[i, j] uses P[j, i]
    np.fill_diagonal(T, 0.0)
    T[np.diag_indices(F)] = 1.0 - T.sum(axis=1)
    return T


def mc4(
    profile: RankingProfile,
    iterations: int = 100,
    tol: float = 1e-10,
    keep_trace: bool = False,
) -> AggregateResult:
    """Rank items by the mass of the MC4 chain after power iteration from
    the uniform vector. Stops early once the L1 change drops below ``tol``."""
    if iterations < 1:
        raise RankingError(f"iterations must be >= 1, got {iterations}")
    F = profile.n_items
    T = mc4_transition_matrix(profile)
    r = np.full(F, 1.0 / F)
    trace = [r.copy()] if keep_trace else []
    for _ in range(iterations):
        nxt = r @ T
        delta = np.abs(nxt - r).sum()
        r = nxt
        if keep_trace:
            trace.append(r.copy())
        if delta < tol:
            break
    return AggregateResult(_order_by_scores(r), r, "mc4", None, trace)


def borda(profile: RankingProfile) -> AggregateResult:
    F = profile.n_items
    scores = (F - profile.position_matrix()).mean(axis=0).astype(np.float64)
    return AggregateResult(_order_by_scores(scores), scores, "borda")


_AGGREGATORS = {"kemeny_young": kemeny_young, "mc4": mc4, "borda": borda}
_ALIASES = {"kemeny": "kemeny_young", "kemeny-young": "kemeny_young", "mc_4": "mc4", "majority": "borda"}


def canonical_method(name: str) -> str:
    name = _ALIASES.get(name.lower(), name.lower())
    if name not in _AGGREGATORS:
        raise RankingError(f"unknown aggregation method {name!r}; choose from {sorted(_AGGREGATORS)}")
    return name


def aggregate(profile: RankingProfile, method: str) -> AggregateResult:
    return _AGGREGATORS[canonical_method(method)](profile)


# -- profile files ---------------------------------------------------------

def _parse_direction(v) -> int:
    if v in (1, "+1", "1", "+"):
        return 1
    if v in (-1, "-1", "-"):
        return -1
    raise RankingError(f"direction flag must be +1 or -1, got {v!r}")


def profile_from_dict(doc: dict, feature_names: Sequence[str] | None = None) -> RankingProfile:
    names = list(feature_names) if feature_names is not None else doc.get("features")
    if not names:
        raise RankingError("profile has no feature list and none was supplied")
    if feature_names is not None and doc.get("features") not in (None, list(feature_names)):
        raise RankingError("profile feature list does not match the schema")
    users = doc.get("users")
    if not users:
        raise RankingError("profile contains no users")
    rankings, ids, dirs = [], [], []
    have_dirs = all("directions" in u for u in users)
    for n, u in enumerate(users):
        uid = str(u.get("user_id", f"u{n}"))
        try:
            rankings.append(Ranking.from_names(u["ranking"], names))
        except KeyError:
            raise RankingError(f"user {uid!r} has no ranking") from None
        except RankingError as exc:
            raise RankingError(f"user {uid!r}: {exc}") from None
        ids.append(uid)
        if have_dirs:
            d = u["directions"]
            unknown = set(d) - set(names)
            if unknown:
                raise RankingError(f"user {uid!r}: directions for unknown features {sorted(unknown)}")
            missing = [f for f in names if f not in d]
            if missing:
                raise RankingError(f"user {uid!r}: no direction for {missing}")
            dirs.append(tuple(_parse_direction(d[f]) for f in names))
    return RankingProfile(tuple(rankings), tuple(ids), tuple(names), tuple(dirs) if have_dirs else None)


def profile_to_dict(profile: RankingProfile) -> dict:
    names = profile.feature_names or tuple(str(i) for i in range(profile.n_items))
    users = []
    for h, (uid, r) in enumerate(zip(profile.user_ids, profile.rankings)):
        entry = {"user_id": uid, "ranking": r.names(names)}
        if profile.directions is not None:
            entry["directions"] = {names[i]: profile.directions[h][i] for i in range(len(names))}
        users.append(entry)
    return {"features": list(names), "users": users}


def load_profile(path, feature_names: Sequence[str] | None = None) -> RankingProfile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RankingError(f"{path}: not valid JSON ({exc})") from None
    return profile_from_dict(doc, feature_names)


def save_profile(profile: RankingProfile, path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2) + "\n", encoding="utf-8")


def unanimous_profile(ranking: Iterable[int], n_users: int) -> RankingProfile:
    r = Ranking(tuple(ranking))
    return RankingProfile(tuple([r] * n_users))
