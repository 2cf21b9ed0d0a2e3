"""Pairwise preference ranking and agreement statistics.

Battles pair two systems on one concept; verdicts record a judge's outcome.
Decisive outcomes feed a Bradley-Terry maximum-likelihood fit (ties and
both-bad verdicts are kept in storage but dropped from the likelihood),
strengths are rescaled onto a 1000-centered ELO axis with a 400-per-decade
slope, and percentile-bootstrap resampling of the verdict rows yields 95%
rating intervals.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import errors, kernels
from .seeding import substream

BT_TOL = 1e-8
BT_MAX_ITER = 10_000
LOG_PI_CLAMP = 20.0
ELO_SLOPE = 400.0
ELO_CENTER = 1000.0
DEFAULT_RESAMPLES = 1000

VARIANT_WITH_DEF = "with_def"
VARIANT_NO_DEF = "no_def"


class Outcome(str, Enum):
    WIN_A = "A"
    WIN_B = "B"
    TIE = "TIE"
    BOTH_BAD = "BOTH_BAD"


DECISIVE = (Outcome.WIN_A, Outcome.WIN_B)


@dataclass(frozen=True)
class Battle:
    battle_id: str
    concept_id: str
    side_a: str
    side_b: str
    variant: str = VARIANT_WITH_DEF
    subset: str = "all"

    def __post_init__(self):
        if self.side_a == self.side_b:
            raise ValueError(f"battle {self.battle_id!r} pits a system against itself")


@dataclass(frozen=True)
class Verdict:
    battle_id: str
    judge_id: str
    outcome: Outcome
    ts: str = ""


@dataclass
class BTRatings:
    systems: list[str]
    pi: np.ndarray
    elo: Optional[np.ndarray] = None
    converged: bool = True
    iterations: int = 0
    excluded: list[str] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)

    def strength(self, system: str) -> float:
        return float(self.pi[self.systems.index(system)])

    def elo_of(self, system: str) -> float:
        if self.elo is None:
            raise ValueError("ratings are not ELO-scaled yet")
        return float(self.elo[self.systems.index(system)])


@dataclass(frozen=True)
class RatingInterval:
    system: str
    elo: float
    plus: float  # 97.5th percentile offset above the point estimate
    minus: float  # 2.5th percentile offset below the point estimate

    def render(self) -> str:
        return f"{self.elo:.0f} (+{self.plus:.0f}/-{self.minus:.0f})"


@dataclass
class RewardTable:
    scores: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, system: str, concept: str, score: float) -> None:
        if not math.isfinite(score):
            raise errors.NonFiniteComponent(f"{system}/{concept}")
        key = (system, concept)
        if key in self.scores:
            raise errors.DuplicateId(f"{system}/{concept}")
        self.scores[key] = score

    def by_system(self, system: str) -> list[float]:
        return [v for (s, _), v in sorted(self.scores.items()) if s == system]


# --- wire formats -----------------------------------------------------------

def save_battles(battles: Iterable[Battle], sink: IO[str]) -> None:
    for b in battles:
        sink.write(json.dumps({
            "battle_id": b.battle_id, "concept_id": b.concept_id,
            "side_a": b.side_a, "side_b": b.side_b,
            "variant": b.variant, "subset": b.subset,
        }) + "\n")


def load_battles(source: Union[IO[str], Iterable[str]]) -> list[Battle]:
    out = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
            out.append(Battle(obj["battle_id"], obj["concept_id"], obj["side_a"],
                              obj["side_b"], obj.get("variant", VARIANT_WITH_DEF),
                              obj.get("subset", "all")))
        except (json.JSONDecodeError, KeyError) as exc:
            raise errors.MalformedRecord(lineno, str(exc)) from exc
    return out


def save_verdicts(verdicts: Iterable[Verdict], sink: IO[str]) -> None:
    for v in verdicts:
        sink.write(json.dumps({
            "battle_id": v.battle_id, "judge_id": v.judge_id,
            "outcome": v.outcome.value, "ts": v.ts,
        }) + "\n")


def load_verdicts(source: Union[IO[str], Iterable[str]]) -> list[Verdict]:
    out = []
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
            verdict = Verdict(obj["battle_id"], obj["judge_id"],
                              Outcome(obj["outcome"]), obj.get("ts", ""))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise errors.MalformedRecord(lineno, str(exc)) from exc
        key = (verdict.battle_id, verdict.judge_id)
        if key in seen:
            raise errors.DuplicateId(f"{verdict.battle_id}/{verdict.judge_id}")
        seen.add(key)
        out.append(verdict)
    return out


def battle_index(battles: Iterable[Battle]) -> dict[str, Battle]:
    index: dict[str, Battle] = {}
    for b in battles:
        if b.battle_id in index:
            raise errors.DuplicateId(b.battle_id)
        index[b.battle_id] = b
    return index


# --- scheduling ---------------------------------------------------------------

def schedule_battles(concepts: Sequence[str], systems: Sequence[str], seed: int,
                     battles_per_concept: int = 1,
                     variant: str = VARIANT_WITH_DEF,
                     subset_of: Optional[Mapping[str, str]] = None) -> list[Battle]:
    """Uniform unordered pairs with fair-coin side assignment.

    Within one concept no unordered pair repeats until every pair has been
    used once; the pool then reshuffles.
    """
    if len(systems) < 2:
        raise errors.TooFewSystems(f"need at least 2 systems, got {len(systems)}")
    if battles_per_concept < 1:
        raise ValueError("battles_per_concept must be positive")
    rng = substream(seed, "schedule")
    pairs = list(itertools.combinations(range(len(systems)), 2))
    battles: list[Battle] = []
    for concept in concepts:
        pool: list[tuple[int, int]] = []
        for k in range(battles_per_concept):
            if not pool:
                pool = [pairs[i] for i in rng.permutation(len(pairs))]
            i, j = pool.pop()
            if rng.random() < 0.5:
                i, j = j, i
            battles.append(Battle(
                battle_id=f"{concept}#{k}",
                concept_id=concept,
                side_a=systems[i],
                side_b=systems[j],
                variant=variant,
                subset=(subset_of or {}).get(concept, "all"),
            ))
    return battles


# --- Bradley-Terry fit --------------------------------------------------------

def _decisive_pairs(verdicts: Sequence[Verdict],
                    battles: Mapping[str, Battle]) -> tuple[list[tuple[str, str]], set[str]]:
    """(winner, loser) per decisive verdict plus every system seen in play."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for v in verdicts:
        try:
            b = battles[v.battle_id]
        except KeyError:
            raise errors.MalformedRecord(0, f"verdict references unknown battle {v.battle_id!r}") from None
        seen.add(b.side_a)
        seen.add(b.side_b)
        if v.outcome is Outcome.WIN_A:
            pairs.append((b.side_a, b.side_b))
        elif v.outcome is Outcome.WIN_B:
            pairs.append((b.side_b, b.side_a))
    return pairs, seen


def fit_bradley_terry(verdicts: Sequence[Verdict],
                      battles: Mapping[str, Battle]) -> BTRatings:
    """Maximum-likelihood strengths by minorization-maximization.

    Systems with no decisive verdict are excluded (and listed); systems with
    only wins or only losses have unbounded likelihood, so their log-strength
    is clamped at +/-20 and they are flagged as degenerate.
    """
    pairs, seen = _decisive_pairs(verdicts, battles)
    if not pairs:
        raise errors.NoDecisiveVerdicts("no WinA/WinB verdicts to fit")
    active = sorted({s for pair in pairs for s in pair})
    excluded = sorted(seen - set(active))
    index = {s: i for i, s in enumerate(active)}
    k = len(active)
    wins = np.zeros((k, k))
    for winner, loser in pairs:
        wins[index[winner], index[loser]] += 1.0

    log_pi, iterations, converged = kernels.bt_fit(
        wins, tol=BT_TOL, max_iter=BT_MAX_ITER, clamp=LOG_PI_CLAMP)

    won = wins.sum(axis=1)
    lost = wins.sum(axis=0)
    degenerate = [s for s in active
                  if (won[index[s]] == 0) != (lost[index[s]] == 0)]
    return BTRatings(systems=active, pi=np.exp(log_pi), converged=bool(converged),
                     iterations=int(iterations), excluded=excluded,
                     degenerate=degenerate)


def elo_scale(ratings: BTRatings) -> BTRatings:
    """400 * log10(pi) shifted so the mean over included systems is 1000."""
    raw = ELO_SLOPE * np.log10(ratings.pi)
    elo = raw + (ELO_CENTER - raw.mean())
    return replace(ratings, elo=elo)


def _resample_win_tensors(verdicts: Sequence[Verdict], battles: Mapping[str, Battle],
                          systems: Sequence[str], resamples: int,
                          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-resample win matrices plus per-system presence masks."""
    index = {s: i for i, s in enumerate(systems)}
    k = len(systems)
    flat = []
    for v in verdicts:
        b = battles[v.battle_id]
        if v.outcome is Outcome.WIN_A and b.side_a in index and b.side_b in index:
            flat.append(index[b.side_a] * k + index[b.side_b])
        elif v.outcome is Outcome.WIN_B and b.side_a in index and b.side_b in index:
            flat.append(index[b.side_b] * k + index[b.side_a])
        else:
            flat.append(-1)
    flat = np.asarray(flat, dtype=np.int64)
    n = len(verdicts)
    draws = rng.integers(0, n, size=(resamples, n))
    cells = flat[draws]
    wins = np.zeros((resamples, k * k))
    for r in range(resamples):
        row = cells[r]
        counts = np.bincount(row[row >= 0], minlength=k * k)
        wins[r, :len(counts)] = counts
    wins = wins.reshape(resamples, k, k)
    played = (wins.sum(axis=2) + wins.sum(axis=1)) > 0
    return wins, played


def bootstrap_intervals(verdicts: Sequence[Verdict], battles: Mapping[str, Battle],
                        resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                        max_failure_rate: float = 0.10) -> list[RatingInterval]:
    """95% percentile intervals from verdict-row resampling.

    Offsets are reported around the full-sample point estimate and clamped
    at zero so the point always lies inside its own interval. Resamples
    whose fit is impossible (no decisive rows) are dropped; more than 10%
    of them failing is an error.
    """
    if resamples < 1:
        raise ValueError("resamples must be positive")
    point = elo_scale(fit_bradley_terry(verdicts, battles))
    systems = point.systems
    rng = substream(seed, "bootstrap")
    wins, played = _resample_win_tensors(verdicts, battles, systems, resamples, rng)

    decisive = wins.reshape(resamples, -1).sum(axis=1) > 0
    failed = int((~decisive).sum())
    if failed > max_failure_rate * resamples:
        raise errors.TooManyFailedResamples(failed, resamples)
    wins = wins[decisive]
    played = played[decisive]

    log_pi, _, _ = kernels.bt_fit_batch(
        wins, tol=BT_TOL, max_iter=BT_MAX_ITER, clamp=LOG_PI_CLAMP)
    raw = (ELO_SLOPE / math.log(10)) * log_pi
    elos = np.where(played, raw, np.nan)
    # re-anchor each resample on its own included systems
    elos += ELO_CENTER - np.nanmean(elos, axis=1, keepdims=True)

    intervals = []
    for i, system in enumerate(systems):
        col = elos[:, i]
        col = col[~np.isnan(col)]
        p = point.elo_of(system)
        if col.size == 0:
            intervals.append(RatingInterval(system, p, 0.0, 0.0))
            continue
        lo, hi = np.percentile(col, [2.5, 97.5])
        intervals.append(RatingInterval(
            system, p, plus=max(0.0, float(hi) - p), minus=max(0.0, p - float(lo))))
    return intervals


def leaderboard_rows(intervals: Sequence[RatingInterval],
                     battle_counts: Mapping[str, int]) -> list[dict]:
    rows = [{
        "system": iv.system,
        "elo": iv.elo,
        "plus": iv.plus,
        "minus": iv.minus,
        "n_battles": int(battle_counts.get(iv.system, 0)),
        "rendered": iv.render(),
    } for iv in intervals]
    rows.sort(key=lambda r: (-r["elo"], r["system"]))
    return rows


def leaderboard_csv(rows: Sequence[Mapping], sink: IO[str]) -> None:
    sink.write("system,elo,plus,minus,n_battles\n")
    for r in rows:
        sink.write(f"{r['system']},{r['elo']:.6f},{r['plus']:.6f},"
                   f"{r['minus']:.6f},{r['n_battles']}\n")


# --- agreement statistics -----------------------------------------------------

def midranks(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, with tied values sharing their average rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr))
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(rank_a: Sequence[float], rank_b: Sequence[float]) -> float:
    """Pearson correlation of midrank-transformed values."""
    a = np.asarray(rank_a, dtype=np.float64)
    b = np.asarray(rank_b, dtype=np.float64)
    if a.shape != b.shape:
        raise errors.LengthMismatch(f"{a.shape} vs {b.shape}")
    if a.size < 2:
        raise errors.TooShort("need at least 2 observations")
    ra = midranks(a)
    rb = midranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt((ra ** 2).sum() * (rb ** 2).sum())
    if denom == 0.0:
        return float("nan")
    return float(np.clip((ra * rb).sum() / denom, -1.0, 1.0))


@dataclass
class ConfusionMatrix:
    labels: list[Outcome]
    counts: np.ndarray  # rows: judge A, cols: judge B

    def count(self, a: Outcome, b: Outcome) -> int:
        return int(self.counts[self.labels.index(a), self.labels.index(b)])

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(verdicts_a: Sequence[Verdict], verdicts_b: Sequence[Verdict],
                     exclude: frozenset = frozenset({Outcome.TIE})) -> ConfusionMatrix:
    """Outcome agreement over shared battles, after dropping excluded labels.

    A battle is counted only when both judges gave a non-excluded outcome.
    """
    by_a = {v.battle_id: v.outcome for v in verdicts_a}
    by_b = {v.battle_id: v.outcome for v in verdicts_b}
    shared = sorted(set(by_a) & set(by_b))
    if not shared:
        raise errors.NoSharedBattles("judges share no battles")
    labels = [o for o in Outcome if o not in exclude]
    pos = {o: i for i, o in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for bid in shared:
        oa, ob = by_a[bid], by_b[bid]
        if oa in exclude or ob in exclude:
            continue
        counts[pos[oa], pos[ob]] += 1
    return ConfusionMatrix(labels=labels, counts=counts)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    ra = ranks[:len(a)].sum()
    return ra - len(a) * (len(a) + 1) / 2.0


def _exact_two_sided_p(a: np.ndarray, b: np.ndarray, u_obs: float) -> float:
    """Enumerate every assignment of the pooled values to the two groups."""
    n, m = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    center = n * m / 2.0
    threshold = abs(u_obs - center) - 1e-12
    total = 0
    extreme = 0
    base = n * (n + 1) / 2.0
    for combo in itertools.combinations(range(n + m), n):
        u = ranks[list(combo)].sum() - base
        total += 1
        if abs(u - center) >= threshold:
            extreme += 1
    return extreme / total


def _approx_two_sided_p(n: int, m: int, u: float, tie_counts: np.ndarray) -> float:
    """Normal approximation with tie correction and continuity correction."""
    nm = n * m
    total = n + m
    mu = nm / 2.0
    tie_term = ((tie_counts ** 3 - tie_counts).sum() / (total * (total - 1))
                if total > 1 else 0.0)
    var = nm / 12.0 * (total + 1 - tie_term)
    if var <= 0:
        return 1.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2.0 * _normal_sf(z))


def mann_whitney(sample_a: Sequence[float], sample_b: Sequence[float],
                 exact_limit: int = 8) -> tuple[float, float]:
    """U statistic for the first sample and a two-sided p-value.

    The p-value comes from full enumeration of group assignments whenever
    both sides have at most `exact_limit` observations, and from the
    tie-corrected, continuity-corrected normal approximation otherwise.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise errors.EmptySample("both samples must be nonempty")
    u = _u_statistic(a, b)
    if a.size <= exact_limit and b.size <= exact_limit:
        p = _exact_two_sided_p(a, b, u)
    else:
        pooled = np.concatenate([a, b])
        _, tie_counts = np.unique(pooled, return_counts=True)
        p = _approx_two_sided_p(a.size, b.size, u, tie_counts.astype(np.float64))
    return float(u), float(p)


@dataclass(frozen=True)
class DefinitionBenefit:
    system: str
    wins_with_def: int
    wins_no_def: int
    win_rate_with_def: float
    win_rate_no_def: float

    @property
    def wins_delta(self) -> int:
        return self.wins_with_def - self.wins_no_def

    @property
    def win_rate_delta(self) -> float:
        return self.win_rate_with_def - self.win_rate_no_def


def _win_stats(verdicts: Sequence[Verdict],
               battles: Mapping[str, Battle]) -> dict[str, tuple[int, int]]:
    stats: dict[str, list[int]] = {}
    for v in verdicts:
        if v.outcome not in DECISIVE:
            continue
        b = battles[v.battle_id]
        winner = b.side_a if v.outcome is Outcome.WIN_A else b.side_b
        for s in (b.side_a, b.side_b):
            w, n = stats.get(s, [0, 0])
            stats[s] = [w + (1 if s == winner else 0), n + 1]
    return {s: (w, n) for s, (w, n) in stats.items()}


def definition_benefit(verdicts_with_def: Sequence[Verdict],
                       verdicts_no_def: Sequence[Verdict],
                       battles: Mapping[str, Battle]) -> list[DefinitionBenefit]:
    """Per-system change in decisive wins when the prompt carries a definition."""
    with_stats = _win_stats(verdicts_with_def, battles)
    no_stats = _win_stats(verdicts_no_def, battles)
    out = []
    for system in sorted(set(with_stats) | set(no_stats)):
        ww, nw = with_stats.get(system, (0, 0))
        wn, nn = no_stats.get(system, (0, 0))
        out.append(DefinitionBenefit(
            system=system,
            wins_with_def=ww, wins_no_def=wn,
            win_rate_with_def=ww / nw if nw else 0.0,
            win_rate_no_def=wn / nn if nn else 0.0,
        ))
    return out


def battle_counts(verdicts: Sequence[Verdict],
                  battles: Mapping[str, Battle]) -> dict[str, int]:
    """Number of verdicts each system appears in (any outcome)."""
    counts: dict[str, int] = {}
    for v in verdicts:
        b = battles[v.battle_id]
        for s in (b.side_a, b.side_b):
            counts[s] = counts.get(s, 0) + 1
    return counts
