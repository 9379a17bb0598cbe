"""Labeled-pool ranking metrics: Acc@1, Recall@5, AUC, HumanWin, MeanWin.

Values are exact ``Fraction``s.  Ties in the ranking are resolved by taking
the expectation over uniformly random tie orderings, which is what makes the
top-1 and top-5 metrics well defined on integer judge scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import kernels

METRICS = ("acc_at_1", "recall_at_5", "auc", "human_win", "mean_win")
TOP_K = 5
TIE_MODES = ("expected", "optimistic", "pessimistic")


class UndefinedMetric(ValueError):
    """Raised when a metric has no value for the given pool; carries the reason."""


@dataclass(frozen=True)
class Entry:
    candidate_id: str
    score: object  # int, float or Fraction
    label: str
    is_human: bool = False


@dataclass(frozen=True)
class LabeledScores:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if sum(e.is_human for e in self.entries) > 1:
            raise ValueError("at most one human entry per pool")
        for e in self.entries:
            if e.label not in ("correct", "wrong"):
                raise ValueError(f"{e.candidate_id}: label must be 'correct' or 'wrong'")

    @classmethod
    def from_records(cls, candidates, records) -> "LabeledScores":
        """Join candidates (with labels) to ScoreRecords; unscored candidates are skipped."""
        by_id = {r.candidate_id: r.value for r in records}
        return cls(tuple(
            Entry(c.id, by_id[c.id], c.label, c.is_human)
            for c in candidates if c.id in by_id and c.label is not None
        ))

    def pool(self, include_human: bool = False) -> list[Entry]:
        """Entries that take part in ranking; the human solution joins only with ``include_human``."""
        return [e for e in self.entries if include_human or not e.is_human]

    @property
    def human(self) -> Optional[Entry]:
        return next((e for e in self.entries if e.is_human), None)


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _dense_ranks(scores) -> np.ndarray:
    """Integer ranks preserving order and ties exactly (higher score, higher rank)."""
    exact = [_exact(s) for s in scores]
    levels = {v: i for i, v in enumerate(sorted(set(exact)))}
    return np.array([levels[v] for v in exact], dtype=np.int64)


def _is_correct(e: Entry) -> bool:
    return e.label == "correct"


def _tie_groups(pool: Sequence[Entry]) -> list[tuple[int, int]]:
    """(group size, #correct) per distinct score, best score first."""
    groups: dict[Fraction, list[int]] = {}
    for e in pool:
        g = groups.setdefault(_exact(e.score), [0, 0])
        g[0] += 1
        g[1] += _is_correct(e)
    return [tuple(groups[s]) for s in sorted(groups, reverse=True)]


def _top_k_hits(pool: Sequence[Entry], k: int, tie_mode: str) -> Fraction:
    """Correct candidates among the top ``k`` ranks.

    A tie group straddling the cut-off fills ``take`` of its ``size`` places;
    ``expected`` averages over uniform tie orderings, ``optimistic`` and
    ``pessimistic`` put its correct members first or last.
    """
    if tie_mode not in TIE_MODES:
        raise ValueError(f"unknown tie mode {tie_mode!r}")
    slots = k
    hits = Fraction(0)
    for size, correct in _tie_groups(pool):
        if slots <= 0:
            break
        take = min(slots, size)
        if tie_mode == "expected":
            hits += Fraction(correct * take, size)
        elif tie_mode == "optimistic":
            hits += min(correct, take)
        else:
            hits += max(0, take - (size - correct))
        slots -= take
    return hits


def acc_at_1(scores: LabeledScores, include_human: bool = False, tie_mode: str = "expected") -> Fraction:
    pool = scores.pool(include_human)
    if not pool:
        raise UndefinedMetric("no candidates to rank")
    return _top_k_hits(pool, 1, tie_mode)


def recall_at_5(scores: LabeledScores, include_human: bool = False, tie_mode: str = "expected",
                k: int = TOP_K) -> Fraction:
    pool = scores.pool(include_human)
    n_correct = sum(map(_is_correct, pool))
    if n_correct == 0:
        raise UndefinedMetric("no correct candidates")
    return _top_k_hits(pool, k, tie_mode) / n_correct


def auc(scores: LabeledScores, include_human: bool = False) -> Fraction:
    pool = scores.pool(include_human)
    ranks = _dense_ranks([e.score for e in pool])
    mask = np.array([_is_correct(e) for e in pool], dtype=bool)
    n_pos, n_neg = int(mask.sum()), int((~mask).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("need at least one correct and one wrong candidate")
    gt, eq = kernels.pair_counts(ranks[mask], ranks[~mask])
    return Fraction(2 * gt + eq, 2 * n_pos * n_neg)


def _indicator_half(a: Fraction, b: Fraction) -> Fraction:
    if a > b:
        return Fraction(1)
    if a == b:
        return Fraction(1, 2)
    return Fraction(0)


def _mean(values) -> Fraction:
    values = [_exact(v) for v in values]
    return sum(values, Fraction(0)) / len(values)


def human_win(scores: LabeledScores) -> Fraction:
    h = scores.human
    if h is None:
        raise UndefinedMetric("no human solution in pool")
    wrong = [e.score for e in scores.pool() if not _is_correct(e)]
    if not wrong:
        raise UndefinedMetric("no wrong candidates")
    return _indicator_half(_exact(h.score), _mean(wrong))


def mean_win(scores: LabeledScores, include_human: bool = False) -> Fraction:
    pool = scores.pool(include_human)
    good = [e.score for e in pool if _is_correct(e)]
    bad = [e.score for e in pool if not _is_correct(e)]
    if not good or not bad:
        raise UndefinedMetric("need at least one correct and one wrong candidate")
    return _indicator_half(_mean(good), _mean(bad))


@dataclass
class MetricSet:
    values: dict = field(default_factory=dict)   # name -> Fraction or None
    reasons: dict = field(default_factory=dict)  # name -> why undefined
    counts: dict = field(default_factory=dict)   # name -> #questions aggregated (aggregates only)

    def __getitem__(self, name):
        return self.values.get(name)

    def defined(self, name) -> bool:
        return self.values.get(name) is not None

    def to_dict(self) -> dict:
        out = {}
        for name in METRICS:
            v = self.values.get(name)
            row = {"value": None if v is None else float(v)}
            if v is None:
                row["reason"] = self.reasons.get(name, "not computed")
            if name in self.counts:
                row["questions"] = self.counts[name]
            out[name] = row
        return out


def compute_metrics(scores: LabeledScores, include_human: bool = False, tie_mode: str = "expected") -> MetricSet:
    fns: dict[str, Callable[[], Fraction]] = {
        "acc_at_1": lambda: acc_at_1(scores, include_human, tie_mode),
        "recall_at_5": lambda: recall_at_5(scores, include_human, tie_mode),
        "auc": lambda: auc(scores, include_human),
        "human_win": lambda: human_win(scores),
        "mean_win": lambda: mean_win(scores, include_human),
    }
    ms = MetricSet()
    for name, fn in fns.items():
        try:
            ms.values[name] = fn()
        except UndefinedMetric as exc:
            ms.values[name] = None
            ms.reasons[name] = str(exc)
    return ms


def aggregate(per_question: Mapping[str, MetricSet], groups: Mapping[str, Sequence[str]]) -> MetricSet:
    """Mean within each variant group, then mean across groups.

    Undefined per-question values are skipped; a group with no defined
    value for a metric is skipped for that metric.
    """
    seen = [q for qs in groups.values() for q in qs]
    if len(seen) != len(set(seen)):
        raise ValueError("a question appears in more than one group")
    orphans = sorted(set(per_question) - set(seen))
    if orphans:
        raise ValueError(f"questions without a group: {orphans}")

    out = MetricSet()
    for name in METRICS:
        group_means = []
        n_questions = 0
        for g in sorted(groups):
            vals = [per_question[q].values.get(name) for q in groups[g] if q in per_question]
            vals = [v for v in vals if v is not None]
            if vals:
                group_means.append(sum(vals, Fraction(0)) / len(vals))
                n_questions += len(vals)
        out.counts[name] = n_questions
        if group_means:
            out.values[name] = sum(group_means, Fraction(0)) / len(group_means)
        else:
            out.values[name] = None
            out.reasons[name] = "undefined for every question"
    return out


# -- diagnostics ------------------------------------------------------------
def above_average_rate(records_by_question: Mapping[str, Sequence], selector: Callable[[str], bool]) -> Optional[Fraction]:
    """Share of selected candidates scoring strictly above their question's mean score.

    ``records_by_question`` maps question id to that question's ScoreRecords;
    ``selector`` picks candidates by id.  None when nothing is selected.
    """
    hits = total = 0
    for records in records_by_question.values():
        if not records:
            continue
        mean = _mean([r.value for r in records])
        for r in records:
            if selector(r.candidate_id):
                total += 1
                hits += _exact(r.value) > mean
    return Fraction(hits, total) if total else None


@dataclass(frozen=True)
class GapRow:
    bin: int
    lower: float
    upper: float
    mean_gap: float
    questions: int

    def to_dict(self) -> dict:
        return {"bin": self.bin, "lower": self.lower, "upper": self.upper,
                "mean_gap": self.mean_gap, "questions": self.questions}


def score_gap(scores: LabeledScores) -> Optional[Fraction]:
    pool = scores.pool()
    good = [e.score for e in pool if _is_correct(e)]
    bad = [e.score for e in pool if not _is_correct(e)]
    if not good or not bad:
        return None
    return _mean(good) - _mean(bad)


def score_gap_by_difficulty(scores_by_question: Mapping[str, LabeledScores], difficulties: Mapping[str, float],
                            bins: int = 10) -> tuple[list[GapRow], list[int]]:
    """Per difficulty bin, the mean over questions of (mean correct - mean wrong).

    Returns (rows, empty_bins); empty bins are omitted from ``rows``.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    buckets: dict[int, list[Fraction]] = {}
    for q, scores in scores_by_question.items():
        d = difficulties[q]
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"difficulty {d} for {q} outside [0, 1]")
        gap = score_gap(scores)
        if gap is None:
            continue
        buckets.setdefault(min(int(d * bins), bins - 1), []).append(gap)
    rows = [
        GapRow(b, b / bins, (b + 1) / bins, float(sum(buckets[b], Fraction(0)) / len(buckets[b])), len(buckets[b]))
        for b in sorted(buckets)
    ]
    return rows, [b for b in range(bins) if b not in buckets]
