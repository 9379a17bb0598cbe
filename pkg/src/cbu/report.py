"""Evaluation-report assembly: ranking tables plus diagnostic analyses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import metrics as M
from .model import group_problems

SCHEMA_ID = "cbu.report/1"


def method_key(record) -> str:
    """'cbu', 'judge:ten_point', 'genrm_adapter' ... one ranking per key."""
    if record.method == "judge":
        return f"judge:{(record.components or {}).get('scheme', 'ten_point')}"
    return record.method


def split_by_method(records) -> dict[str, list]:
    out: dict[str, list] = {}
    for r in records:
        out.setdefault(method_key(r), []).append(r)
    return {k: out[k] for k in sorted(out)}


@dataclass
class MethodSection:
    per_question: dict = field(default_factory=dict)  # qid -> MetricSet
    aggregate: M.MetricSet = field(default_factory=M.MetricSet)
    missing: list = field(default_factory=list)        # candidate ids without a score

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate.to_dict(),
            "per_question": {q: self.per_question[q].to_dict() for q in sorted(self.per_question)},
            "missing_scores": sorted(self.missing),
        }


@dataclass
class EvaluationReport:
    include_human: bool = False
    tie_mode: str = "expected"
    groups: dict = field(default_factory=dict)
    methods: dict = field(default_factory=dict)   # method key -> MethodSection
    analyses: dict = field(default_factory=dict)  # name -> JSON-ready payload

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_ID,
            "settings": {"include_human": self.include_human, "tie_mode": self.tie_mode},
            "groups": {g: list(self.groups[g]) for g in sorted(self.groups)},
            "methods": {k: self.methods[k].to_dict() for k in sorted(self.methods)},
            "analyses": {k: self.analyses[k] for k in sorted(self.analyses)},
        }


def evaluate_method(problems, pools, records, include_human=False, tie_mode="expected") -> MethodSection:
    """Per-question metrics for one scoring method, averaged over variant groups."""
    section = MethodSection()
    for p in problems:
        pool = pools.get(p.id)
        if pool is None:
            continue
        scored = {r.candidate_id for r in records}
        section.missing.extend(c.id for c in pool.candidates if c.id not in scored)
        ls = M.LabeledScores.from_records(pool.candidates, records)
        section.per_question[p.id] = M.compute_metrics(ls, include_human, tie_mode)
    groups = {g: [q for q in qs if q in section.per_question] for g, qs in group_problems(problems).items()}
    section.aggregate = M.aggregate(section.per_question, {g: qs for g, qs in groups.items() if qs})
    return section


def above_average_table(pools, records) -> dict:
    """P[s(C) > question mean] for correct-LLM, correct-human and wrong candidates."""
    cands = {c.id: c for pool in pools.values() for c in pool.candidates}
    by_q: dict[str, list] = {}
    for r in records:
        c = cands.get(r.candidate_id)
        if c is not None:
            by_q.setdefault(c.problem_id, []).append(r)
    selectors = {
        "correct_llm": lambda cid: cands[cid].label == "correct" and not cands[cid].is_human,
        "correct_human": lambda cid: cands[cid].label == "correct" and cands[cid].is_human,
        "wrong": lambda cid: cands[cid].label == "wrong",
    }
    out = {}
    for name, sel in selectors.items():
        rate = M.above_average_rate(by_q, sel)
        out[name] = None if rate is None else float(rate)
    return out


def score_gap_table(pools, records, difficulties: dict, bins: int = 10) -> dict:
    scores = {
        qid: M.LabeledScores.from_records(pool.candidates, records)
        for qid, pool in pools.items() if qid in difficulties
    }
    rows, empty = M.score_gap_by_difficulty(scores, difficulties, bins)
    return {"bins": bins, "rows": [r.to_dict() for r in rows], "empty_bins": empty}


def build_report(problems, pools, records, *, include_human=False, tie_mode="expected",
                 difficulties: Optional[dict] = None, bins: int = 10, extra: Optional[dict] = None,
                 methods=None) -> EvaluationReport:
    rep = EvaluationReport(include_human=include_human, tie_mode=tie_mode, groups=group_problems(problems))
    for key, recs in split_by_method(records).items():
        if methods and key not in methods and key.split(":")[0] not in methods:
            continue
        rep.methods[key] = evaluate_method(problems, pools, recs, include_human, tie_mode)
        rep.analyses.setdefault("above_average", {})[key] = above_average_table(pools, recs)
        if difficulties:
            rep.analyses.setdefault("score_gap_by_difficulty", {})[key] = score_gap_table(pools, recs, difficulties, bins)
    for name, payload in (extra or {}).items():
        rep.analyses[name] = payload
    return rep
