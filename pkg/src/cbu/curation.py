"""Neighborhood-question curation: solvability band, solver agreement, answer floor.

The pipeline runs generate -> solvability -> band -> agreement; each stage only
ever removes questions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import PipelineError
from .scoring import CURATION_K, SolvabilityEstimate, estimate_solvability
from .verdicts import normalize

BAND_LOW = 0.05
BAND_HIGH = 0.5
ANSWER_FLOOR = 1000


@dataclass(frozen=True)
class CandidateQuestion:
    id: str
    statement: str
    proposed_answers: dict = field(default_factory=dict)
    solvability: Optional[SolvabilityEstimate] = None
    gold_answer: str = ""  # adopted answer once agreement holds

    def to_dict(self) -> dict:
        d = {"id": self.id, "statement": self.statement, "proposed_answers": dict(sorted(self.proposed_answers.items()))}
        if self.solvability is not None:
            d["solvability"] = self.solvability.to_dict()
        if self.gold_answer:
            d["gold_answer"] = self.gold_answer
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateQuestion":
        sv = d.get("solvability")
        est = None if sv is None else SolvabilityEstimate(sv.get("question_id", d["id"]), sv["k"], sv["successes"])
        return cls(d["id"], d["statement"], dict(d.get("proposed_answers", {})), est, d.get("gold_answer", ""))


@dataclass(frozen=True)
class Decision:
    keep: bool
    reason: str = ""
    adopted: str = ""


def band_filter(q: CandidateQuestion, low: float = BAND_LOW, high: float = BAND_HIGH) -> Decision:
    if q.solvability is None:
        raise PipelineError(f"question {q.id!r} has no solvability estimate")
    a = q.solvability.avg_at_k
    if low < a < high:
        return Decision(True)
    return Decision(False, f"avg@{q.solvability.k} = {a:g} outside ({low:g}, {high:g})")


def agreement_filter(q: CandidateQuestion, required_solvers) -> Decision:
    missing = sorted(s for s in required_solvers if not q.proposed_answers.get(s))
    if missing:
        return Decision(False, f"missing answers from {missing}")
    answers = {normalize(q.proposed_answers[s]) for s in required_solvers}
    if len(answers) != 1:
        return Decision(False, f"solvers disagree: {sorted(answers)}")
    return Decision(True, adopted=answers.pop())


_INT_RE = re.compile(r"[+-]?\d+")


def integer_floor_check(answer: str, floor: int = ANSWER_FLOOR) -> bool:
    s = normalize(answer)
    return bool(_INT_RE.fullmatch(s)) and int(s) > floor


@dataclass
class StageCount:
    stage: str
    kept: int
    dropped: dict = field(default_factory=dict)  # question id -> reason


def parse_generated_questions(completion: str) -> list[str]:
    """Questions from a ``<questions>[...]</questions>`` block of the variant-generation prompt."""
    m = re.search(r"<questions>\s*(.*?)\s*</questions>", completion, flags=re.S)
    if not m:
        return []
    body = m.group(1)
    start, end = body.find("["), body.rfind("]")
    if start < 0 or end < start:
        return []
    try:
        items = json.loads(body[start:end + 1])
    except json.JSONDecodeError:
        return []
    return [s for s in items if isinstance(s, str) and s.strip()]


def curate(questions, gateway=None, *, required_solvers, k: int = CURATION_K, backend_id: str = "",
           sampling=None, store=None, low: float = BAND_LOW, high: float = BAND_HIGH,
           floor: Optional[int] = None) -> tuple[list[CandidateQuestion], list[StageCount]]:
    """Solvability (estimated when missing), band, agreement, optional integer floor."""
    stages = []
    current = list(questions)
    stages.append(StageCount("input", len(current)))

    with_solv = []
    for q in current:
        if q.solvability is None:
            if gateway is None:
                raise PipelineError(f"question {q.id!r} has no solvability and no gateway was given")
            probe = replace(q, gold_answer=q.gold_answer or _consensus(q, required_solvers))
            if not probe.gold_answer:
                raise PipelineError(f"question {q.id!r}: no answer to verify solvability attempts against")
            kw = {} if sampling is None else {"sampling": sampling}
            est = estimate_solvability(gateway, probe, k, backend_id=backend_id, store=store, **kw)
            q = replace(q, solvability=est)
        with_solv.append(q)
    stages.append(StageCount("solvability", len(with_solv)))

    kept, dropped = [], {}
    for q in with_solv:
        d = band_filter(q, low, high)
        if d.keep:
            kept.append(q)
        else:
            dropped[q.id] = d.reason
    stages.append(StageCount("band", len(kept), dropped))

    agreed, dropped = [], {}
    for q in kept:
        d = agreement_filter(q, required_solvers)
        if d.keep:
            agreed.append(replace(q, gold_answer=d.adopted))
        else:
            dropped[q.id] = d.reason
    stages.append(StageCount("agreement", len(agreed), dropped))

    if floor is not None:
        final, dropped = [], {}
        for q in agreed:
            if integer_floor_check(q.gold_answer, floor):
                final.append(q)
            else:
                dropped[q.id] = f"answer {q.gold_answer!r} is not an integer > {floor}"
        stages.append(StageCount("integer_floor", len(final), dropped))
        agreed = final
    return agreed, stages


def _consensus(q: CandidateQuestion, solvers) -> str:
    d = agreement_filter(q, solvers)
    return d.adopted if d.keep else ""
