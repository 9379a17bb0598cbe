"""Shared data model: problems, candidates, rollouts, scores.

All records are frozen dataclasses.  ``to_dict``/``from_dict`` follow the
JSONL schemas under ``cbu/schemas``; ``encode`` gives the canonical one-line
form used on disk, so ``encode(decode(line)) == line`` for any line that
``encode`` produced.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import StructuralError

SOURCES = ("llm", "human")
LABELS = ("correct", "wrong")
METHODS = ("cbu", "judge", "genrm_adapter")

# paper pool layout: nine model-written candidates, four right and five wrong
STRICT_LLM_CORRECT = 4
STRICT_LLM_WRONG = 5
STRICT_MAX_HUMAN = 1


def encode(record) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, separators=(",", ":"))


def decode(cls, line: str):
    return cls.from_dict(json.loads(line))


def _require(cond: bool, msg: str):
    if not cond:
        raise StructuralError(msg)


@dataclass(frozen=True)
class NeighborhoodQuestion:
    id: str
    statement: str
    gold_answer: str

    def __post_init__(self):
        _require(bool(self.id), "neighborhood question needs an id")
        _require(bool(self.gold_answer), f"neighborhood {self.id!r} has an empty gold answer")

    def to_dict(self) -> dict:
        return {"id": self.id, "statement": self.statement, "gold_answer": self.gold_answer}

    @classmethod
    def from_dict(cls, d: dict) -> "NeighborhoodQuestion":
        return cls(id=d["id"], statement=d["statement"], gold_answer=d["gold_answer"])


@dataclass(frozen=True)
class Problem:
    id: str
    statement: str
    gold_answer: str
    group_id: str
    neighborhoods: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        _require(bool(self.id), "problem needs an id")
        _require(bool(self.gold_answer), f"problem {self.id!r} has an empty gold answer")
        _require(bool(self.group_id), f"problem {self.id!r} has an empty group_id")
        object.__setattr__(self, "neighborhoods", tuple(self.neighborhoods))
        dup = [k for k, n in Counter(q.id for q in self.neighborhoods).items() if n > 1]
        _require(not dup, f"problem {self.id!r} repeats neighborhood ids {dup}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "group_id": self.group_id,
            "statement": self.statement,
            "gold_answer": self.gold_answer,
            "neighborhoods": [q.to_dict() for q in self.neighborhoods],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            id=d["id"],
            statement=d["statement"],
            gold_answer=d["gold_answer"],
            group_id=d["group_id"],
            neighborhoods=tuple(NeighborhoodQuestion.from_dict(q) for q in d.get("neighborhoods", [])),
            metadata=dict(d.get("metadata", {})),
        )


@dataclass(frozen=True)
class Candidate:
    id: str
    problem_id: str
    solution_text: str
    source: str = "llm"
    label: Optional[str] = None

    def __post_init__(self):
        _require(bool(self.id), "candidate needs an id")
        _require(bool(self.solution_text), f"candidate {self.id!r} has empty solution text")
        _require(self.source in SOURCES, f"candidate {self.id!r}: unknown source {self.source!r}")
        _require(self.label is None or self.label in LABELS, f"candidate {self.id!r}: unknown label {self.label!r}")

    @property
    def is_human(self) -> bool:
        return self.source == "human"

    def to_dict(self) -> dict:
        d = {"id": self.id, "problem_id": self.problem_id, "source": self.source}
        if self.label is not None:
            d["label"] = self.label
        d["solution_text"] = self.solution_text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        return cls(
            id=d["id"],
            problem_id=d["problem_id"],
            solution_text=d["solution_text"],
            source=d.get("source", "llm"),
            label=d.get("label"),
        )


@dataclass(frozen=True)
class CandidatePool:
    problem_id: str
    candidates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))

    def to_dict(self) -> dict:
        return {"problem_id": self.problem_id, "candidates": [c.to_dict() for c in self.candidates]}

    @classmethod
    def from_dict(cls, d: dict) -> "CandidatePool":
        return cls(d["problem_id"], tuple(Candidate.from_dict(c) for c in d["candidates"]))


@dataclass(frozen=True)
class Rollout:
    backend_id: str
    prompt_hash: str
    index: int
    completion: str
    verdict: Optional[int] = None
    parsed_score: Optional[float] = None

    def __post_init__(self):
        _require(self.index >= 0, "rollout index must be >= 0")
        _require(self.verdict in (None, 0, 1), f"rollout verdict must be 0/1, got {self.verdict!r}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "backend_id": self.backend_id,
            "prompt_hash": self.prompt_hash,
            "index": self.index,
            "completion": self.completion,
        }
        if self.verdict is not None:
            d["verdict"] = self.verdict
        if self.parsed_score is not None:
            d["parsed_score"] = self.parsed_score
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Rollout":
        return cls(
            backend_id=d["backend_id"],
            prompt_hash=d["prompt_hash"],
            index=d["index"],
            completion=d["completion"],
            verdict=d.get("verdict"),
            parsed_score=d.get("parsed_score"),
        )


@dataclass(frozen=True)
class ScoreRecord:
    candidate_id: str
    method: str
    value: float
    support: int
    components: Optional[dict] = None
    bounds: tuple = (0.0, 1.0)

    def __post_init__(self):
        _require(self.method in METHODS, f"unknown scoring method {self.method!r}")
        _require(self.support >= 1, f"score for {self.candidate_id!r} has support {self.support}")
        lo, hi = self.bounds
        if self.method == "cbu":
            _require(0.0 <= self.value <= 1.0, f"cbu value {self.value} outside [0, 1]")
        else:
            _require(lo <= self.value <= hi, f"{self.method} value {self.value} outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "candidate_id": self.candidate_id,
            "method": self.method,
            "value": self.value,
            "support": self.support,
        }
        if self.components is not None:
            d["components"] = self.components
        if tuple(self.bounds) != (0.0, 1.0):
            d["bounds"] = list(self.bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreRecord":
        return cls(
            candidate_id=d["candidate_id"],
            method=d["method"],
            value=d["value"],
            support=d["support"],
            components=d.get("components"),
            bounds=tuple(d.get("bounds", (0.0, 1.0))),
        )


@dataclass(frozen=True)
class Violation:
    kind: str  # "structural" or "composition"
    message: str
    subject: Optional[str] = None


def validate_pool(pool: CandidatePool, strict: bool = False) -> list[Violation]:
    """Check a pool; returns violations sorted so that input order never matters.

    Raises StructuralError for an empty pool.  ``strict`` additionally checks
    the nine-candidate layout (4 correct / 5 wrong model solutions, at most
    one human solution).
    """
    if not pool.candidates:
        raise StructuralError(f"pool for problem {pool.problem_id!r} is empty")

    out = []
    counts = Counter(c.id for c in pool.candidates)
    for cid in sorted(k for k, n in counts.items() if n > 1):
        out.append(Violation("structural", f"duplicate candidate id {cid!r}", cid))
    for cid in sorted({c.id for c in pool.candidates if c.problem_id != pool.problem_id}):
        out.append(Violation("structural", f"candidate {cid!r} belongs to another problem", cid))

    if strict:
        llm = [c for c in pool.candidates if not c.is_human]
        n_human = len(pool.candidates) - len(llm)
        n_ok = sum(c.label == "correct" for c in llm)
        n_bad = sum(c.label == "wrong" for c in llm)
        unlabeled = sorted(c.id for c in llm if c.label is None)
        if unlabeled:
            out.append(Violation("composition", f"unlabeled llm candidates {unlabeled}"))
        if (n_ok, n_bad) != (STRICT_LLM_CORRECT, STRICT_LLM_WRONG):
            out.append(Violation(
                "composition",
                f"expected {STRICT_LLM_CORRECT} correct / {STRICT_LLM_WRONG} wrong llm candidates, "
                f"found {n_ok} / {n_bad}",
            ))
        if n_human > STRICT_MAX_HUMAN:
            out.append(Violation("composition", f"{n_human} human candidates (max {STRICT_MAX_HUMAN})"))
    return sorted(out, key=lambda v: (v.kind, v.subject or "", v.message))


def group_problems(problems) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for p in problems:
        groups.setdefault(p.group_id, []).append(p.id)
    return {g: groups[g] for g in sorted(groups)}


def pools_from_candidates(candidates) -> dict[str, CandidatePool]:
    by_problem: dict[str, list[Candidate]] = {}
    for c in candidates:
        by_problem.setdefault(c.problem_id, []).append(c)
    return {pid: CandidatePool(pid, tuple(cs)) for pid, cs in sorted(by_problem.items())}
