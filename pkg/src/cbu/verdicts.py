"""Answer extraction, the binary verifier, and judge-score parsing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .errors import ParseError, ScoreRangeError

SCALES = {"ten_point": (1, 10), "proofgrader": (0, 7), "uq_binary": (0, 1)}
SCHEME_TEMPLATE = {"ten_point": "judge_default", "proofgrader": "judge_proofgrader", "uq_binary": "judge_uq"}

AUDIT_CATEGORIES = {
    1: "Incorrect reasoning",
    2: "Unjustified Compression",
    3: "Unjustified Interpretation",
    4: "External References",
}
AUDIT_MAX_ID = 6


@dataclass(frozen=True)
class ParsedAnswer:
    raw_span: str
    canonical: str
    found: bool


@dataclass(frozen=True)
class JudgeVerdict:
    scheme: str
    value: float
    scale: tuple


@dataclass(frozen=True)
class Evidence:
    quote: str
    analysis: dict
    verbatim: Optional[bool] = None  # None when no solution text was supplied


@dataclass(frozen=True)
class AuditCategory:
    id: int
    name: str
    evidence: tuple

    @property
    def documented(self) -> bool:
        return self.id in AUDIT_CATEGORIES

    @property
    def evidence_violations(self) -> list[str]:
        return [e.quote for e in self.evidence if e.verbatim is False]


_INT_RE = re.compile(r"[+-]?\d+")
_GROUPED_INT_RE = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+")


def normalize(answer: str) -> str:
    """Canonical answer form.

    Integers (optionally with thousands separators) become ``str(int(...))``;
    anything else is only whitespace-trimmed.
    """
    s = answer.strip()
    if s.startswith("$") and s.endswith("$") and len(s) > 1:
        s = s.strip("$").strip()
    grouped = s.replace("{,}", ",").replace("\\,", ",")
    if _GROUPED_INT_RE.fullmatch(grouped):
        s = grouped.replace(",", "")
    if _INT_RE.fullmatch(s):
        return str(int(s))
    return s


def extract_boxed(completion: str) -> ParsedAnswer:
    """Contents of the last brace-balanced ``\\boxed{...}``."""
    starts = [m.end() for m in re.finditer(r"\\boxed\s*\{", completion)]
    for start in reversed(starts):
        depth = 1
        i = start
        n = len(completion)
        while i < n:
            ch = completion[i]
            if ch == "\\" and i + 1 < n and completion[i + 1] in "{}":
                i += 2
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    span = completion[start:i]
                    return ParsedAnswer(span, normalize(span), True)
            i += 1
    return ParsedAnswer("", "", False)


def verify_answer(parsed: ParsedAnswer, gold: str) -> int:
    if not gold:
        raise ValueError("gold answer must be non-empty")
    if not parsed.found:
        return 0
    return int(normalize(parsed.canonical) == normalize(gold))


def verify_completion(completion: str, gold: str) -> int:
    return verify_answer(extract_boxed(completion), gold)


_TEN_POINT_RE = re.compile(r"Score\s*:\s*\**\s*([+-]?\d+(?:\.\d+)?)")
_PROOFGRADER_RE = re.compile(r"<score>\s*([+-]?\d+(?:\.\d+)?)\s*</score>")
_UQ_RE = re.compile(r"\[\[\s*([YNyn])\s*\]\]")


def _last(pattern, text, scheme):
    matches = pattern.findall(text)
    if not matches:
        raise ParseError(f"{scheme}: no score found")
    return matches[-1]


def _as_int(token: str, scheme: str) -> int:
    if not _INT_RE.fullmatch(token):
        raise ParseError(f"{scheme}: score {token!r} is not an integer")
    return int(token)


def parse_judge_score(completion: str, scheme: str) -> JudgeVerdict:
    if scheme not in SCALES:
        raise ValueError(f"unknown judge scheme {scheme!r}")
    lo, hi = SCALES[scheme]
    if scheme == "uq_binary":
        value = 1 if _last(_UQ_RE, completion, scheme).upper() == "Y" else 0
    else:
        pattern = _TEN_POINT_RE if scheme == "ten_point" else _PROOFGRADER_RE
        value = _as_int(_last(pattern, completion, scheme), scheme)
        if not lo <= value <= hi:
            raise ScoreRangeError(f"{scheme}: score {value} outside [{lo}, {hi}]")
    return JudgeVerdict(scheme, float(value), (lo, hi))


def parse_scalar_score(completion: str, bounds: tuple, pattern: str = r"[Ss]core\s*[:=]\s*([+-]?\d+(?:\.\d+)?)") -> float:
    """Generic reward-model adapter: last numeric capture of ``pattern``."""
    matches = re.findall(pattern, completion)
    if not matches:
        raise ParseError("no scalar score found")
    value = float(matches[-1])
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ScoreRangeError(f"score {value} outside [{lo}, {hi}]")
    return value


def _load_strict_json(completion: str):
    text = completion.strip()
    fenced = re.fullmatch(r"```(?:json)?\s*(.*?)\s*```", text, flags=re.S)
    if fenced:
        text = fenced.group(1)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"audit output is not valid JSON: {exc}") from None


def parse_error_audit(completion: str, solution_text: Optional[str] = None) -> list[AuditCategory]:
    payload = _load_strict_json(completion)
    if not isinstance(payload, dict) or not isinstance(payload.get("categories"), list):
        raise ParseError("audit output must be an object with a 'categories' list")
    out = []
    for item in payload["categories"]:
        if not isinstance(item, dict):
            raise ParseError("audit category must be an object")
        cid = item.get("id")
        if isinstance(cid, bool) or not isinstance(cid, int) or not 1 <= cid <= AUDIT_MAX_ID:
            raise ParseError(f"audit category id {cid!r} not an integer in [1, {AUDIT_MAX_ID}]")
        evidence = []
        for ev in item.get("evidence", []):
            if not isinstance(ev, dict) or not isinstance(ev.get("quote"), str):
                raise ParseError(f"category {cid}: evidence entries need a string 'quote'")
            verbatim = None if solution_text is None else ev["quote"] in solution_text
            evidence.append(Evidence(ev["quote"], dict(ev.get("analysis") or {}), verbatim))
        out.append(AuditCategory(cid, str(item.get("name", AUDIT_CATEGORIES.get(cid, ""))), tuple(evidence)))
    return out
