"""Consequence-based utility, judge baselines, and solvability.

A candidate's utility is the solver's verified accuracy on the problem's
neighborhood questions when the candidate is shown as a worked exemplar:
``sum(successes) / sum(trials)`` over all neighborhoods and rollouts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Union

from . import templates
from .errors import BackendError, ConfigError, ParseError
from .gateway import GenerationRequest, SamplingParams
from .model import Candidate, Problem, Rollout, ScoreRecord
from .store import CacheKey
from .verdicts import SCALES, SCHEME_TEMPLATE, parse_judge_score, parse_scalar_score, verify_completion

log = logging.getLogger(__name__)

DEFAULT_T = 64
ECONOMY_T = 8
CURATION_K = 1024
DIFFICULTY_K = 64

# appended to a bare question for exemplar-free attempts
BARE_SOLVE_SUFFIX = "\n\nSolve the question above and output the final answer in the following format: \\boxed{N}."


@dataclass(frozen=True)
class NeighborhoodCount:
    neighborhood_id: str
    successes: int
    trials: int
    verdicts: tuple = ()  # per verified rollout, in index order


@dataclass(frozen=True)
class UtilityEstimate:
    candidate_id: str
    per_neighborhood: tuple
    failed: int = 0

    @property
    def successes(self) -> int:
        return sum(c.successes for c in self.per_neighborhood)

    @property
    def trials(self) -> int:
        return sum(c.trials for c in self.per_neighborhood)

    @property
    def exact(self) -> Optional[Fraction]:
        return Fraction(self.successes, self.trials) if self.trials else None

    @property
    def value(self) -> Optional[float]:
        return None if not self.trials else self.successes / self.trials

    @property
    def ragged(self) -> bool:
        return len({c.trials for c in self.per_neighborhood}) > 1

    def to_score_record(self) -> Optional[ScoreRecord]:
        if not self.trials:
            return None
        comps = {c.neighborhood_id: {"successes": c.successes, "trials": c.trials} for c in self.per_neighborhood}
        return ScoreRecord(self.candidate_id, "cbu", self.value, self.trials, comps)


@dataclass(frozen=True)
class SolvabilityEstimate:
    question_id: str
    k: int
    successes: int

    def __post_init__(self):
        if not 0 <= self.successes <= self.k:
            raise ValueError(f"successes {self.successes} outside [0, {self.k}]")

    @property
    def avg_at_k(self) -> float:
        return self.successes / self.k

    def to_dict(self) -> dict:
        return {"question_id": self.question_id, "k": self.k, "successes": self.successes, "avg_at_k": self.avg_at_k}


def difficulty(est: SolvabilityEstimate) -> float:
    return 1.0 - est.avg_at_k


def _record(store, gen, *, verdict=None, parsed_score=None):
    if store is None:
        return
    req = gen.request
    rollout = Rollout(req.backend_id, req.prompt_hash, req.index, gen.completion, verdict, parsed_score)
    store.put_rollout(CacheKey.for_request(req), rollout, prompt=req.prompt)


def _trials_for(problem: Problem, T) -> dict:
    if isinstance(T, Mapping):
        missing = [q.id for q in problem.neighborhoods if q.id not in T]
        if missing:
            raise ConfigError(f"ragged T is missing neighborhoods {missing}")
        out = {q.id: int(T[q.id]) for q in problem.neighborhoods}
    else:
        out = {q.id: int(T) for q in problem.neighborhoods}
    if any(t < 1 for t in out.values()):
        raise ConfigError("T must be >= 1")
    return out


def score_cbu_pool(
    gateway,
    problem: Problem,
    candidates,
    T: Union[int, Mapping[str, int]] = DEFAULT_T,
    *,
    backend_id: str,
    sampling: SamplingParams = SamplingParams(),
    store=None,
    ragged: bool = False,
) -> list[UtilityEstimate]:
    """Score several candidates of one problem through a single gateway batch.

    A mapping for ``T`` (per-neighborhood trial counts) is only accepted with
    ``ragged=True``.
    """
    if not problem.neighborhoods:
        raise ConfigError(f"problem {problem.id!r} has no neighborhood questions")
    if isinstance(T, Mapping) and not ragged:
        raise ConfigError("per-neighborhood T needs ragged=True")
    trials = _trials_for(problem, T)
    tpl = templates.load("cbu")

    requests, meta = [], []
    for cand in candidates:
        for q in problem.neighborhoods:
            prompt = templates.render(tpl, {
                "original question": problem.statement,
                "candidate solution": cand.solution_text,
                "variant question": q.statement,
            })
            for t in range(trials[q.id]):
                requests.append(GenerationRequest(backend_id, prompt, sampling, t, "cbu"))
                meta.append((cand.id, q))

    tallies: dict[str, dict[str, list[int]]] = {c.id: {q.id: [] for q in problem.neighborhoods} for c in candidates}
    failed = {c.id: 0 for c in candidates}
    for gen, (cid, q) in zip(gateway.generate_batch(requests), meta):
        if not gen.ok:
            failed[cid] += 1
            continue
        v = verify_completion(gen.completion, q.gold_answer)
        _record(store, gen, verdict=v)
        tallies[cid][q.id].append(v)

    out = []
    for cand in candidates:
        if failed[cand.id]:
            log.warning("candidate %s: %d rollout(s) failed and were excluded", cand.id, failed[cand.id])
        counts = tuple(
            NeighborhoodCount(q.id, sum(vs), len(vs), tuple(vs))
            for q in problem.neighborhoods for vs in [tallies[cand.id][q.id]]
        )
        out.append(UtilityEstimate(cand.id, counts, failed[cand.id]))
    return out


def score_cbu(gateway, problem: Problem, candidate: Candidate, T=DEFAULT_T, **kwargs) -> UtilityEstimate:
    return score_cbu_pool(gateway, problem, [candidate], T, **kwargs)[0]


@dataclass(frozen=True)
class JudgeTally:
    candidate_id: str
    scheme: str
    scores: tuple
    unparseable: int
    failed: int

    @property
    def value(self) -> Optional[float]:
        return sum(self.scores) / len(self.scores) if self.scores else None

    def to_score_record(self, method: str = "judge", bounds=None) -> Optional[ScoreRecord]:
        if not self.scores:
            return None
        lo, hi = bounds or SCALES[self.scheme]
        comps = {"scheme": self.scheme, "unparseable": self.unparseable, "failed": self.failed}
        return ScoreRecord(self.candidate_id, method, self.value, len(self.scores), comps, (float(lo), float(hi)))


def _judge_requests(problem, candidates, template_id, T, backend_id, sampling):
    if T < 1:
        raise ConfigError("T must be >= 1")
    tpl = templates.load(template_id)
    requests, owners = [], []
    for cand in candidates:
        prompt = templates.render(tpl, {"original question": problem.statement, "candidate solution": cand.solution_text})
        for t in range(T):
            requests.append(GenerationRequest(backend_id, prompt, sampling, t, template_id))
            owners.append(cand.id)
    return requests, owners


def _tally_parsed(gateway, requests, owners, candidates, parse, store, label):
    parsed = {c.id: [] for c in candidates}
    bad = {c.id: 0 for c in candidates}
    failed = {c.id: 0 for c in candidates}
    for gen, cid in zip(gateway.generate_batch(requests), owners):
        if not gen.ok:
            failed[cid] += 1
            continue
        try:
            value = parse(gen.completion)
        except ParseError:
            bad[cid] += 1
            _record(store, gen)
            continue
        parsed[cid].append(value)
        _record(store, gen, parsed_score=value)
    out = []
    for c in candidates:
        if bad[c.id]:
            log.info("candidate %s: dropped %d unparseable %s rollout(s)", c.id, bad[c.id], label)
        if not parsed[c.id]:
            log.warning("candidate %s: no parseable %s rollouts; score is missing", c.id, label)
        out.append((c.id, tuple(parsed[c.id]), bad[c.id], failed[c.id]))
    return out


def score_judge_pool(gateway, problem: Problem, candidates, scheme: str = "ten_point", T: int = DEFAULT_T, *,
                     backend_id: str, sampling: SamplingParams = SamplingParams(), store=None) -> list[JudgeTally]:
    if scheme not in SCALES:
        raise ConfigError(f"unknown judge scheme {scheme!r}")
    requests, owners = _judge_requests(problem, candidates, SCHEME_TEMPLATE[scheme], T, backend_id, sampling)
    rows = _tally_parsed(gateway, requests, owners, candidates,
                         lambda text: parse_judge_score(text, scheme).value, store, scheme)
    return [JudgeTally(cid, scheme, scores, bad, failed) for cid, scores, bad, failed in rows]


def score_judge(gateway, problem: Problem, candidate: Candidate, scheme: str = "ten_point", T: int = DEFAULT_T,
                **kwargs) -> Optional[ScoreRecord]:
    """Mean judge score over ``T`` calls; None when no call parsed."""
    return score_judge_pool(gateway, problem, [candidate], scheme, T, **kwargs)[0].to_score_record()


def score_genrm_pool(gateway, problem: Problem, candidates, bounds: tuple, T: int = DEFAULT_T, *, backend_id: str,
                     template_id: str = "judge_default", pattern: Optional[str] = None,
                     sampling: SamplingParams = SamplingParams(), store=None) -> list[Optional[ScoreRecord]]:
    """Generic scalar-score adapter for generative reward models."""
    requests, owners = _judge_requests(problem, candidates, template_id, T, backend_id, sampling)
    kw = {} if pattern is None else {"pattern": pattern}
    rows = _tally_parsed(gateway, requests, owners, candidates,
                         lambda text: parse_scalar_score(text, bounds, **kw), store, "genrm")
    out = []
    for cid, scores, bad, failed in rows:
        if not scores:
            out.append(None)
            continue
        comps = {"unparseable": bad, "failed": failed}
        out.append(ScoreRecord(cid, "genrm_adapter", sum(scores) / len(scores), len(scores), comps,
                               (float(bounds[0]), float(bounds[1]))))
    return out


def bare_prompt(statement: str) -> str:
    return statement + BARE_SOLVE_SUFFIX


def estimate_solvability(gateway, question, k: int = DIFFICULTY_K, *, backend_id: str,
                         sampling: SamplingParams = SamplingParams(), store=None) -> SolvabilityEstimate:
    """``k`` exemplar-free attempts at ``question`` (needs .id, .statement, .gold_answer).

    Failed transport attempts are excluded, so the returned ``k`` is the
    effective number of verified attempts.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    prompt = bare_prompt(question.statement)
    requests = [GenerationRequest(backend_id, prompt, sampling, i, "bare") for i in range(k)]
    successes = trials = 0
    for gen in gateway.generate_batch(requests):
        if not gen.ok:
            continue
        v = verify_completion(gen.completion, question.gold_answer)
        _record(store, gen, verdict=v)
        successes += v
        trials += 1
    if trials < k:
        log.warning("question %s: %d of %d attempts failed", question.id, k - trials, k)
    if not trials:
        raise BackendError(f"question {question.id}: every attempt failed", k)
    return SolvabilityEstimate(question.id, trials, successes)
