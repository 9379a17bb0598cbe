import logging
from fractions import Fraction

import pytest

from cbu.errors import BackendError, BackendTimeout, ConfigError
from cbu.gateway import Gateway
from cbu.model import Candidate, NeighborhoodQuestion, Problem
from cbu.scoring import (SolvabilityEstimate, difficulty, estimate_solvability, score_cbu, score_cbu_pool,
                         score_genrm_pool, score_judge, score_judge_pool)
from cbu.store import RolloutStore

PROBLEM = Problem("p", "Target?", "5", "g", (NeighborhoodQuestion("A", "Variant A?", "10"),
                                            NeighborhoodQuestion("B", "Variant B?", "20")))
CAND = Candidate("c", "p", "Use the trick.", "llm", "correct")


class Table:
    """Backend answering from a per-(prompt marker) list of completions indexed by rollout index."""

    def __init__(self, table):
        self.table = table
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        for marker, outs in self.table.items():
            if marker in req.prompt:
                out = outs[req.index % len(outs)]
                if isinstance(out, Exception):
                    raise out
                return out
        return "???"


def gw_for(backend):
    gw = Gateway()
    gw.register("t", backend, 4)
    return gw


def box(x):
    return f"work... \\boxed{{{x}}}"


class TestCbu:
    def test_all_correct(self):
        gw = gw_for(Table({"Variant A": [box(10)], "Variant B": [box(20)]}))
        est = score_cbu(gw, PROBLEM, CAND, 8, backend_id="t")
        assert est.value == 1.0 and est.trials == 16

    def test_pooled_fraction(self):
        gw = gw_for(Table({"Variant A": [box(10)] * 3 + [box(0)], "Variant B": [box(20)] + [box(0)] * 3}))
        est = score_cbu(gw, PROBLEM, CAND, 4, backend_id="t")
        assert est.exact == Fraction(1, 2) and est.value == 0.5
        assert [c.verdicts for c in est.per_neighborhood] == [(1, 1, 1, 0), (1, 0, 0, 0)]

    def test_default_support(self):
        gw = gw_for(Table({"Variant": [box(10)]}))
        rec = score_cbu(gw, PROBLEM, CAND, backend_id="t").to_score_record()
        assert rec.support == 64 * 2

    def test_failed_rollouts_excluded(self, caplog):
        gw = gw_for(Table({"Variant A": [box(10), BackendTimeout("x", 1)], "Variant B": [box(20)]}))
        with caplog.at_level(logging.WARNING):
            est = score_cbu(gw, PROBLEM, CAND, 4, backend_id="t")
        assert est.failed == 2 and est.trials == 6 and est.value == 1.0
        assert "failed" in caplog.text

    def test_ragged_needs_flag(self):
        gw = gw_for(Table({"Variant": [box(10)]}))
        with pytest.raises(ConfigError):
            score_cbu(gw, PROBLEM, CAND, {"A": 2, "B": 3}, backend_id="t")
        est = score_cbu(gw, PROBLEM, CAND, {"A": 2, "B": 3}, backend_id="t", ragged=True)
        assert est.ragged and est.trials == 5

    def test_no_neighborhoods(self):
        with pytest.raises(ConfigError):
            score_cbu(gw_for(Table({})), Problem("p", "s", "1", "g"), CAND, 2, backend_id="t")

    def test_flip_increases_by_one_over_trials(self):
        base = score_cbu(gw_for(Table({"Variant A": [box(10), box(0)], "Variant B": [box(0)]})), PROBLEM, CAND, 4,
                         backend_id="t")
        flipped = score_cbu(gw_for(Table({"Variant A": [box(10)], "Variant B": [box(0)]})), PROBLEM, CAND, 4,
                            backend_id="t")
        # A goes from 2/4 to 4/4 correct: two flips
        assert flipped.exact - base.exact == Fraction(2, 8)

    def test_pool_records_rollouts(self, tmp_path):
        store = RolloutStore(tmp_path)
        gw = gw_for(Table({"Variant": [box(10)]}))
        score_cbu_pool(gw, PROBLEM, [CAND, Candidate("d", "p", "Other.")], 3, backend_id="t", store=store)
        assert len(store) == 2 * 2 * 3


class TestJudge:
    def test_constant(self):
        rec = score_judge(gw_for(Table({"": ["Score: 7"]})), PROBLEM, CAND, "ten_point", 4, backend_id="t")
        assert rec.value == 7.0 and rec.support == 4 and rec.bounds == (1.0, 10.0)

    def test_unparseable_dropped(self):
        gw = gw_for(Table({"": ["Score: 10", "no idea", "Score: 6", "Score: 42"]}))
        tally = score_judge_pool(gw, PROBLEM, [CAND], "ten_point", 4, backend_id="t")[0]
        assert tally.value == 8.0 and len(tally.scores) == 2 and tally.unparseable == 2
        rec = tally.to_score_record()
        assert rec.support == 2 and rec.components["unparseable"] == 2

    def test_uq_binary(self):
        gw = gw_for(Table({"": ["Accepted: [[Y]]", "Accepted: [[N]]", "[[Y]]", "Accepted: [[Y]]"]}))
        assert score_judge(gw, PROBLEM, CAND, "uq_binary", 4, backend_id="t").value == 0.75

    def test_all_unparseable_is_missing(self):
        assert score_judge(gw_for(Table({"": ["hmm"]})), PROBLEM, CAND, "ten_point", 3, backend_id="t") is None

    def test_bad_t(self):
        with pytest.raises(ConfigError):
            score_judge(gw_for(Table({})), PROBLEM, CAND, "ten_point", 0, backend_id="t")

    def test_genrm_adapter(self):
        gw = gw_for(Table({"": ["critique... Score: 0.25", "Score: 0.75"]}))
        rec = score_genrm_pool(gw, PROBLEM, [CAND], (0.0, 1.0), 2, backend_id="t")[0]
        assert rec.method == "genrm_adapter" and rec.value == 0.5


class TestSolvability:
    def test_count(self):
        outs = [box(5)] * 16 + [box(4)] * 48
        est = estimate_solvability(gw_for(Table({"Target": outs})), PROBLEM, 64, backend_id="t")
        assert est.avg_at_k == 0.25 and difficulty(est) == 0.75

    def test_all_wrong(self):
        est = estimate_solvability(gw_for(Table({"Target": [box(4)]})), PROBLEM, 8, backend_id="t")
        assert est.avg_at_k == 0.0 and difficulty(est) == 1.0

    def test_large_k_recorded(self):
        est = estimate_solvability(gw_for(Table({"Target": [box(5), box(1)]})), PROBLEM, 1024, backend_id="t")
        assert est.k == 1024 and est.to_dict()["avg_at_k"] == 0.5

    def test_all_failed(self):
        with pytest.raises(BackendError):
            estimate_solvability(gw_for(Table({"Target": [BackendError("down", 1)]})), PROBLEM, 4, backend_id="t")

    def test_difficulty_extremes(self):
        assert difficulty(SolvabilityEstimate("q", 64, 64)) == 0
        assert difficulty(SolvabilityEstimate("q", 64, 0)) == 1
