import json
from fractions import Fraction
from pathlib import Path

import jsonschema
import pytest

import cbu
import oracles
from cbu.model import Candidate, Problem, ScoreRecord, pools_from_candidates
from cbu.report import build_report, method_key
from cbu.store import export_report

SCHEMAS = Path(cbu.__file__).parent / "schemas"


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def dataset():
    problems = [Problem("p1", "s", "1", "g1"), Problem("p2", "s", "1", "g1"), Problem("p3", "s", "1", "g2")]
    cands, recs = [], []
    layout = {
        "p1": [(0.9, "correct"), (0.5, "wrong"), (0.5, "correct"), (0.1, "wrong"), (0.8, "correct", "human")],
        "p2": [(0.2, "correct"), (0.6, "wrong"), (0.6, "wrong")],
        "p3": [(0.4, "correct"), (0.4, "wrong"), (0.7, "correct"), (0.3, "correct", "human")],
    }
    for pid, items in layout.items():
        for i, item in enumerate(items):
            source = "human" if len(item) == 3 else "llm"
            cands.append(Candidate(f"{pid}-{i}", pid, "text", source, item[1]))
            recs.append(ScoreRecord(f"{pid}-{i}", "cbu", item[0], 8))
    return problems, cands, recs


def oracle_entries(cands, recs, pid):
    val = {r.candidate_id: Fraction(r.value) for r in recs}
    return [(val[c.id], c.label == "correct", c.is_human) for c in cands if c.problem_id == pid]


def test_report_matches_oracles():
    problems, cands, recs = dataset()
    rep = build_report(problems, pools_from_candidates(cands), recs)
    sec = rep.methods["cbu"]
    per_q = {}
    for p in problems:
        e = oracle_entries(cands, recs, p.id)
        per_q[p.id] = {"acc_at_1": oracles.acc_at_1(e), "auc": oracles.auc(e), "mean_win": oracles.mean_win(e)}
        for name, v in per_q[p.id].items():
            assert sec.per_question[p.id][name] == v, (p.id, name)
    for name in ("acc_at_1", "auc", "mean_win"):
        g1 = (per_q["p1"][name] + per_q["p2"][name]) / 2
        assert sec.aggregate[name] == (g1 + per_q["p3"][name]) / 2
    # human_win exists only where a human is present
    assert sec.per_question["p2"]["human_win"] is None
    assert sec.aggregate.counts["human_win"] == 2


def test_report_json_schema_and_nulls(tmp_path):
    problems, cands, recs = dataset()
    rep = build_report(problems, pools_from_candidates(cands), recs, difficulties={"p1": 0.1, "p2": 0.9, "p3": 0.5})
    path = export_report(rep, tmp_path / "r.json")
    data = json.loads(path.read_text())
    jsonschema.validate(data, schema("report"))
    hw = data["methods"]["cbu"]["per_question"]["p2"]["human_win"]
    assert hw["value"] is None and hw["reason"]
    assert set(data["methods"]["cbu"]["aggregate"]) == {"acc_at_1", "recall_at_5", "auc", "human_win", "mean_win"}
    assert data["analyses"]["score_gap_by_difficulty"]["cbu"]["empty_bins"]


def test_empty_report_is_schema_valid(tmp_path):
    rep = build_report([], {}, [])
    jsonschema.validate(json.loads(export_report(rep, tmp_path / "r.json").read_text()), schema("report"))


def test_missing_scores_listed():
    problems, cands, recs = dataset()
    rep = build_report(problems, pools_from_candidates(cands), recs[1:])
    assert rep.methods["cbu"].missing == ["p1-0"]


def test_methods_split_by_scheme():
    recs = [ScoreRecord("a", "judge", 5, 1, {"scheme": "proofgrader"}, (0.0, 7.0)), ScoreRecord("a", "cbu", 0.5, 1)]
    assert [method_key(r) for r in recs] == ["judge:proofgrader", "cbu"]


def test_above_average_table():
    problems, cands, recs = dataset()
    rep = build_report(problems, pools_from_candidates(cands), recs)
    table = rep.analyses["above_average"]["cbu"]
    assert set(table) == {"correct_llm", "correct_human", "wrong"}
    # p1 mean = 0.56: human 0.8 above; p3 mean = 0.45: human 0.3 not above
    assert table["correct_human"] == pytest.approx(0.5)
