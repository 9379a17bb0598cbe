import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbu.errors import ParseError, ScoreRangeError
from cbu.verdicts import (extract_boxed, normalize, parse_error_audit, parse_judge_score, parse_scalar_score,
                          verify_answer, verify_completion)


class TestExtract:
    def test_found(self):
        p = extract_boxed("so the answer is \\boxed{35}.")
        assert p.found and p.canonical == "35"

    def test_absent(self):
        assert not extract_boxed("no box here").found

    def test_last_wins(self):
        assert extract_boxed("\\boxed{12} then later \\boxed{34}").canonical == "34"

    def test_nested_braces(self):
        assert extract_boxed("\\boxed{\\frac{1}{2}}").raw_span == "\\frac{1}{2}"

    def test_unbalanced_last_falls_back(self):
        assert extract_boxed("\\boxed{7} and \\boxed{8").canonical == "7"

    def test_escaped_braces(self):
        assert extract_boxed("\\boxed{\\{1,2\\}}").raw_span == "\\{1,2\\}"


class TestNormalize:
    @pytest.mark.parametrize("raw, canon", [
        (" 035", "35"), ("$35$", "35"), ("1,234", "1234"), ("1{,}234", "1234"), ("1\\,234", "1234"),
        ("-0", "0"), ("+12", "12"), ("3.50", "3.50"), ("1,23", "1,23"),
    ])
    def test_forms(self, raw, canon):
        assert normalize(raw) == canon


class TestVerify:
    def test_identity(self):
        assert verify_answer(extract_boxed("\\boxed{35}"), "35") == 1

    def test_normalized(self):
        assert verify_answer(extract_boxed("\\boxed{ 035}"), "35") == 1

    def test_absent_scores_zero(self):
        assert verify_answer(extract_boxed("nothing"), "35") == 0

    def test_empty_gold_rejected(self):
        with pytest.raises(ValueError):
            verify_completion("\\boxed{1}", "")


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="\\boxed{}ab1 ", max_size=60))
def test_extract_never_raises(s):
    p = extract_boxed(s)
    assert p.found or p.raw_span == ""


@settings(max_examples=200, deadline=None)
@given(st.from_regex(r"\s?[0-9]{1,6}\s?", fullmatch=True), st.from_regex(r"\s?[0-9]{1,6}\s?", fullmatch=True))
def test_verify_symmetric(a, b):
    assert verify_completion(f"\\boxed{{{a}}}", b) == verify_completion(f"\\boxed{{{b}}}", a)


class TestJudge:
    def test_ten_point(self):
        assert parse_judge_score("Summary...\nScore: 8", "ten_point").value == 8

    def test_out_of_range(self):
        with pytest.raises(ScoreRangeError):
            parse_judge_score("Score: 11", "ten_point")

    def test_last_wins(self):
        assert parse_judge_score("Score: 3 ... Score: 7", "ten_point").value == 7

    def test_missing(self):
        with pytest.raises(ParseError):
            parse_judge_score("I cannot decide", "ten_point")

    def test_non_integer(self):
        with pytest.raises(ParseError):
            parse_judge_score("Score: 7.5", "ten_point")

    def test_proofgrader(self):
        assert parse_judge_score("<score>0</score> then <score>6</score>", "proofgrader").value == 6
        with pytest.raises(ScoreRangeError):
            parse_judge_score("<score>8</score>", "proofgrader")

    def test_uq(self):
        assert parse_judge_score("Accepted: [[Y]]", "uq_binary").value == 1
        assert parse_judge_score("[[Y]] hmm, no: Accepted: [[N]]", "uq_binary").value == 0

    def test_scalar_adapter(self):
        assert parse_scalar_score("reward score = 0.75", (0, 1)) == 0.75
        assert parse_scalar_score("R: 3", (0, 5), pattern=r"R:\s*(\d+)") == 3.0
        with pytest.raises(ScoreRangeError):
            parse_scalar_score("score: 2", (0, 1))


class TestAudit:
    def test_empty(self):
        assert parse_error_audit('{"categories": []}') == []

    def test_one_category_two_quotes(self):
        payload = {"categories": [{"id": 4, "name": "Wrong Final Answer", "evidence": [
            {"quote": "x = 3", "analysis": {"expected": "x = 4"}},
            {"quote": "so 9", "analysis": {}},
        ]}]}
        cats = parse_error_audit(json.dumps(payload), solution_text="hence x = 3 and so 8")
        assert len(cats) == 1 and cats[0].id == 4 and len(cats[0].evidence) == 2
        assert cats[0].documented
        assert cats[0].evidence_violations == ["so 9"]

    def test_truncated(self):
        with pytest.raises(ParseError):
            parse_error_audit('{"categories": [{"id": 1')

    def test_fenced(self):
        assert parse_error_audit('```json\n{"categories": []}\n```') == []

    def test_undocumented_ids_flagged(self):
        cats = parse_error_audit('{"categories": [{"id": 6, "evidence": []}]}')
        assert not cats[0].documented

    def test_bad_id(self):
        with pytest.raises(ParseError):
            parse_error_audit('{"categories": [{"id": 9}]}')
