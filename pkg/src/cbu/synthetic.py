"""Synthetic labeled datasets and a matching mock script.

Correct candidates carry a marker string; the mock solver succeeds on a
neighborhood question with probability ``p_correct`` when the marker is in
the prompt and ``p_wrong`` otherwise.
"""

from __future__ import annotations

from .gateway import MockRule, MockScript
from .model import Candidate, NeighborhoodQuestion, Problem

MARKER = "SOUND-METHOD"
GOLD = "1234"


def make_dataset(n_problems: int = 40, n_neighborhoods: int = 2, n_correct: int = 4, n_wrong: int = 5,
                 human: bool = False, variants_per_group: int = 2):
    problems, candidates = [], []
    for i in range(n_problems):
        pid = f"p{i:03d}"
        hoods = tuple(
            NeighborhoodQuestion(f"{pid}-n{j}", f"Neighborhood question {j} of problem {i}.", GOLD)
            for j in range(n_neighborhoods)
        )
        problems.append(Problem(pid, f"Target question {i}.", GOLD, f"g{i // variants_per_group:03d}", hoods))
        for j in range(n_correct):
            candidates.append(Candidate(f"{pid}-c{j}", pid, f"Solution {j}. {MARKER} applies; answer {2000 + i}.",
                                        "llm", "correct"))
        for j in range(n_wrong):
            candidates.append(Candidate(f"{pid}-w{j}", pid, f"Solution {j}. A plausible shortcut; answer {i}.",
                                        "llm", "wrong"))
        if human:
            candidates.append(Candidate(f"{pid}-h", pid, f"Expert solution. {MARKER} applies; answer {2000 + i}.",
                                        "human", "correct"))
    return problems, candidates


def make_script(p_correct: float = 0.85, p_wrong: float = 0.15, seed: int = 0,
                judge_correct: float = 0.7, judge_wrong: float = 0.4, bare: float = 0.3) -> MockScript:
    right, wrong = f"Working through the variant... \\boxed{{{GOLD}}}", "Working through the variant... \\boxed{7}"
    rules = [
        MockRule("mathematical reasoning auditor", 1.0, '{ "categories": [] }', '{ "categories": [] }'),
        MockRule(f"(?s)impartial mathematical judge.*{MARKER}", judge_correct, "Summary: ok\n\nScore: 8",
                 "Summary: gaps\n\nScore: 4"),
        MockRule("impartial mathematical judge", judge_wrong, "Summary: ok\n\nScore: 8", "Summary: gaps\n\nScore: 4"),
        MockRule(f"(?s)proof grader.*{MARKER}", judge_correct, "<score>6</score>", "<score>2</score>"),
        MockRule("proof grader", judge_wrong, "<score>6</score>", "<score>2</score>"),
        MockRule(f"(?s)Accepted: \\[\\[Y\\]\\].*{MARKER}", judge_correct, "Accepted: [[Y]]", "Accepted: [[N]]"),
        MockRule("Accepted: \\[\\[Y\\]\\]", judge_wrong, "Accepted: [[Y]]", "Accepted: [[N]]"),
        MockRule("Solve the question above", bare, right, wrong),
        MockRule(MARKER, p_correct, right, wrong),
        MockRule("", p_wrong, right, wrong),
    ]
    return MockScript(tuple(rules), seed)
