import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbu import templates
from cbu.errors import ConfigError, RenderError


def test_cbu_render():
    out = templates.render(templates.load("cbu"), {
        "original question": "Q1?", "candidate solution": "S1.", "variant question": "Q2?",
    })
    head, _, tail = out.partition("Refer to the question-solution set provided above.")
    assert tail, "anchor sentence missing"
    assert "Q2?" in tail and "Q1?" in head and "S1." in head
    assert templates.BOXED_LITERAL in out


def test_judge_default_ends_with_blocks():
    out = templates.render(templates.load("judge_default"), {"original question": "QQ", "candidate solution": "SS"})
    assert "Score: <integer from 1 to 10>" in out
    assert out.rstrip().endswith("SS")
    assert out.index("QQ") < out.index("SS")


def test_empty_candidate_rejected():
    with pytest.raises(RenderError):
        templates.render(templates.load("cbu"), {"original question": "Q", "candidate solution": "",
                                                 "variant question": "V"})


def test_unknown_and_missing_bindings():
    tpl = templates.load("judge_default")
    with pytest.raises(RenderError, match="no placeholder"):
        templates.render(tpl, {"original question": "Q", "candidate solution": "S", "variant question": "V"})
    with pytest.raises(RenderError, match="missing"):
        templates.render(tpl, {"original question": "Q"})


def test_unknown_template():
    with pytest.raises(ConfigError):
        templates.load("nope")


def test_latex_braces_survive():
    out = templates.render(templates.load("judge_default"),
                           {"original question": "Find $\\frac{a}{b}$ with {x}", "candidate solution": "{{y}}"})
    assert "$\\frac{a}{b}$ with {x}" in out and "{{y}}" in out


@pytest.mark.parametrize("tid", templates.TEMPLATE_IDS)
def test_goldens(tid):
    assert templates.golden_check(templates.load(tid), templates.golden_path(tid))


def test_altered_template_fails_golden():
    tpl = templates.load("cbu")
    altered = templates.Template(tpl.id, tpl.body.replace("above", "ab0ve", 1))
    assert not templates.golden_check(altered, templates.golden_path("cbu"))


def test_missing_golden(tmp_path):
    with pytest.raises(ConfigError):
        templates.golden_check(templates.load("cbu"), tmp_path / "none.txt")


def test_digests_are_stable():
    d = templates.shipped_digests()
    assert set(d) == set(templates.TEMPLATE_IDS)
    assert d == templates.shipped_digests()


text = st.text(alphabet=st.characters(blacklist_characters="{}", blacklist_categories=("Cs",)), min_size=1, max_size=30)


@settings(max_examples=100, deadline=None)
@given(text, text, text, text)
def test_render_injective(q1, s1, q2, s2):
    tpl = templates.load("judge_default")
    a = templates.render(tpl, {"original question": q1, "candidate solution": s1})
    b = templates.render(tpl, {"original question": q2, "candidate solution": s2})
    assert (a == b) == ((q1, s1) == (q2, s2))
