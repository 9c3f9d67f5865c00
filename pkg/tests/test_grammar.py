import json
import string
import threading

import pytest
from hypothesis import given, settings, strategies as st

from alrkit.grammar import AlrResponse, HEADINGS, parse_alr, parse_vanilla, render_alr

from conftest import WORKED_EXAMPLE, rollout


def test_worked_example_parses():
    out = parse_alr(WORKED_EXAMPLE)
    assert out.ok and out.diagnostics == ()
    assert out.response.evidence_pages == (5,)
    assert out.response.final_answer == "Not answerable"
    assert out.response.localization == "Page 5 contains bracketed text but no bolded text."


def test_missing_heading_is_named():
    raw = WORKED_EXAMPLE.replace("\\boxed{Evidence Localization}\n", "")
    out = parse_alr(raw)
    assert out.status == "malformed" and out.response is None
    assert "Evidence Localization" in out.diagnostics[0].message


def test_duplicate_page():
    raw = rollout([1], "x").replace('"evidence_pages": [1]', '"evidence_pages": [3, 3]')
    out = parse_alr(raw)
    assert not out.ok
    assert "duplicate page" in out.diagnostics[0].message


@pytest.mark.parametrize("old,new,needle", [
    ("<think>", "", "missing <think>"),
    ("</answer>", "", "missing </answer>"),
    ('"answer": "Not answerable"}', '"answer": "Not answerable"', "bad JSON"),
    ('"answer"', '"final"', "wrong key set"),
    ("[5]", "[5.0]", "non-integer page"),
    ("[5]", "[0]", "page < 1"),
    ("[5]", '["5"]', "non-integer page"),
    ("[5]", "[true]", "non-integer page"),
    ('"Not answerable"', "7", "answer is not a string"),
    ("[5]", "5", "evidence_pages is not an array"),
])
def test_defects(old, new, needle):
    out = parse_alr(WORKED_EXAMPLE.replace(old, new, 1))
    assert out.status == "malformed"
    assert needle in out.diagnostics[0].message


def test_heading_order_and_duplicates():
    swapped = (WORKED_EXAMPLE.replace("Question Analysis", "TMP")
               .replace("Evidence Localization", "Question Analysis").replace("TMP", "Evidence Localization"))
    assert "out of order" in parse_alr(swapped).diagnostics[0].message
    dup = WORKED_EXAMPLE.replace("</think>", "\\boxed{Reasoning Process}\nmore\n</think>")
    assert "duplicate heading" in parse_alr(dup).diagnostics[0].message
    extra = WORKED_EXAMPLE.replace("</think>", "\\boxed{42}\n</think>")
    assert "unexpected heading" in parse_alr(extra).diagnostics[0].message


def test_headings_case_sensitive_but_trimmed():
    assert not parse_alr(WORKED_EXAMPLE.replace("Question Analysis", "question analysis")).ok
    assert parse_alr(WORKED_EXAMPLE.replace("{Question Analysis}", "{  Question Analysis \t}")).ok


def test_duplicate_json_key_and_extra_json():
    dup = WORKED_EXAMPLE.replace('{"evidence_pages": [5],', '{"evidence_pages": [5], "evidence_pages": [5],')
    assert "duplicate JSON key" in parse_alr(dup).diagnostics[0].message
    extra = WORKED_EXAMPLE.replace('answerable"}', 'answerable"} {}')
    assert "extra content" in parse_alr(extra).diagnostics[0].message


def test_trailing_text_strict_and_lenient():
    assert parse_alr(WORKED_EXAMPLE + "\n\n  ").ok
    tailed = WORKED_EXAMPLE + "thanks!"
    out = parse_alr(tailed)
    assert not out.ok and "trailing text" in out.diagnostics[0].message
    assert out.diagnostics[0].offset == len(WORKED_EXAMPLE)
    assert parse_alr(tailed, strict=False).ok
    assert not parse_alr(WORKED_EXAMPLE + "<answer>{}</answer>").ok


def test_empty_and_non_text():
    assert not parse_alr("").ok
    assert not parse_alr(None).ok


def test_render_canonical_form():
    text = render_alr(AlrResponse("", "", "", (1,), "a"))
    for h in HEADINGS:
        assert f"\\boxed{{{h}}}" in text
    assert '{"evidence_pages": [1], "answer": "a"}' in text
    assert '"evidence_pages": [2, 7]' in render_alr(AlrResponse("x", "y", "z", (7, 2), "b"))


def test_render_rejects_invalid():
    with pytest.raises(ValueError):
        AlrResponse("", "", "", (2, 2), "a")
    with pytest.raises(ValueError):
        AlrResponse("", "", "", (0,), "a")
    with pytest.raises(ValueError):
        render_alr(AlrResponse("see </think>", "", "", (1,), "a"))


def test_worked_example_round_trip():
    r = parse_alr(WORKED_EXAMPLE).response
    assert parse_alr(render_alr(r)).response == r


section = st.text(alphabet=string.ascii_letters + string.digits + " \n.,;:()[]'\"-", max_size=60).map(str.strip)
responses = st.builds(
    AlrResponse, section, section, section,
    st.sets(st.integers(1, 500), max_size=8).map(tuple),
    st.text(max_size=30).map(str.strip),
)


@settings(max_examples=300, deadline=None)
@given(responses)
def test_round_trip_property(r):
    back = parse_alr(render_alr(r)).response
    assert back is not None
    assert (back.analysis, back.localization, back.reasoning, back.final_answer) == \
        (r.analysis, r.localization, r.reasoning, r.final_answer)
    assert set(back.evidence_pages) == set(r.evidence_pages)


STRUCTURAL = ["<think>", "</think>", "<answer>", "</answer>",
              "\\boxed{Question Analysis}", "\\boxed{Evidence Localization}", "\\boxed{Reasoning Process}"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([" ", "\n", "\t", "\r\n", "  \n "]), min_size=len(STRUCTURAL) * 2,
                max_size=len(STRUCTURAL) * 2))
def test_whitespace_between_tokens_never_breaks(pads):
    text = WORKED_EXAMPLE
    for i, tok in enumerate(STRUCTURAL):
        text = text.replace(tok, pads[2 * i] + tok + pads[2 * i + 1])
    assert parse_alr(text).ok


def test_concurrent_parsing_is_consistent():
    results = []

    def work():
        results.append([parse_alr(WORKED_EXAMPLE).response for _ in range(200)])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == results[0][0] for batch in results for r in batch)


def test_vanilla_parse():
    out = parse_vanilla("<think>\nLet's think step by step. ...\n</think>\n<answer>\n1916-02-17\n</answer>")
    assert out.ok and out.response.final_answer == "1916-02-17"
    assert out.response.evidence_pages == ()
    assert not parse_vanilla("<answer>x</answer>").ok


def test_outcome_json_shape():
    d = parse_alr("nope").to_dict()
    json.dumps(d)
    assert d["status"] == "malformed" and d["response"] is None and d["diagnostics"][0]["offset"] >= 0


def test_answer_containing_tags_round_trips():
    r = AlrResponse("a", "l", "r", (1,), "literally </answer> and <think>")
    text = render_alr(r)
    assert text.count("</answer>") == 1
    assert parse_alr(text).response == r
