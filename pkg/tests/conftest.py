import json

import pytest

from alrkit.grammar import AlrResponse, render_alr
from alrkit.rewards import GroundTruth

WORKED_EXAMPLE = """<think>
\\boxed{Question Analysis}
The user asks for bracketed text in paragraph 2 on page 5 that is
also bolded.
\\boxed{Evidence Localization}
Page 5 contains bracketed text but no bolded text.
\\boxed{Reasoning Process}
No text meets all required conditions; therefore the question cannot
be answered.
</think>
<answer>
{"evidence_pages": [5], "answer": "Not answerable"}
</answer>
"""


def rollout(pages, answer, analysis="a", localization="l", reasoning="r") -> str:
    """A well-formed response text with the given citation and answer."""
    return render_alr(AlrResponse(analysis, localization, reasoning, tuple(pages), answer))


def breakdown_corpus(full_hit, full_miss, partial_hit, partial_miss):
    """EvalRecords landing in each recall x accuracy cell."""
    from alrkit.evaluation import EvalRecord

    gt = GroundTruth(("forty two",), frozenset({3, 4}))
    out = []
    cells = [((3, 4), True, full_hit), ((3, 4), False, full_miss),
            ((3, 9), True, partial_hit), ((9,), False, partial_miss)]
    for pages, hit, n in cells:
        for i in range(n):
            ans = "forty two" if hit else "zzz"
            out.append(EvalRecord(f"s{len(out)}", ans, frozenset(pages), gt, 12))
    return out


@pytest.fixture
def worked_example():
    return WORKED_EXAMPLE


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return str(path)


def distill_fixture(n_em=14, n_corrected=3, n_rejected=3, prompt_kind="alr"):
    """Task rows plus stub teacher/judge clients engineered to give exactly
    ``(n_em, 0, n_corrected, n_rejected)``. Rejections cycle through malformed
    output, a judge ``Error`` and a wrong evidence citation."""
    from alrkit.distill import StubClient

    rows, replies, judged = [], {}, {}
    kinds = ["em"] * n_em + ["fix"] * n_corrected + ["rej"] * n_rejected
    for i, kind in enumerate(kinds):
        question = f"Q{i}: when was form {i} approved?"
        gold = f"2001-07-{10 + i:02d}"
        rows.append({"sample_id": f"t{i}", "question": question, "doc_id": f"d{i}",
                     "doc_num_pages": 12, "answers": [gold], "evidence_pages": [3 + i % 5],
                     "page_paths": [f"/data/d{i}/p{p}.png" for p in range(1, 13)]})
        pages = [3 + i % 5]
        if kind == "em":
            replies[question] = rollout(pages, gold.upper() + ".")
        elif kind == "fix":
            replies[question] = rollout(pages, gold.replace("-", "/"))
            judged[question] = f"output:\n{gold}"
        else:
            flavour = i % 3
            if flavour == 0:
                replies[question] = "I think the answer is " + gold
            elif flavour == 1:
                replies[question] = rollout(pages, "1999-01-01")
                judged[question] = "Error"
            else:
                replies[question] = rollout([p + 1 for p in pages], gold)

    def teacher(messages):
        text = messages[1]["content"][-1]["text"]
        return replies[text.split("\n")[0][len("Question: "):]]

    def judge(messages):
        body = messages[0]["content"]
        question = body.split("\nQuestion:\n")[-1].split("\nResponse:\n")[0]
        return judged[question]

    return rows, StubClient(teacher), StubClient(judge)


# Acceptance criteria report: test_acceptance appends (label, passed, seconds, detail)
# and the lines are repeated in the terminal summary so they survive output capture.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, seconds, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label} ({seconds:.2f}s) {detail}")
