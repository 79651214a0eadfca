import json

import pytest

from imagent_shim.adapters import (
    StubAdapter,
    bag_from_bytes,
    bag_to_bytes,
    content_words,
)

JUDGE_TEXT = (
    "You are grading how well the attached image matches a prompt.\n\n"
    "prompt: {prompt}\n\nReply on one line.\n"
)


def _bag(*attrs):
    return ("sim-json", bag_to_bytes(attrs))


def test_content_words_drop_function_words():
    assert content_words("add a ribbon to the cat") == {"ribbon", "cat"}
    assert content_words("A Silver CUBE") == {"silver", "cube"}
    assert content_words("of the and") == set()


def test_bag_round_trip_is_canonical():
    data = bag_to_bytes(["silver", "cube", "silver"])
    assert data == b'{"attributes":["cube","silver"]}'
    assert bag_from_bytes(data) == {"cube", "silver"}


def test_bag_from_garbage_is_empty():
    assert bag_from_bytes(b"\xff\xfe") == set()
    assert bag_from_bytes(b"[1,2]") == set()
    assert bag_from_bytes(b'{"attributes": 3}') == set()


def test_generate_is_deterministic_word_bag():
    stub = StubAdapter()
    fmt, data = stub.generate("a silver cube", 42)
    assert fmt == "sim-json"
    assert data == b'{"attributes":["cube","silver"]}'
    assert stub.generate("a silver cube", 42) == (fmt, data)


def test_edit_merges_instruction_words():
    stub = StubAdapter()
    fmt, data = stub.edit("add a ribbon", 43, _bag("cube", "silver"))
    assert (fmt, data) == ("sim-json", b'{"attributes":["cube","ribbon","silver"]}')


def test_judge_all_present():
    stub = StubAdapter()
    reply = stub.understand(
        JUDGE_TEXT.format(prompt="a silver cube"), "judge", [_bag("cube", "silver")]
    )
    assert reply == "Score: 2/2 — all keywords present"


def test_judge_missing_words_sorted():
    stub = StubAdapter()
    reply = stub.understand(
        JUDGE_TEXT.format(prompt="a silver cube with a ribbon"), "judge", [_bag("cube")]
    )
    assert reply == "Score: 1/3 — missing: ribbon, silver"


def test_judge_without_image():
    assert StubAdapter().understand(JUDGE_TEXT.format(prompt="x y"), "judge", []) == (
        "Score: 0 — no image attached"
    )


def test_judge_without_gradable_words():
    reply = StubAdapter().understand(JUDGE_TEXT.format(prompt="of the"), "judge", [_bag("cat")])
    assert reply == "Score: 10 — no gradable keywords"


POLICY_TEXT = (
    "task: generation\nstep: {step} of 5\noriginal prompt: a cat\n\n"
    "Permitted actions:\n{actions}\n"
)


def test_policy_drafts_first_then_stops():
    stub = StubAdapter()
    first = stub.understand(
        POLICY_TEXT.format(
            step=1,
            actions="- naive_generation: draft\n- prompt_enhancement: rewrite",
        ),
        "policy_generation",
        [],
    )
    assert json.loads(first)["action"] == "naive_generation"
    later = stub.understand(
        POLICY_TEXT.format(
            step=2, actions="- naive_generation: draft\n- STOP: end the run"
        ),
        "policy_generation",
        [],
    )
    assert json.loads(later)["action"] == "STOP"


def test_policy_without_stop_keeps_working():
    reply = StubAdapter().understand(
        POLICY_TEXT.format(step=3, actions="- image_detail_refinement: touch up"),
        "policy_editing",
        [],
    )
    assert json.loads(reply)["action"] == "image_detail_refinement"


def test_enhance_appends_detail_once():
    stub = StubAdapter()
    text = "original request: a cat\ncurrent prompt: a cat\n"
    first = stub.understand(text, "enhance", [])
    assert first == "a cat, richly detailed"
    again = stub.understand(f"original request: {first}\n", "enhance", [])
    assert again == first


def test_revise_layout_names_the_gaps():
    reply = StubAdapter().understand(
        "original request: a silver cube\ncurrent prompt: a cube\n",
        "revise",
        [_bag("cube")],
    )
    lines = reply.splitlines()
    assert lines[0] == "IMAGE SUMMARY: shows cube"
    assert lines[1] == "DISCREPANCIES: silver"
    assert lines[2] == "REVISED PROMPT: a silver cube"


def test_refine_instruction_names_missing_words():
    reply = StubAdapter().understand(
        "current prompt: a silver cube with fog\n",
        "refine_instruction",
        [_bag("cube")],
    )
    assert reply == "add fog, silver"


def test_refine_instruction_empty_when_satisfied():
    reply = StubAdapter().understand(
        "current prompt: a cube\n", "refine_instruction", [_bag("cube")]
    )
    assert reply == ""


@pytest.mark.parametrize("template_id", [None, "mystery"])
def test_unknown_templates_get_a_nonempty_reply(template_id):
    assert StubAdapter().understand("hello", template_id, []) != ""
