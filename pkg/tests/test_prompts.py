"""Prompt builders must reproduce their template strings byte for byte."""
import re

import pytest

from cmlm.images import NUM_TOKENS
from cmlm.prompts import (TEMPLATES, PromptError, PromptTemplate,
                          caption_prompts, conditional_image, entity_prompt,
                          entity_target, infill_image, load_templates,
                          summarize_prompt, unconditional_image,
                          validate_rendered)
from cmlm.vocab import DEFAULT_VOCAB

V = DEFAULT_VOCAB


def test_template_registry_loads_and_is_unique():
    templates = load_templates()
    assert templates.keys() == TEMPLATES.keys()
    assert {t.decode_mode for t in templates.values()} <= \
        {"sample", "beam", "score", "size_hint"}


def test_unconditional_image_prompts_are_exact():
    a, b = unconditional_image()
    assert a == '<img'
    assert b == '<img src="'


def test_infill_image_prompt_is_exact():
    prefix = [0, 1, 2]
    postfix = [1021, 7]
    got = infill_image(prefix, postfix)
    assert got == '<img src="IMG0 IMG1 IMG2<mask:0>IMG1021 IMG7"><mask:0>'
    assert infill_image([], []) == '<img src="<mask:0>"><mask:0>'


def test_infill_image_conditional_prompt_is_exact():
    got = infill_image([5], [6], caption="a cat")
    assert got == '<img alt="Photo: a cat" src="IMG5<mask:0>IMG6"><mask:0>'


def test_infill_image_holes_round_trip():
    # hole extraction by parsing the rendered string back out recovers the
    # exact token lists that went in
    prefix = [3, 14, 159]
    postfix = [26, 535]
    got = infill_image(prefix, postfix)
    m = re.fullmatch(r'<img src="(.*)<mask:0>(.*)"><mask:0>', got)
    assert [int(s[3:]) for s in m.group(1).split()] == prefix
    assert [int(s[3:]) for s in m.group(2).split()] == postfix


def test_infill_image_rejects_oversized_budget():
    with pytest.raises(PromptError):
        infill_image(list(range(200)), list(range(56)))
    infill_image(list(range(200)), list(range(55)))  # one slot left is fine


def test_conditional_image_prompt_is_exact():
    got = conditional_image("A red car in the mountains.")
    assert got == '<img alt="A red car in the mountains.'
    assert conditional_image("") == '<img alt="'
    with pytest.raises(PromptError):
        conditional_image('see <mask:0>')


def test_caption_prompts_are_exact_with_alphabetical_attributes():
    tokens = [0] * NUM_TOKENS
    masked, causal = caption_prompts(tokens)
    src = " ".join(["IMG0"] * NUM_TOKENS)
    assert masked == f'<img alt="Photo: A photo taken of<mask:0>" src="{src}">'
    assert causal == f'<img src="{src}" title="Photo: A photo taken of'
    assert masked.count("<mask:0>") == 1
    assert "<mask:" not in causal
    # alt < src < title
    assert masked.index('alt="') < masked.index('src="')
    assert causal.index('src="') < causal.index('title="')


def test_caption_prompts_require_full_token_count():
    with pytest.raises(PromptError):
        caption_prompts([0] * (NUM_TOKENS - 1))
    with pytest.raises(PromptError):
        caption_prompts([0] * (NUM_TOKENS + 1))


def test_entity_prompt_and_target_reproduce_the_worked_example():
    left = "Manetho writes that these kings ruled from "
    prompt = entity_prompt(left, "Memphis", "...")
    assert prompt == ('Manetho writes that these kings ruled from '
                      '<a title="<mask:0>">Memphis</a>...<mask:0>')
    target = entity_target(prompt, "Memphis, Egypt")
    assert target == ('Manetho writes that these kings ruled from '
                      '<a title="<mask:0>">Memphis</a>...<mask:0>'
                      ' Memphis, Egypt')
    assert entity_target(prompt, "") == prompt
    with pytest.raises(PromptError):
        entity_prompt(left, "", "...")


def test_summarize_prompt_is_exact():
    got = summarize_prompt("<p>x</p>")
    assert got == ('<html><head><title><mask:0></title></head>'
                   '<body><p>x</p></body></html><mask:0>')
    assert got.count("<mask:0>") == 2
    empty = summarize_prompt("")
    assert empty == ('<html><head><title><mask:0></title></head>'
                     '<body></body></html><mask:0>')
    with pytest.raises(PromptError):
        summarize_prompt("<p><mask:1></p>")


def test_every_rendered_prompt_re_tokenizes():
    rendered = [
        *unconditional_image(),
        infill_image([1, 2], [3]),
        infill_image([1], [2], caption="a dog"),
        conditional_image("A red car in the mountains."),
        *caption_prompts([0] * NUM_TOKENS),
        entity_prompt("x ", "y", " z"),
        summarize_prompt("<p>hello</p>"),
    ]
    for prompt in rendered:
        ids = validate_rendered(prompt)
        assert V.decode_text(ids) == prompt


def test_rendered_prompts_round_trip_through_token_ids():
    # sentinel spellings inside templates map to real sentinel ids, image
    # spellings to image ids
    prompt = infill_image([4], [5])
    ids = validate_rendered(prompt)
    assert ids.count(V.sentinel_id(0)) == 2
    assert V.image_id(4) in ids and V.image_id(5) in ids


def test_render_reports_missing_hole():
    t = PromptTemplate(name="t", template="{a}/{b}", decode_mode="sample")
    with pytest.raises(PromptError):
        t.render(a="x")
    assert t.render(a="x", b="y") == "x/y"
