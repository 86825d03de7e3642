"""Prompt templates for zero-shot use of a trained model.

Templates live in data/prompts.json (name, template text, decode mode) so
new prompts can be added without code changes; the builders below fill the
holes and enforce each template's preconditions. Rendered prompts are
byte-exact contracts relied on by the tests.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .images import NUM_TOKENS, render_src
from .vocab import Vocab, DEFAULT_VOCAB


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    template: str
    decode_mode: str

    def render(self, **holes) -> str:
        try:
            return self.template.format(**holes)
        except (KeyError, IndexError) as e:
            raise PromptError(f"{self.name}: missing hole {e}") from e


def load_templates() -> dict[str, PromptTemplate]:
    raw = resources.files("cmlm.data").joinpath("prompts.json").read_text("utf-8")
    templates = {}
    for obj in json.loads(raw):
        t = PromptTemplate(**obj)
        if t.name in templates:
            raise PromptError(f"duplicate template name {t.name}")
        templates[t.name] = t
    return templates


TEMPLATES = load_templates()


def _image_hole(tokens) -> str:
    return render_src(tokens)


def unconditional_image() -> tuple[str, str]:
    """Both unconditional generation prompts (bare tag, bare src)."""
    return (TEMPLATES["unconditional_image_a"].template,
            TEMPLATES["unconditional_image_b"].template)


def infill_image(prefix_tokens, postfix_tokens, caption: str | None = None) -> str:
    """Image infilling prompt; the trailing <mask:0> cues tail generation."""
    prefix = list(prefix_tokens)
    postfix = list(postfix_tokens)
    if len(prefix) + len(postfix) >= NUM_TOKENS:
        raise PromptError(
            f"prefix + postfix holds {len(prefix) + len(postfix)} tokens, "
            f"leaving no room to infill within {NUM_TOKENS}")
    holes = {
        "prefix": " ".join(f"IMG{int(t)}" for t in prefix),
        "postfix": " ".join(f"IMG{int(t)}" for t in postfix),
    }
    if caption is None:
        return TEMPLATES["infill_image"].render(**holes)
    return TEMPLATES["infill_image_conditional"].render(text=caption, **holes)


def conditional_image(text: str) -> str:
    """Open alt-attribute prompt conditioning image generation on text."""
    if "<mask:" in text:
        raise PromptError("conditioning text must not contain sentinels")
    return TEMPLATES["conditional_image"].render(prompt=text)


def caption_prompts(image_tokens) -> tuple[str, str]:
    """(masked, causal) captioning prompts for one tokenized image.

    Attribute order is alphabetical in both: alt before src before title.
    """
    tokens = list(image_tokens)
    if len(tokens) != NUM_TOKENS:
        raise PromptError(f"expected {NUM_TOKENS} image tokens, got {len(tokens)}")
    image = _image_hole(tokens)
    return (TEMPLATES["caption_masked"].render(image=image),
            TEMPLATES["caption_causal"].render(image=image))


def entity_prompt(left: str, mention: str, right: str) -> str:
    """Entity disambiguation context: the mention's title attribute is
    masked and the trailing <mask:0> cues the tail."""
    if not mention:
        raise PromptError("mention must be non-empty")
    return TEMPLATES["entity"].render(left=left, mention=mention, right=right)


def entity_target(prompt: str, candidate: str) -> str:
    """Scored sequence for one candidate: the tail span after <mask:0>.

    An empty candidate scores the bare prompt (ends at the sentinel).
    """
    if not candidate:
        return prompt
    return prompt + " " + candidate


def summarize_prompt(article_html: str) -> str:
    """Title-infilling wrapper around a minimal-HTML article body."""
    if "<mask:" in article_html:
        raise PromptError("article must not contain sentinels")
    return TEMPLATES["summarize"].render(article=article_html)


def validate_rendered(prompt: str, vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
    """Every rendered prompt must re-tokenize cleanly; returns the ids."""
    return vocab.encode(prompt.encode("utf-8"))
