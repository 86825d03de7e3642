"""Raw HTML to minimal HTML.

The reduction is a fixed pass pipeline over a DOM tree: drop noise elements
(headers, footers, copyright blocks, forms, iframes, dialogs), drop elements
with no visible text and no image, collapse div-only-child-div chains,
whitelist attributes, serialize with alphabetical attribute order. Every
pass is pure and idempotent on its own output, and the whole pipeline is a
fixpoint on its own output.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

NOISE_TAGS = frozenset({"header", "footer", "form", "iframe", "dialog"})
NOISE_TOKENS = frozenset({"header", "footer", "copyright", "dialog"})

# Text under these tags is code or fallback markup, not document content,
# so it does not count as visible text.
NON_VISIBLE_TEXT_TAGS = frozenset({"script", "style", "noscript"})

# Attributes kept by filter_attributes on any element.
FUNCTIONAL_ATTRS = frozenset({"src", "alt", "title", "href", "class", "id"})
MICRODATA_ATTRS = frozenset({"itemprop", "itemscope", "itemtype"})
STRUCTURED_PREFIXES = ("og:", "twitter:")

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass
class DomNode:
    """Element, text node, or document root.

    Text nodes have tag ``#text`` and carry their payload in ``text``; the
    root has tag ``#root``. Attribute names are unique (first wins).
    """

    tag: str
    attrs: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    text: str = ""

    @classmethod
    def root(cls) -> "DomNode":
        return cls(tag="#root")

    @classmethod
    def text_node(cls, text: str) -> "DomNode":
        return cls(tag="#text", text=text)

    @property
    def is_text(self) -> bool:
        return self.tag == "#text"

    @property
    def is_element(self) -> bool:
        return self.tag not in ("#text", "#root")

    def element_children(self) -> list["DomNode"]:
        return [c for c in self.children if c.is_element]

    def count_elements(self) -> int:
        n = 1 if self.is_element else 0
        return n + sum(c.count_elements() for c in self.children)

    def find_all(self, tag: str) -> list["DomNode"]:
        found = []
        if self.is_element and self.tag == tag:
            found.append(self)
        for c in self.children:
            found.extend(c.find_all(tag))
        return found


def visible_text(node: DomNode) -> str:
    """Concatenated text payload, skipping script/style/noscript subtrees."""
    if node.is_text:
        return node.text
    if node.tag in NON_VISIBLE_TEXT_TAGS:
        return ""
    return "".join(visible_text(c) for c in node.children)


@dataclass
class MinifyReport:
    """Element removals by reason plus fold and attribute-strip counts.

    Removal counts include the removed element's whole subtree, so
    elements_in - elements_out == sum(removed.values()) + folded_divs.
    """

    removed: dict = field(default_factory=dict)
    folded_divs: int = 0
    stripped_attributes: int = 0
    elements_in: int = 0
    elements_out: int = 0

    @property
    def non_textual(self) -> int:
        return self.removed.get("non_textual", 0)

    def count_removed(self, reason: str, node: DomNode):
        self.removed[reason] = self.removed.get(reason, 0) + node.count_elements()

    def to_json(self) -> str:
        return json.dumps({
            "removed": dict(sorted(self.removed.items())),
            "folded_divs": self.folded_divs,
            "stripped_attributes": self.stripped_attributes,
            "elements_in": self.elements_in,
            "elements_out": self.elements_out,
        }, indent=2, sort_keys=False)


class _TreeBuilder(HTMLParser):
    """Tolerant parser: bad markup degrades to text, never raises."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = DomNode.root()
        self.stack = [self.root]

    def _append_text(self, text: str):
        siblings = self.stack[-1].children
        if siblings and siblings[-1].is_text:
            siblings[-1].text += text
        else:
            siblings.append(DomNode.text_node(text))

    def handle_starttag(self, tag, attrs):
        node = DomNode(tag=tag)
        for name, value in attrs:
            if name not in node.attrs:
                node.attrs[name] = value
        self.stack[-1].children.append(node)
        if tag not in VOID_ELEMENTS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        node = DomNode(tag=tag)
        for name, value in attrs:
            if name not in node.attrs:
                node.attrs[name] = value
        self.stack[-1].children.append(node)

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # stray close tag: ignore

    def handle_data(self, data):
        if data:
            self._append_text(data)


def parse_dom(html: bytes | str) -> DomNode:
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.root


def _noise_words(value: str | None) -> set:
    if not value:
        return set()
    return set(_WORD_RE.findall(value.lower()))


def _is_noise(node: DomNode) -> str | None:
    if node.tag in NOISE_TAGS:
        return f"tag:{node.tag}"
    words = _noise_words(node.attrs.get("class")) | _noise_words(node.attrs.get("id"))
    if words & NOISE_TOKENS:
        return "class_or_id"
    return None


def remove_noise(node: DomNode, report: MinifyReport | None = None) -> DomNode:
    """Drop boilerplate elements by tag or by class/id word match.

    Class and id values are split into lowercase words on non-alphanumeric
    boundaries; a word equal to one of header/footer/copyright/dialog marks
    the element (so "site-copyright" matches but "preformatted" does not).
    """
    kept = []
    for child in node.children:
        if child.is_element:
            reason = _is_noise(child)
            if reason is not None:
                if report is not None:
                    report.count_removed(reason, child)
                continue
            remove_noise(child, report)
        kept.append(child)
    node.children = kept
    return node


def _keeps_subtree(node: DomNode) -> bool:
    if node.tag == "img":
        return True
    if visible_text(node).strip():
        return True
    return any(_keeps_subtree(c) for c in node.element_children())


def strip_non_textual(node: DomNode, report: MinifyReport | None = None) -> DomNode:
    """Drop elements whose subtree has no visible text and no img."""
    kept = []
    for child in node.children:
        if child.is_element and not _keeps_subtree(child):
            if report is not None:
                report.count_removed("non_textual", child)
            continue
        if child.is_element and child.tag != "img":
            strip_non_textual(child, report)
        kept.append(child)
    node.children = kept
    return node


def _class_union(outer: str | None, inner: str | None) -> str | None:
    tokens = []
    for value in (outer, inner):
        for tok in (value or "").split():
            if tok not in tokens:
                tokens.append(tok)
    return " ".join(tokens) if tokens else None


def fold_divs(node: DomNode, report: MinifyReport | None = None) -> DomNode:
    """Collapse a div whose only element child is a div into one div.

    The inner node is spliced into the outer's child list and attributes
    merge with the outer value winning, except class lists which union.
    Runs to fixpoint.
    """
    while node.tag == "div":
        elems = node.element_children()
        if len(elems) != 1 or elems[0].tag != "div":
            break
        inner = elems[0]
        merged = dict(node.attrs)
        for name, value in inner.attrs.items():
            if name == "class":
                union = _class_union(node.attrs.get("class"), value)
                if union is not None:
                    merged["class"] = union
            elif name not in merged:
                merged[name] = value
        node.attrs = merged
        i = node.children.index(inner)
        node.children[i:i + 1] = inner.children
        if report is not None:
            report.folded_divs += 1
    for child in node.children:
        if child.is_element:
            fold_divs(child, report)
    return node


def _attr_allowed(tag: str, name: str) -> bool:
    if name in FUNCTIONAL_ATTRS or name in MICRODATA_ATTRS:
        return True
    if name.startswith(STRUCTURED_PREFIXES):
        return True
    if tag == "meta" and name in ("property", "content"):
        return True
    return False


def filter_attributes(node: DomNode, report: MinifyReport | None = None) -> DomNode:
    if node.is_element:
        kept = {n: v for n, v in node.attrs.items() if _attr_allowed(node.tag, n)}
        if report is not None:
            report.stripped_attributes += len(node.attrs) - len(kept)
        node.attrs = kept
    for child in node.children:
        filter_attributes(child, report)
    return node


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return _escape_text(value).replace('"', "&quot;")


def serialize(node: DomNode) -> str:
    if node.is_text:
        return _escape_text(node.text)
    inner = "".join(serialize(c) for c in node.children)
    if node.tag == "#root":
        return inner
    parts = [node.tag]
    for name in sorted(node.attrs):
        value = node.attrs[name]
        if value is None:
            parts.append(name)
        else:
            parts.append(f'{name}="{_escape_attr(value)}"')
    open_tag = f"<{' '.join(parts)}>"
    if node.tag in VOID_ELEMENTS:
        return open_tag
    return f"{open_tag}{inner}</{node.tag}>"


def minify(html: bytes | str) -> tuple[str, MinifyReport]:
    report = MinifyReport()
    dom = parse_dom(html)
    report.elements_in = dom.count_elements()
    remove_noise(dom, report)
    strip_non_textual(dom, report)
    fold_divs(dom, report)
    filter_attributes(dom, report)
    report.elements_out = dom.count_elements()
    return serialize(dom), report
