"""Token space shared by every pipeline stage.

Text is modeled at the byte level (ids 0..255). Image tokens, the 16 mask
sentinels and the end-of-document marker occupy disjoint contiguous id
ranges above the byte range. Special tokens have fixed text spellings
(``<mask:0>`` .. ``<mask:15>``, ``<eod>``, ``IMG{k}``) that the encoder
recognizes and the decoder reproduces exactly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

NUM_SENTINELS = 16
TEXT_BASE_SIZE = 256

# Candidate special-token spellings. Matches are validated afterwards so
# that out-of-range or non-canonical spellings are rejected with a position
# instead of silently passing through as text.
_SPECIAL_RE = re.compile(rb"<mask:(\d+)>|<eod>|IMG(\d+)")
_CANONICAL_INT_RE = re.compile(rb"^(?:0|[1-9][0-9]*)$")


class TokenizationError(ValueError):
    """Malformed special-token text or an unknown token id."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Vocab:
    """Immutable token-id layout: [bytes | image tokens | sentinels | eod]."""

    text_base_size: int = TEXT_BASE_SIZE
    image_vocab_size: int = 1024

    def __post_init__(self):
        if self.text_base_size != TEXT_BASE_SIZE:
            raise ValueError("text base vocabulary is byte-level and fixed at 256")
        if self.image_vocab_size < 1:
            raise ValueError("image_vocab_size must be >= 1")

    @property
    def image_offset(self) -> int:
        return self.text_base_size

    @property
    def sentinel_offset(self) -> int:
        return self.text_base_size + self.image_vocab_size

    @property
    def eod_id(self) -> int:
        return self.sentinel_offset + NUM_SENTINELS

    @property
    def total_size(self) -> int:
        return self.eod_id + 1

    def image_id(self, k: int) -> int:
        if not 0 <= k < self.image_vocab_size:
            raise TokenizationError(f"image token index {k} out of range")
        return self.image_offset + k

    def sentinel_id(self, k: int) -> int:
        if not 0 <= k < NUM_SENTINELS:
            raise TokenizationError(f"mask sentinel index {k} out of range")
        return self.sentinel_offset + k

    def is_text(self, token: int) -> bool:
        return 0 <= token < self.text_base_size

    def is_image(self, token: int) -> bool:
        return self.image_offset <= token < self.sentinel_offset

    def is_sentinel(self, token: int) -> bool:
        return self.sentinel_offset <= token < self.eod_id

    def is_special(self, token: int) -> bool:
        return self.sentinel_offset <= token < self.total_size

    def sentinel_index(self, token: int) -> int:
        if not self.is_sentinel(token):
            raise TokenizationError(f"token id {token} is not a mask sentinel")
        return token - self.sentinel_offset

    def image_index(self, token: int) -> int:
        if not self.is_image(token):
            raise TokenizationError(f"token id {token} is not an image token")
        return token - self.image_offset

    def token_class(self, token: int) -> str:
        if self.is_text(token):
            return "text"
        if self.is_image(token):
            return "image"
        if self.is_sentinel(token):
            return "sentinel"
        if token == self.eod_id:
            return "eod"
        raise TokenizationError(f"unknown token id {token}")

    def _match_to_id(self, match: re.Match) -> int:
        text = match.group(0).decode("ascii")
        if match.group(1) is not None:
            digits = match.group(1)
            if not _CANONICAL_INT_RE.match(digits) or int(digits) >= NUM_SENTINELS:
                raise TokenizationError(
                    f"malformed mask sentinel {text!r} at byte {match.start()}",
                    position=match.start(),
                )
            return self.sentinel_id(int(digits))
        if match.group(2) is not None:
            digits = match.group(2)
            if not _CANONICAL_INT_RE.match(digits) or int(digits) >= self.image_vocab_size:
                raise TokenizationError(
                    f"malformed image token {text!r} at byte {match.start()}",
                    position=match.start(),
                )
            return self.image_id(int(digits))
        return self.eod_id

    def encode(self, data: bytes | str) -> list[int]:
        """Encode bytes (or UTF-8 text) into token ids.

        Substrings spelled like special tokens become single ids; anything
        else becomes one id per byte. Non-canonical or out-of-range special
        spellings are rejected with their byte position.
        """
        if isinstance(data, str):
            data = data.encode("utf-8")
        ids: list[int] = []
        pos = 0
        for match in _SPECIAL_RE.finditer(data):
            ids.extend(data[pos:match.start()])
            ids.append(self._match_to_id(match))
            pos = match.end()
        ids.extend(data[pos:])
        return ids

    def decode(self, tokens) -> bytes:
        """Exact inverse of :meth:`encode` on its image."""
        out = bytearray()
        for i, token in enumerate(tokens):
            token = int(token)
            if 0 <= token < self.text_base_size:
                out.append(token)
            elif self.is_image(token):
                out += b"IMG%d" % (token - self.image_offset)
            elif self.is_sentinel(token):
                out += b"<mask:%d>" % (token - self.sentinel_offset)
            elif token == self.eod_id:
                out += b"<eod>"
            else:
                raise TokenizationError(f"unknown token id {token} at position {i}", position=i)
        return bytes(out)

    def decode_text(self, tokens) -> str:
        return self.decode(tokens).decode("utf-8", errors="replace")

    def render_token(self, token: int) -> str:
        """Single-token text spelling (byte tokens render as one latin-1 char)."""
        token = int(token)
        if 0 <= token < self.text_base_size:
            return chr(token)
        return self.decode([token]).decode("ascii")

    def parse_token(self, text: str) -> int:
        """Inverse of :meth:`render_token`."""
        if len(text) == 1 and ord(text) < self.text_base_size:
            return ord(text)
        ids = self.encode(text.encode("latin-1", errors="strict"))
        if len(ids) != 1:
            raise TokenizationError(f"{text!r} is not a single token spelling")
        return ids[0]

    def render_tokens(self, tokens) -> list[str]:
        return [self.render_token(t) for t in tokens]

    def parse_tokens(self, spellings) -> list[int]:
        return [self.parse_token(s) for s in spellings]


DEFAULT_VOCAB = Vocab()
