"""Annotated document model shared by every pipeline stage."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple


def normalize_form(form: str) -> str:
    return form.lower()


class MorphFeats:
    """An ordered set of ``Key=Value`` morphological attributes.

    Keys are unique. The canonical string sorts keys case-insensitively and
    joins them with ``|``; the empty bundle renders as ``_``.
    """

    __slots__ = ("_pairs",)

    def __init__(self, pairs: Iterable[Tuple[str, str]] = ()):
        mapping = {}
        for key, value in pairs:
            if key in mapping:
                raise ValueError(f"duplicate feature key {key!r}")
            mapping[key] = value
        self._pairs = tuple(sorted(mapping.items(), key=lambda kv: (kv[0].lower(), kv[0])))

    @classmethod
    def parse(cls, text: str) -> "MorphFeats":
        if text in ("", "_"):
            return cls()
        pairs = []
        for item in text.split("|"):
            key, sep, value = item.partition("=")
            if not sep or not key:
                raise ValueError(f"malformed feature {item!r}")
            pairs.append((key, value))
        return cls(pairs)

    @property
    def pairs(self) -> Tuple[Tuple[str, str], ...]:
        return self._pairs

    def __str__(self) -> str:
        if not self._pairs:
            return "_"
        return "|".join(f"{k}={v}" for k, v in self._pairs)

    def __repr__(self) -> str:
        return f"MorphFeats({str(self)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, MorphFeats) and self._pairs == other._pairs

    def __hash__(self) -> int:
        return hash(self._pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def get(self, key: str, default=None):
        return dict(self._pairs).get(key, default)


@dataclass
class Token:
    form: str
    char_start: int
    char_end: int
    is_sent_start: Optional[bool] = None
    upos: Optional[str] = None
    feats: Optional[MorphFeats] = None
    lemma: Optional[str] = None
    head: Optional[int] = None
    deprel: Optional[str] = None
    # CoNLL-U columns carried through untouched.
    xpos: Optional[str] = None
    deps: Optional[str] = None
    misc: Optional[str] = None

    @property
    def norm(self) -> str:
        return normalize_form(self.form)


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")


class DocError(ValueError):
    pass


@dataclass
class Doc:
    """Token sequence over a text with optional layered annotations.

    ``ents`` is ``None`` when the document carries no entity annotation at
    all, which is different from an annotated document with zero entities.
    """

    text: str
    tokens: List[Token] = field(default_factory=list)
    ents: Optional[List[Span]] = None
    comments: List[str] = field(default_factory=list)

    @classmethod
    def from_words(cls, words: Sequence[str], spaces: Optional[Sequence[bool]] = None) -> "Doc":
        if spaces is None:
            spaces = [True] * len(words)
        parts = []
        tokens = []
        offset = 0
        for i, (word, space) in enumerate(zip(words, spaces)):
            if not word:
                raise DocError("empty token form")
            tokens.append(Token(word, offset, offset + len(word)))
            parts.append(word)
            offset += len(word)
            if space and i < len(words) - 1:
                parts.append(" ")
                offset += 1
        doc = cls("".join(parts), tokens)
        if tokens:
            tokens[0].is_sent_start = True
        return doc

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, i: int) -> Token:
        return self.tokens[i]

    @property
    def words(self) -> List[str]:
        return [t.form for t in self.tokens]

    def whitespace_after(self, i: int) -> str:
        end = self.tokens[i].char_end
        nxt = self.tokens[i + 1].char_start if i + 1 < len(self.tokens) else len(self.text)
        return self.text[end:nxt]

    def sent_bounds(self) -> List[Tuple[int, int]]:
        """Sentence ``(start, end)`` token ranges; token 0 always opens one."""
        if not self.tokens:
            return []
        starts = [0] + [i for i in range(1, len(self.tokens)) if self.tokens[i].is_sent_start]
        ends = starts[1:] + [len(self.tokens)]
        return list(zip(starts, ends))

    def set_ents(self, spans: Iterable[Span]) -> None:
        spans = sorted(spans, key=lambda s: (s.start, s.end))
        prev_end = 0
        for span in spans:
            if span.end > len(self.tokens):
                raise DocError(f"span {span} beyond {len(self.tokens)} tokens")
            if span.start < prev_end:
                raise DocError(f"overlapping entity span {span}")
            prev_end = span.end
        self.ents = spans

    def validate(self) -> None:
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            if not tok.char_start < tok.char_end:
                raise DocError(f"token {i} has empty character span")
            if tok.char_start < prev_end:
                raise DocError(f"token {i} overlaps its predecessor")
            if self.text[tok.char_start:tok.char_end] != tok.form:
                raise DocError(f"token {i} form does not match text")
            prev_end = tok.char_end
        if self.tokens and self.tokens[0].is_sent_start is False:
            raise DocError("first token must start a sentence")
        for start, end in self.sent_bounds():
            n = end - start
            for j in range(start, end):
                head = self.tokens[j].head
                if head is not None and not (0 <= head <= n and head != j - start + 1):
                    raise DocError(f"token {j} has invalid head {head}")
        if self.ents is not None:
            self.set_ents(self.ents)


def merge_docs(docs: Sequence[Doc]) -> Doc:
    """Concatenate sentence docs into one document separated by single spaces."""
    text_parts = []
    tokens: List[Token] = []
    ents: Optional[List[Span]] = [] if all(d.ents is not None for d in docs) else None
    offset = 0
    for k, doc in enumerate(docs):
        if k and doc.tokens:
            text_parts.append(" ")
            offset += 1
        base = len(tokens)
        for j, tok in enumerate(doc.tokens):
            new = Token(**{**tok.__dict__})
            new.char_start += offset
            new.char_end += offset
            if j == 0:
                new.is_sent_start = True
            tokens.append(new)
        if ents is not None:
            ents.extend(Span(s.start + base, s.end + base, s.label) for s in doc.ents)
        text_parts.append(doc.text)
        offset += len(doc.text)
    return Doc("".join(text_parts), tokens, ents)


def split_sentences(doc: Doc) -> List[Doc]:
    """Cut a document into one doc per sentence, keeping entity spans."""
    out = []
    for start, end in doc.sent_bounds():
        toks = doc.tokens[start:end]
        lo, hi = toks[0].char_start, toks[-1].char_end
        new_tokens = []
        for tok in toks:
            new = Token(**{**tok.__dict__})
            new.char_start -= lo
            new.char_end -= lo
            new_tokens.append(new)
        new_tokens[0].is_sent_start = True
        ents = None
        if doc.ents is not None:
            ents = [Span(s.start - start, s.end - start, s.label)
                    for s in doc.ents if s.start >= start and s.end <= end]
        out.append(Doc(doc.text[lo:hi], new_tokens, ents))
    return out


_ORDINAL = re.compile(r"^(?:\d+|[IVXLCDM]+)\.$")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _peel(chunk: str, start: int) -> List[Tuple[str, int]]:
    lead = []
    i, j = 0, len(chunk)
    while i < j and _is_punct(chunk[i]):
        lead.append((chunk[i], start + i))
        i += 1
    trail = []
    while i < j and _is_punct(chunk[j - 1]) and not _ORDINAL.match(chunk[i:j]):
        j -= 1
        trail.append((chunk[j], start + j))
    middle = [(chunk[i:j], start + i)] if i < j else []
    return lead + middle + trail[::-1]


def tokenize(text: str) -> Doc:
    """Rule tokenizer: whitespace split, then peel leading/trailing punctuation.

    Ordinals written as digits or Roman numerals followed by a period
    (``12.``, ``XII.``) stay whole.
    """
    tokens = []
    for m in re.finditer(r"\S+", text):
        for form, start in _peel(m.group(), m.start()):
            tokens.append(Token(form, start, start + len(form)))
    if tokens:
        tokens[0].is_sent_start = True
    return Doc(text, tokens)
