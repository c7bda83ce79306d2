"""CoNLL-U and column-format NER corpus readers and writers."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .doc import Doc, MorphFeats, Span, Token


class CorpusError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _blocks(text: str):
    block: List[Tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "":
            if block:
                yield block
                block = []
        else:
            block.append((lineno, line))
    if block:
        yield block


def _opt(value: str) -> Optional[str]:
    return None if value == "_" else value


def _space_after(misc: Optional[str]) -> bool:
    if not misc:
        return True
    return "SpaceAfter=No" not in misc.split("|")


def parse_conllu(text: str) -> List[Doc]:
    """Read a CoNLL-U treebank into one :class:`Doc` per sentence."""
    docs = []
    for block in _blocks(text):
        comments = []
        rows = []
        for lineno, line in block:
            if line.startswith("#"):
                comments.append(line)
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise CorpusError(f"expected 10 columns, found {len(cols)}", lineno)
            tid = cols[0]
            if "-" in tid:
                continue
            if "." in tid:
                raise CorpusError(f"empty node {tid!r} is not supported", lineno)
            try:
                idx = int(tid)
            except ValueError:
                raise CorpusError(f"bad token id {tid!r}", lineno) from None
            if idx != len(rows) + 1:
                raise CorpusError(f"expected token id {len(rows) + 1}, found {idx}", lineno)
            rows.append((lineno, cols))
        if not rows:
            raise CorpusError("sentence without word rows", block[0][0])
        n = len(rows)
        words, spaces, tokens = [], [], []
        for lineno, cols in rows:
            _, form, lemma, upos, xpos, feats, head, deprel, deps, misc = cols
            if head == "_":
                head_val = None
            else:
                try:
                    head_val = int(head)
                except ValueError:
                    raise CorpusError(f"bad head {head!r}", lineno) from None
                if not 0 <= head_val <= n:
                    raise CorpusError(f"head {head_val} out of range 0..{n}", lineno)
            try:
                # "_" is an empty bundle on tagged rows, unset otherwise
                if feats == "_":
                    feats_val = MorphFeats() if upos != "_" else None
                else:
                    feats_val = MorphFeats.parse(feats)
            except ValueError as err:
                raise CorpusError(str(err), lineno) from None
            words.append(form)
            spaces.append(_space_after(_opt(misc)))
            tokens.append(dict(
                lemma=_opt(lemma), upos=_opt(upos), xpos=_opt(xpos), feats=feats_val,
                head=head_val, deprel=_opt(deprel), deps=_opt(deps), misc=_opt(misc),
            ))
        doc = Doc.from_words(words, spaces)
        for tok, extra in zip(doc.tokens, tokens):
            for key, value in extra.items():
                setattr(tok, key, value)
        doc.comments = comments
        docs.append(doc)
    return docs


def _col(value) -> str:
    if value is None:
        return "_"
    value = str(value)
    return value if value else "_"


def serialize_conllu(docs: Iterable[Doc]) -> str:
    """Write docs as CoNLL-U, one block per sentence of each doc."""
    out = []
    for doc in docs:
        for k, (start, end) in enumerate(doc.sent_bounds()):
            if k == 0:
                out.extend(doc.comments)
            for i in range(start, end):
                tok = doc.tokens[i]
                misc = tok.misc
                if misc is None and i + 1 < end and doc.whitespace_after(i) == "":
                    misc = "SpaceAfter=No"
                out.append("\t".join([
                    str(i - start + 1), tok.form, _col(tok.lemma), _col(tok.upos),
                    _col(tok.xpos), _col(tok.feats), _col(tok.head), _col(tok.deprel),
                    _col(tok.deps), _col(misc),
                ]))
            out.append("")
    return "\n".join(out) + ("\n" if out else "")


def read_conllu(path: Union[str, Path]) -> List[Doc]:
    return parse_conllu(Path(path).read_text(encoding="utf-8"))


# --- IOB2 / BILOU -----------------------------------------------------------

def spans_to_iob(n: int, spans: Sequence[Span]) -> List[str]:
    tags = ["O"] * n
    for span in spans:
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def _normalize_tag(tag: str) -> Tuple[str, Optional[str]]:
    if tag == "O":
        return "O", None
    prefix, sep, label = tag.partition("-")
    if not sep or not label or prefix not in ("B", "I", "L", "U", "E", "S"):
        raise ValueError(f"unknown tag {tag!r}")
    return {"L": "I", "E": "I", "U": "B", "S": "B"}.get(prefix, prefix), label


def iob_to_spans(tags: Sequence[str], strict: bool = True,
                 linenos: Optional[Sequence[int]] = None) -> List[Span]:
    """Decode IOB2 (or BILOU) tags into spans.

    In strict mode an ``I-X`` that does not continue an ``X`` entity raises
    :class:`CorpusError`; otherwise it is repaired into ``B-X``.
    """
    spans = []
    start, label = None, None
    for i, tag in enumerate(tags):
        lineno = linenos[i] if linenos else None
        try:
            prefix, lab = _normalize_tag(tag)
        except ValueError as err:
            raise CorpusError(str(err), lineno) from None
        if prefix == "I" and label != lab:
            if strict:
                raise CorpusError(f"{tag} does not continue an entity of the same type", lineno)
            prefix = "B"
        if prefix in ("B", "O") and label is not None:
            spans.append(Span(start, i, label))
            start, label = None, None
        if prefix == "B":
            start, label = i, lab
    if label is not None:
        spans.append(Span(start, len(tags), label))
    return spans


def parse_ner_tsv(text: str, strict: bool = True) -> List[Doc]:
    docs = []
    for block in _blocks(text):
        words, tags, linenos = [], [], []
        for lineno, line in block:
            cols = line.split("\t")
            if len(cols) != 2:
                raise CorpusError(f"expected 2 columns, found {len(cols)}", lineno)
            if cols[0] == "-DOCSTART-":
                continue
            words.append(cols[0])
            tags.append(cols[1])
            linenos.append(lineno)
        if not words:
            continue
        doc = Doc.from_words(words)
        doc.set_ents(iob_to_spans(tags, strict=strict, linenos=linenos))
        docs.append(doc)
    return docs


def serialize_ner_tsv(docs: Iterable[Doc]) -> str:
    out = []
    for doc in docs:
        tags = spans_to_iob(len(doc), doc.ents or [])
        out.extend(f"{tok.form}\t{tag}" for tok, tag in zip(doc.tokens, tags))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def read_ner_tsv(path: Union[str, Path], strict: bool = True) -> List[Doc]:
    return parse_ner_tsv(Path(path).read_text(encoding="utf-8"), strict=strict)


def read_corpus(path: Union[str, Path], strict: bool = True) -> List[Doc]:
    """Dispatch on extension: ``.conllu`` is a treebank, anything else NER TSV."""
    path = Path(path)
    if path.suffix == ".conllu":
        return read_conllu(path)
    return read_ner_tsv(path, strict=strict)
