"""Annotate raw text or pretokenized CoNLL-U with a trained model."""

from __future__ import annotations

import re
from pathlib import Path
from typing import List, Union

from .corpus import parse_conllu, serialize_conllu, serialize_ner_tsv
from .doc import Doc, tokenize
from .pipeline import Pipeline, blank_copy
from .tagger import ConfigError

FORMATS = ("conllu", "iob2")
_CONLLU_ROW = re.compile(r"^\d+(?:[-.]\d+)?\t")


def looks_like_conllu(text: str) -> bool:
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            return bool(_CONLLU_ROW.match(line))
    return False


def read_input(text: str) -> tuple:
    """``(docs, pretokenized)``. Raw text gives one doc per blank-line paragraph."""
    if looks_like_conllu(text):
        return [blank_copy(d, keep_sents=True) for d in parse_conllu(text)], True
    docs = []
    for para in re.split(r"\n\s*\n", text):
        para = para.strip()
        if para:
            docs.append(tokenize(para))
    return docs, False


def annotate(model: Union[str, Path, Pipeline], text: str, fmt: str = "conllu",
             threads: int = 1) -> str:
    nlp = model if isinstance(model, Pipeline) else Pipeline.from_disk(model)
    if fmt not in FORMATS:
        raise ConfigError(f"unknown output format {fmt!r}; expected one of {FORMATS}")
    if fmt == "iob2" and nlp.ner is None:
        raise ConfigError("iob2 output needs the ner component, which this model lacks")
    docs, pretokenized = read_input(text)
    if not docs:
        return ""
    annotated: List[Doc] = nlp(docs, threads=threads, keep_sents=pretokenized)
    if fmt == "iob2":
        return serialize_ner_tsv(annotated)
    return serialize_conllu(annotated)
