"""Hungarian text processing pipeline: tokenization, sentence splitting,
tagging, morphology, lemmatization, dependency parsing and NER over a shared
hash-embedding + CNN encoder."""

from .doc import Doc, MorphFeats, Span, Token, merge_docs, split_sentences, tokenize
from .corpus import parse_conllu, read_corpus, serialize_conllu
from .edit_tree import apply_edit_tree, build_edit_tree
from .mst import decode_mst
from .pipeline import Pipeline, PipelineConfig, blank_copy
from .eval import EvalReport, compute_metrics

__version__ = "0.1.0"

__all__ = [
    "Doc", "MorphFeats", "Span", "Token", "merge_docs", "split_sentences", "tokenize",
    "parse_conllu", "read_corpus", "serialize_conllu", "apply_edit_tree", "build_edit_tree",
    "decode_mst", "Pipeline", "PipelineConfig", "blank_copy", "EvalReport", "compute_metrics",
]
