"""The assembled pipeline: shared embed+encode stack and task heads."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .biaffine import BiaffineParser
from .doc import Doc, Token
from .edit_tree import TreeTable
from .embed import EmbedConfig, HashEmbedder
from .encoder import CNNEncoder, EncoderConfig
from .lemmatizer import CasingPolicy, LemmaDict, Lemmatizer
from .ner import NerModel
from .nn import ParamStore
from .tagger import ConfigError, SentenceSplitter, Tagger, feats_label

FORMAT_VERSION = 1
COMPONENTS = ("senter", "tagger", "morph", "lemmatizer", "parser", "ner")
# annotation order; the lemmatizer needs tags and sentence starts
ORDER = COMPONENTS
SCALES = {"md": 100, "lg": 300}
SHARED_PREFIXES = ("embed.", "encoder.")


@dataclass
class PipelineConfig:
    components: List[str] = field(default_factory=lambda: list(COMPONENTS))
    width: int = 100
    depth: int = 4
    window: int = 1
    pieces: int = 3
    dropout: float = 0.1
    ngram_buckets: int = 20000
    attr_buckets: int = 5000
    num_hashes: int = 2
    min_n: int = 3
    max_n: int = 5
    arc_hidden: int = 128
    label_hidden: int = 64
    ner_hidden: int = 64
    ner_label_width: int = 16
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 10.0
    epochs: int = 20
    batch_size: int = 2000
    sents_per_doc: int = 4
    seed: int = 0
    topk: int = 3
    beam_width: int = 8
    dict_min_freq: int = 2
    dict_min_share: float = 0.9
    dict_key: str = "upos"
    use_dict: bool = True
    truecase: bool = True
    head_weights: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise ConfigError(f"unknown components: {sorted(unknown)}")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")

    @classmethod
    def for_scale(cls, scale: str, **overrides) -> "PipelineConfig":
        if scale not in SCALES:
            raise ConfigError(f"unknown scale {scale!r}; expected one of {sorted(SCALES)}")
        return cls(width=SCALES[scale], **overrides)

    @property
    def scale(self) -> str:
        return {v: k for k, v in SCALES.items()}.get(self.width, f"d{self.width}")

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig(self.width, self.ngram_buckets, self.attr_buckets,
                           self.num_hashes, self.min_n, self.max_n, self.pieces)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.width, self.depth, self.window, self.pieces, self.dropout)

    def weight(self, component: str) -> float:
        return float(self.head_weights.get(component, 1.0))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def blank_copy(doc: Doc, keep_sents: bool = False) -> Doc:
    """Same tokens and text with every annotation removed."""
    tokens = []
    for i, tok in enumerate(doc.tokens):
        start = True if i == 0 else (bool(tok.is_sent_start) if keep_sents else None)
        tokens.append(Token(tok.form, tok.char_start, tok.char_end, is_sent_start=start,
                            misc=tok.misc))
    return Doc(doc.text, tokens, None, list(doc.comments))


class Pipeline:
    def __init__(self, config: PipelineConfig, inventories: Dict[str, List[str]],
                 store: Optional[ParamStore] = None, hash_seeds: Sequence[int] = (),
                 trees: Optional[TreeTable] = None, lemma_dict: Optional[LemmaDict] = None):
        self.config = config
        self.inventories = {k: list(v) for k, v in inventories.items()}
        self.store = store if store is not None else ParamStore(seed=config.seed)
        d = config.width
        self.embedder = HashEmbedder(self.store, config.embed_config(), hash_seeds)
        self.encoder = CNNEncoder(self.store, config.encoder_config())
        comps = set(config.components)
        self.senter = SentenceSplitter(self.store, d) if "senter" in comps else None
        self.tagger = None
        if "tagger" in comps:
            feats = inventories.get("feats") if "morph" in comps else None
            self.tagger = Tagger(self.store, d, inventories["upos"], feats or None)
        self.lemmatizer = None
        if "lemmatizer" in comps:
            if trees is None:
                raise ConfigError("lemmatizer enabled without an edit-tree inventory")
            policy = CasingPolicy(enabled=config.truecase)
            self.lemmatizer = Lemmatizer(self.store, d, trees, lemma_dict, policy,
                                         config.topk, config.use_dict)
        self.parser = None
        if "parser" in comps:
            self.parser = BiaffineParser(self.store, d, inventories["deprel"],
                                         config.arc_hidden, config.label_hidden)
        self.ner = None
        if "ner" in comps:
            self.ner = NerModel(self.store, d, inventories["ents"],
                                config.ner_hidden, config.ner_label_width)

    @property
    def components(self) -> List[str]:
        comps = set(self.config.components)
        return [c for c in ORDER if c in comps]

    def shared_names(self) -> List[str]:
        return [n for n in self.store.names() if n.startswith(SHARED_PREFIXES)]

    # --- forward ------------------------------------------------------------

    def tok2vec(self, docs: Sequence[Doc], train: bool = False):
        forms = [t.form for doc in docs for t in doc.tokens]
        lengths = [len(doc) for doc in docs]
        E, bp_embed = self.embedder.begin_update(forms, train)
        X, bp_encode = self.encoder.begin_update(E, train, lengths=lengths)

        def backprop(dX):
            bp_embed(bp_encode(dX))

        return X, lengths, backprop

    def encode_doc(self, doc: Doc) -> np.ndarray:
        return self.tok2vec([doc])[0]

    def annotate_doc(self, doc: Doc, keep_sents: bool = False) -> Doc:
        """Run every component in place; ``keep_sents`` trusts existing boundaries."""
        if not len(doc):
            return doc
        X = self.encode_doc(doc)
        if self.senter is not None and not keep_sents:
            self.senter.predict_sentence_starts(doc, X)
        if self.tagger is not None:
            self.tagger.predict_tags(doc, X)
        if self.lemmatizer is not None:
            self.lemmatizer.lemmatize_doc(doc, X)
        if self.parser is not None:
            self.parser.parse_doc(doc, X)
        if self.ner is not None:
            spans = []
            for start, end in doc.sent_bounds():
                for s in self.ner.beam_search(X[start:end], self.config.beam_width)[0].state.spans:
                    spans.append(type(s)(s.start + start, s.end + start, s.label))
            doc.set_ents(spans)
        return doc

    def __call__(self, docs: Iterable[Doc], threads: int = 1,
                 keep_sents: bool = False) -> List[Doc]:
        docs = list(docs)
        if threads <= 1:
            return [self.annotate_doc(d, keep_sents) for d in docs]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda d: self.annotate_doc(d, keep_sents), docs))

    # --- training -----------------------------------------------------------

    def update(self, docs: Sequence[Doc], components: Optional[Iterable[str]] = None,
               lemma_gold: Optional[Dict[int, List[Optional[str]]]] = None) -> Dict[str, float]:
        """Accumulate gradients of the summed head losses over ``docs``."""
        comps = set(components or self.components)
        X, lengths, bp_t2v = self.tok2vec(docs, train=True)
        dX = np.zeros_like(X)
        norm = float(max(1, X.shape[0]))
        losses: Dict[str, float] = {}
        pending = []

        def add(name, loss, bp, lo, hi):
            if bp is None:
                return
            w = self.config.weight(name)
            losses[name] = losses.get(name, 0.0) + w * loss
            pending.append((w, bp, lo, hi))

        offset = 0
        for doc, n in zip(docs, lengths):
            Xd = X[offset:offset + n]
            span = (offset, offset + n)
            if self.senter is not None and "senter" in comps:
                add("senter", *self.senter.head.loss(Xd, SentenceSplitter.gold(doc), norm), *span)
            if self.tagger is not None:
                if "tagger" in comps:
                    add("tagger", *self.tagger.upos.loss(Xd, [t.upos for t in doc.tokens], norm),
                        *span)
                if self.tagger.morph is not None and "morph" in comps:
                    add("morph", *self.tagger.morph.loss(
                        Xd, [feats_label(t.feats) for t in doc.tokens], norm), *span)
            if self.lemmatizer is not None and "lemmatizer" in comps:
                gold = lemma_gold.get(id(doc)) if lemma_gold is not None else None
                if gold is None:
                    gold = self.lemmatizer.gold_labels(doc)
                add("lemmatizer", *self.lemmatizer.head.loss(Xd, gold, norm), *span)
            for start, end in doc.sent_bounds():
                toks = doc.tokens[start:end]
                sent = (offset + start, offset + end)
                if self.parser is not None and "parser" in comps \
                        and any(t.head is not None for t in toks):
                    add("parser", *self.parser.loss(Xd[start:end], [t.head for t in toks],
                                                    [t.deprel for t in toks], norm), *sent)
                if self.ner is not None and "ner" in comps and doc.ents is not None:
                    spans = [type(s)(s.start - start, s.end - start, s.label)
                             for s in doc.ents if start <= s.start and s.end <= end]
                    add("ner", *self.ner.loss(Xd[start:end], spans, norm), *sent)
            offset += n

        for w, bp, lo, hi in pending:
            dX[lo:hi] += w * bp()
        for name, loss in losses.items():
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss in component {name!r}")
        bp_t2v(dX)
        return losses

    # --- persistence --------------------------------------------------------

    def to_disk(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": FORMAT_VERSION,
            "scale": self.config.scale,
            "config": self.config.to_dict(),
            "seed": self.store.seed,
            "hash_seeds": [str(s) for s in self.embedder.seeds],
            "inventories": self.inventories,
            "components": self.components,
            "dims": {n: list(self.store[n].shape) for n in self.store.names()},
        }
        (path / "meta.json").write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n",
                                        encoding="utf-8")
        self.store.save(path / "params.bin")
        if self.lemmatizer is not None:
            (path / "trees.bin").write_bytes(self.lemmatizer.table.to_bytes())
            (path / "lemma_dict.tsv").write_text(self.lemmatizer.lemma_dict.to_tsv(),
                                                 encoding="utf-8")

    @classmethod
    def from_disk(cls, path) -> "Pipeline":
        path = Path(path)
        meta_file = path / "meta.json"
        if not meta_file.exists():
            raise FileNotFoundError(f"{path}: not a model directory (no meta.json)")
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format {meta.get('format_version')}")
        config = PipelineConfig.from_dict(meta["config"])
        store = ParamStore.load(path / "params.bin", seed=meta["seed"])
        trees = lemma_dict = None
        if (path / "trees.bin").exists():
            trees = TreeTable.from_bytes((path / "trees.bin").read_bytes())
            lemma_dict = LemmaDict.from_tsv(
                (path / "lemma_dict.tsv").read_text(encoding="utf-8"), key=config.dict_key)
        seeds = [int(s) for s in meta["hash_seeds"]]
        return cls(config, meta["inventories"], store, seeds, trees, lemma_dict)
