"""Hashed subword n-gram and lexical-attribute embeddings (the embed step)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from .doc import normalize_form
from .nn import EmbedMean, Maxout, ParamStore

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

ATTRS = ("norm", "prefix", "suffix", "shape")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def hash_digest(unit: str, seed: int) -> int:
    return fnv1a_64(unit.encode("utf-8")) ^ (seed & MASK64)


def _fmix64(x: int) -> int:
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & MASK64
    x ^= x >> 33
    x = (x * 0xC4CEB9FE1A85EC53) & MASK64
    x ^= x >> 33
    return x


def hash_bucket(unit: str, seed: int, buckets: int) -> int:
    """Stable bucket index of ``unit`` for one hash seed.

    The digest is 64-bit FNV-1a XORed with the seed; it is finalized with the
    murmur3 mixer before the modulo so that different seeds decorrelate.
    """
    if buckets <= 0:
        raise ValueError("bucket count must be positive")
    return _fmix64(hash_digest(unit, seed)) % buckets


@dataclass(frozen=True)
class NgramRange:
    min_n: int = 3
    max_n: int = 5
    bow: str = "<"
    eow: str = ">"


def extract_ngrams(norm: str, ngrams: NgramRange = NgramRange()) -> List[str]:
    word = f"{ngrams.bow}{norm}{ngrams.eow}"
    grams = [word[i:i + n]
             for n in range(ngrams.min_n, ngrams.max_n + 1)
             for i in range(len(word) - n + 1)]
    grams.append(word)
    return grams


def word_shape(form: str) -> str:
    shape = []
    last, run = "", 0
    for ch in form:
        if ch.isalpha():
            c = "X" if ch.isupper() else "x"
        elif ch.isdigit():
            c = "d"
        else:
            c = ch
        run = run + 1 if c == last else 1
        last = c
        if run <= 4:
            shape.append(c)
    return "".join(shape)


def lexical_attributes(form: str) -> Tuple[str, str, str, str]:
    """``(NORM, PREFIX, SUFFIX, SHAPE)`` strings for a token form."""
    norm = normalize_form(form)
    return norm, form[:1], form[-3:], word_shape(form)


@dataclass
class EmbedConfig:
    width: int = 100
    ngram_buckets: int = 20000
    attr_buckets: int = 5000
    num_hashes: int = 2
    min_n: int = 3
    max_n: int = 5
    pieces: int = 3


class HashEmbedder:
    """Token vectors from hashed n-gram and attribute tables, mixed by maxout."""

    def __init__(self, store: ParamStore, config: EmbedConfig, seeds: Sequence[int] = (),
                 name: str = "embed"):
        if config.num_hashes < 1:
            raise ValueError("num_hashes must be >= 1")
        self.store, self.config, self.name = store, config, name
        if not seeds:
            seeds = [int(s) for s in store.rng.integers(0, 2**63 - 1, size=config.num_hashes)]
        if len(seeds) != config.num_hashes:
            raise ValueError("need one seed per hash")
        self.seeds = list(seeds)
        self.ngram_range = NgramRange(config.min_n, config.max_n)
        d = config.width
        self.ngrams = EmbedMean(store, f"{name}.ngram", config.ngram_buckets, d)
        self.attrs = [EmbedMean(store, f"{name}.{a}", config.attr_buckets, d) for a in ATTRS]
        self.mix = Maxout(store, f"{name}.mix", d, d * (1 + len(ATTRS)), config.pieces)
        self._features = lru_cache(maxsize=200_000)(self._compute_features)

    def _compute_features(self, form: str):
        cfg = self.config
        units = extract_ngrams(normalize_form(form), self.ngram_range)
        ng = np.array([hash_bucket(u, s, cfg.ngram_buckets) for u in units for s in self.seeds],
                      dtype=np.int64)
        attr = np.array([[hash_bucket(f"{a}={v}", s, cfg.attr_buckets) for s in self.seeds]
                         for a, v in zip(ATTRS, lexical_attributes(form))], dtype=np.int64)
        return ng, attr

    def features(self, forms: Sequence[str]):
        """Sparse lookup inputs for the n-gram table and each attribute table."""
        k = self.config.num_hashes
        per = [self._features(f) for f in forms]
        n = len(forms)
        if n:
            ng_rows = np.concatenate([p[0] for p in per])
            counts = np.array([len(p[0]) for p in per])
        else:
            ng_rows = np.zeros(0, dtype=np.int64)
            counts = np.zeros(0, dtype=np.int64)
        ng_seg = np.repeat(np.arange(n), counts)
        ng_w = np.repeat(1.0 / np.maximum(counts, 1), counts)
        ngram_input = (ng_rows, ng_w, ng_seg, n)
        attr_inputs = []
        seg = np.repeat(np.arange(n), k)
        w = np.full(n * k, 1.0 / k)
        for j in range(len(ATTRS)):
            rows = (np.concatenate([p[1][j] for p in per]) if n
                    else np.zeros(0, dtype=np.int64))
            attr_inputs.append((rows, w, seg, n))
        return ngram_input, attr_inputs

    def begin_update(self, forms: Sequence[str], train: bool = False):
        ngram_input, attr_inputs = self.features(forms)
        parts, backprops = [], []
        for table, inp in zip([self.ngrams] + self.attrs, [ngram_input] + attr_inputs):
            Y, bp = table.begin_update(inp, train)
            parts.append(Y)
            backprops.append(bp)
        X = np.concatenate(parts, axis=1)
        if not len(forms):
            return np.zeros((0, self.config.width), dtype=self.store.dtype), lambda dY: None
        Y, bp_mix = self.mix.begin_update(X, train)
        d = self.config.width

        def backprop(dY):
            dX = bp_mix(dY)
            for j, bp in enumerate(backprops):
                bp(dX[:, j * d:(j + 1) * d])
            return None

        return Y, backprop

    def __call__(self, forms, train=False):
        return self.begin_update(forms, train)

    def embed_token(self, form: str) -> np.ndarray:
        return self.begin_update([form])[0][0]
