"""Shared context encoder: stacked residual window convolutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .nn import ConvWindow, Dropout, LayerNorm, ParamStore


@dataclass
class EncoderConfig:
    width: int = 100
    depth: int = 4
    window: int = 1
    pieces: int = 3
    dropout: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("encoder depth must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")

    @property
    def receptive_field(self) -> int:
        return self.depth * self.window


class CNNEncoder:
    """Each layer computes ``LN(x + maxout(window(x)))``.

    Segments given by ``lengths`` are encoded independently and padded with
    zeros at their edges, so row ``i`` sees only rows within
    ``depth * window`` positions in its own segment.
    """

    def __init__(self, store: ParamStore, config: EncoderConfig, name: str = "encoder"):
        self.store, self.config, self.name = store, config, name
        d = config.width
        self.convs = [ConvWindow(store, f"{name}.{i}.conv", d, d, config.window, config.pieces)
                      for i in range(config.depth)]
        self.norms = [LayerNorm(store, f"{name}.{i}.norm", d) for i in range(config.depth)]
        self.dropout = Dropout(config.dropout, np.random.default_rng(store.seed + 1))
        self.calls = 0

    def begin_update(self, X: np.ndarray, train: bool = False,
                     lengths: Optional[Sequence[int]] = None):
        self.calls += 1
        if X.shape[0] == 0:
            return X, lambda dY: dY
        backprops = []
        for conv, norm in zip(self.convs, self.norms):
            H, bp_conv = conv.begin_update(X, train, lengths=lengths)
            H, bp_drop = self.dropout.begin_update(H, train)
            Y, bp_norm = norm.begin_update(X + H, train)
            backprops.append((bp_conv, bp_drop, bp_norm))
            X = Y

        def backprop(dY):
            for bp_conv, bp_drop, bp_norm in reversed(backprops):
                dS = bp_norm(dY)
                dY = dS + bp_conv(bp_drop(dS))
            return dY

        return X, backprop

    def __call__(self, X, train=False, lengths=None):
        return self.begin_update(X, train, lengths)
