"""Small dense numeric core: parameters, layers, reverse-mode gradients, Adam.

Every layer exposes ``begin_update(X, train)`` returning the output and a
``backprop`` closure. Calling ``backprop(dY)`` accumulates parameter
gradients into the owning :class:`ParamStore` and returns the gradient with
respect to the layer input. A chain of these closures is the tape.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

Backprop = Callable[[np.ndarray], Optional[np.ndarray]]

MAGIC = b"SPNN1"


class ShapeError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


class ParamStore:
    """Named parameters with gradients and Adam moments of identical shape."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.step = 0
        self.frozen: set = set()
        self._values: Dict[str, np.ndarray] = {}
        self._grads: Dict[str, np.ndarray] = {}
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def add(self, name: str, shape: Sequence[int], init: str = "xavier",
            scale: float = 0.1) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already exists")
        shape = tuple(int(s) for s in shape)
        if init == "zeros":
            value = np.zeros(shape)
        elif init == "ones":
            value = np.ones(shape)
        elif init == "uniform":
            value = self.rng.uniform(-scale, scale, size=shape)
        elif init == "xavier":
            fan_out, fan_in = shape[0], int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            value = self.rng.uniform(-limit, limit, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self._values[name] = value.astype(self.dtype)
        return self._values[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        old = self._values.get(name)
        if old is not None and old.shape != value.shape:
            raise ShapeError(f"{name}: shape {value.shape} != {old.shape}")
        self._values[name] = np.asarray(value, dtype=self.dtype).copy()

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def names(self) -> List[str]:
        return sorted(self._values)

    def trainable(self) -> List[str]:
        return [n for n in self.names() if n not in self.frozen]

    def grad(self, name: str) -> np.ndarray:
        g = self._grads.get(name)
        if g is None:
            g = self._grads[name] = np.zeros_like(self._values[name])
        return g

    def inc_grad(self, name: str, delta: np.ndarray) -> None:
        if name in self.frozen:
            return
        self.grad(name)[...] += delta

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g.fill(0)

    def astype(self, dtype) -> "ParamStore":
        self.dtype = np.dtype(dtype)
        for table in (self._values, self._grads, self._m, self._v):
            for k in table:
                table[k] = table[k].astype(self.dtype)
        return self

    def nbytes(self) -> int:
        return sum(v.nbytes for v in self._values.values())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            for name in self.names():
                value = np.ascontiguousarray(self._values[name], dtype="<f4")
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", value.ndim))
                fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
                fh.write(value.tobytes())

    @classmethod
    def load(cls, path, seed: int = 0, dtype=np.float32) -> "ParamStore":
        store = cls(seed=seed, dtype=dtype)
        data = Path(path).read_bytes()
        if not data.startswith(MAGIC):
            raise ValueError(f"{path}: not a parameter file")
        pos = len(MAGIC)
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            value = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            store._values[name] = value.astype(store.dtype)
        return store


# --- layers -----------------------------------------------------------------

class Layer:
    name = "layer"

    def begin_update(self, X, train: bool = False):
        raise NotImplementedError

    def predict(self, X):
        return self.begin_update(X, train=False)[0]

    def __call__(self, X, train: bool = False):
        return self.begin_update(X, train)

    def _check(self, X: np.ndarray, width: int) -> None:
        if X.ndim != 2 or X.shape[1] != width:
            raise ShapeError(f"{self.name}: expected (N, {width}) input, got {X.shape}")


class Linear(Layer):
    def __init__(self, store: ParamStore, name: str, nO: int, nI: int):
        self.store, self.name, self.nO, self.nI = store, name, nO, nI
        if f"{name}.W" not in store:
            store.add(f"{name}.W", (nO, nI))
            store.add(f"{name}.b", (nO,), init="zeros")

    def begin_update(self, X, train=False):
        self._check(X, self.nI)
        W, b = self.store[f"{self.name}.W"], self.store[f"{self.name}.b"]
        Y = X @ W.T + b

        def backprop(dY):
            self.store.inc_grad(f"{self.name}.W", dY.T @ X)
            self.store.inc_grad(f"{self.name}.b", dY.sum(axis=0))
            return dY @ W

        return Y, backprop


class Maxout(Layer):
    """Affine map to ``nO * pieces`` units followed by a max over the pieces."""

    def __init__(self, store: ParamStore, name: str, nO: int, nI: int, pieces: int = 3):
        self.store, self.name, self.nO, self.nI, self.pieces = store, name, nO, nI, pieces
        if f"{name}.W" not in store:
            limit = np.sqrt(6.0 / (nI + nO))
            store.add(f"{name}.W", (nO * pieces, nI), init="uniform", scale=limit)
            store.add(f"{name}.b", (nO * pieces,), init="zeros")

    def begin_update(self, X, train=False):
        self._check(X, self.nI)
        W, b = self.store[f"{self.name}.W"], self.store[f"{self.name}.b"]
        N = X.shape[0]
        Z = (X @ W.T + b).reshape(N, self.nO, self.pieces)
        which = Z.argmax(axis=2)
        Y = np.take_along_axis(Z, which[..., None], axis=2)[..., 0]

        def backprop(dY):
            dZ = np.zeros((N, self.nO, self.pieces), dtype=dY.dtype)
            np.put_along_axis(dZ, which[..., None], dY[..., None], axis=2)
            dZ = dZ.reshape(N, self.nO * self.pieces)
            self.store.inc_grad(f"{self.name}.W", dZ.T @ X)
            self.store.inc_grad(f"{self.name}.b", dZ.sum(axis=0))
            return dZ @ W

        return Y, backprop


def _segment_positions(lengths: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    lengths = np.asarray(lengths, dtype=np.int64)
    seg_len = np.repeat(lengths, lengths)
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    pos = np.arange(int(lengths.sum())) - starts
    return pos, seg_len


def expand_window(X: np.ndarray, window: int, lengths: Optional[Sequence[int]] = None):
    """Concatenate each row with its ``window`` neighbours on both sides.

    Rows are grouped into independent segments by ``lengths``; neighbours
    outside a row's segment are zeros.
    """
    N, d = X.shape
    if lengths is None:
        lengths = [N]
    pos, seg_len = _segment_positions(lengths)
    offsets = range(-window, window + 1)
    masks = []
    out = np.zeros((N, d * len(offsets)), dtype=X.dtype)
    for k, off in enumerate(offsets):
        valid = (pos + off >= 0) & (pos + off < seg_len)
        src = np.nonzero(valid)[0]
        out[src, k * d:(k + 1) * d] = X[src + off]
        masks.append(src)

    def backprop(dY):
        dX = np.zeros_like(X, dtype=dY.dtype)
        for k, off in enumerate(offsets):
            src = masks[k]
            dX[src + off] += dY[src, k * d:(k + 1) * d]
        return dX

    return out, backprop


class ConvWindow(Layer):
    """Window convolution: neighbour concatenation then a maxout projection."""

    def __init__(self, store: ParamStore, name: str, nO: int, nI: int,
                 window: int = 1, pieces: int = 3):
        self.name, self.window, self.nI = name, window, nI
        self.maxout = Maxout(store, name, nO, nI * (2 * window + 1), pieces)

    def begin_update(self, X, train=False, lengths=None):
        self._check(X, self.nI)
        Xw, bp_window = expand_window(X, self.window, lengths)
        Y, bp_maxout = self.maxout.begin_update(Xw, train)

        def backprop(dY):
            return bp_window(bp_maxout(dY))

        return Y, backprop


class LayerNorm(Layer):
    def __init__(self, store: ParamStore, name: str, nI: int, eps: float = 1e-5):
        self.store, self.name, self.nI, self.eps = store, name, nI, eps
        if f"{name}.G" not in store:
            store.add(f"{name}.G", (nI,), init="ones")
            store.add(f"{name}.b", (nI,), init="zeros")

    def begin_update(self, X, train=False):
        self._check(X, self.nI)
        G, b = self.store[f"{self.name}.G"], self.store[f"{self.name}.b"]
        mu = X.mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(X.var(axis=1, keepdims=True) + self.eps)
        Xhat = (X - mu) * inv
        Y = Xhat * G + b

        def backprop(dY):
            self.store.inc_grad(f"{self.name}.G", (dY * Xhat).sum(axis=0))
            self.store.inc_grad(f"{self.name}.b", dY.sum(axis=0))
            dXhat = dY * G
            n = X.shape[1]
            return inv / n * (n * dXhat - dXhat.sum(axis=1, keepdims=True)
                              - Xhat * (dXhat * Xhat).sum(axis=1, keepdims=True))

        return Y, backprop


class Dropout(Layer):
    def __init__(self, rate: float, rng: Optional[np.random.Generator] = None, name="dropout"):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate, self.name = rate, name
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def begin_update(self, X, train=False):
        if not train or self.rate == 0.0:
            return X, lambda dY: dY
        mask = (self.rng.random(X.shape) >= self.rate) / (1.0 - self.rate)
        mask = mask.astype(X.dtype)

        def backprop(dY):
            return dY * mask

        return X * mask, backprop


def softmax(Z: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    if mask is not None:
        Z = np.where(mask, Z, -np.inf)
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def log_softmax(Z: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    if mask is not None:
        Z = np.where(mask, Z, -np.inf)
    Z = Z - Z.max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        return Z - np.log(np.exp(Z).sum(axis=-1, keepdims=True))


class Softmax(Layer):
    """Affine map followed by a row softmax; backprop takes dL/dP."""

    def __init__(self, store: ParamStore, name: str, nO: int, nI: int):
        self.name, self.nI, self.nO = name, nI, nO
        self.linear = Linear(store, name, nO, nI)

    def begin_update(self, X, train=False):
        Z, bp_linear = self.linear.begin_update(X, train)
        P = softmax(Z)

        def backprop(dP):
            dZ = P * (dP - (dP * P).sum(axis=1, keepdims=True))
            return bp_linear(dZ)

        return P, backprop

    def logits(self, X, train=False):
        return self.linear.begin_update(X, train)


def cross_entropy(Z: np.ndarray, gold: np.ndarray, mask: Optional[np.ndarray] = None,
                  normalizer: float = 1.0) -> Tuple[float, np.ndarray]:
    """Summed cross-entropy of logits against gold indices, with dL/dZ."""
    P = softmax(Z, mask)
    rows = np.arange(len(gold))
    loss = -np.log(np.maximum(P[rows, gold], 1e-300)).sum() / normalizer
    dZ = P.copy()
    dZ[rows, gold] -= 1.0
    return float(loss), dZ / normalizer


class EmbedMean(Layer):
    """Trainable table; each output row is a weighted sum of table rows.

    Input is ``(rows, weights, segments, n_out)``: table row ids, their
    weights, and the output row each belongs to.
    """

    def __init__(self, store: ParamStore, name: str, n_rows: int, width: int,
                 scale: float = 0.1):
        self.store, self.name, self.n_rows, self.width = store, name, n_rows, width
        if f"{name}.E" not in store:
            store.add(f"{name}.E", (n_rows, width), init="uniform", scale=scale)

    def begin_update(self, X, train=False):
        rows, weights, segments, n_out = X
        E = self.store[f"{self.name}.E"]
        if len(rows) and (rows.min() < 0 or rows.max() >= self.n_rows):
            raise ShapeError(f"{self.name}: row index out of range")
        # accumulate in float64 so a uniform average of equal rows is exact
        Y = np.zeros((n_out, self.width), dtype=np.float64)
        np.add.at(Y, segments, E[rows] * weights[:, None])
        Y = Y.astype(E.dtype)

        def backprop(dY):
            if f"{self.name}.E" not in self.store.frozen:
                np.add.at(self.store.grad(f"{self.name}.E"), rows,
                          dY[segments] * weights[:, None])
            return None

        return Y, backprop


def forward(layer: Layer, X, mode: str = "infer", **kwargs):
    """Run ``layer``; returns ``(output, tape_entry)``."""
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    return layer.begin_update(X, train=(mode == "train"), **kwargs)


def backward(tape: Backprop, dY: np.ndarray):
    return tape(dY)


# --- verification -----------------------------------------------------------

def gradient_check(loss_fn: Callable[[], Tuple[float, Callable[[], Sequence[np.ndarray]]]],
                   store: ParamStore, epsilon: float = 1e-4,
                   names: Optional[Iterable[str]] = None,
                   inputs: Sequence[np.ndarray] = (),
                   max_entries: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` returns ``(loss, backprop)``; ``backprop()`` accumulates
    parameter gradients into ``store`` and returns gradients for ``inputs``.
    Frozen parameters are skipped. The store should be in 64-bit mode.
    """
    rng = rng or np.random.default_rng(0)
    names = [n for n in (names or store.names()) if n not in store.frozen]
    store.zero_grads()
    _, bp = loss_fn()
    d_inputs = bp()
    if d_inputs is None:
        d_inputs = []
    elif isinstance(d_inputs, np.ndarray):
        d_inputs = [d_inputs]
    analytic = {n: store.grad(n).copy() for n in names}
    worst = 0.0

    def check(array, grad):
        nonlocal worst
        flat = array.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        gflat = grad.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            plus = loss_fn()[0]
            flat[i] = orig - epsilon
            minus = loss_fn()[0]
            flat[i] = orig
            numeric = (plus - minus) / (2 * epsilon)
            a = gflat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)

    for n in names:
        check(store[n], analytic[n])
    for X, dX in zip(inputs, d_inputs):
        check(X, dX)
    store.zero_grads()
    return worst


# --- optimizer --------------------------------------------------------------

def adam_step(store: ParamStore, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, grad_clip: float = 10.0) -> float:
    """One Adam update with global L2 gradient clipping; zeroes gradients.

    Returns the pre-clipping gradient norm.
    """
    names = [n for n in store.trainable() if n in store._grads]
    total = 0.0
    for n in names:
        g = store._grads[n]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {n!r}")
        total += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(total))
    scale = grad_clip / norm if grad_clip and norm > grad_clip else 1.0
    store.step += 1
    t = store.step
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for n in names:
        g = store._grads[n]
        if scale != 1.0:
            g *= scale
        m = store._m.get(n)
        if m is None:
            m = store._m[n] = np.zeros_like(g)
            store._v[n] = np.zeros_like(g)
        v = store._v[n]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        store._values[n] -= (lr * (m / corr1) / (np.sqrt(v / corr2) + eps)).astype(store.dtype)
        g.fill(0)
    return norm
