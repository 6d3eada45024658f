"""Recurrent and convolutional building blocks on top of the autodiff core.

Everything here is a pure function of (weights, inputs); the only mutation
of weight tensors happens in the optimizer, on the single training thread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor

INIT_RANGE = 0.08  # uniform init half-width for recurrent weights
FORGET_BIAS = 1.0


@dataclass
class LSTMWeights:
    """Gate order along the stacked 4h axis: input, forget, cell, output."""

    w_x: Tensor  # (4h, d_in)
    w_h: Tensor  # (4h, h)
    b: Tensor  # (4h,)

    def __post_init__(self):
        rows4h = self.w_x.shape[0]
        if rows4h % 4 != 0 or rows4h == 0:
            raise DimensionError(f"gate matrix rows must be a positive multiple of 4, got {rows4h}")
        h = rows4h // 4
        if self.w_h.shape != (rows4h, h) or self.b.shape != (rows4h,):
            raise DimensionError(
                f"inconsistent LSTM shapes: w_x {self.w_x.shape}, w_h {self.w_h.shape}, b {self.b.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.w_x.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.w_x, self.w_h, self.b]


def init_lstm(rng: np.random.Generator, hidden_size: int, input_size: int) -> LSTMWeights:
    """Uniform [-0.08, 0.08] weights, zero biases except forget gate at 1.0."""
    h4 = 4 * hidden_size
    w_x = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(h4, input_size))
    w_h = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(h4, hidden_size))
    b = np.zeros(h4)
    b[hidden_size : 2 * hidden_size] = FORGET_BIAS
    return LSTMWeights(
        Tensor(w_x, requires_grad=True),
        Tensor(w_h, requires_grad=True),
        Tensor(b, requires_grad=True),
    )


matvec = ad.matvec


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal width into a (len, width) matrix."""
    if not vectors:
        raise DimensionError("stack_rows of an empty sequence")
    return ad.concat([ad.reshape(v, (1, v.shape[0])) for v in vectors], axis=0)


def tile_rows(vec: Tensor, n: int) -> Tensor:
    """Repeat a 1-d tensor as n rows; differentiable stand-in for broadcasting."""
    ones = Tensor(np.ones((n, 1), dtype=vec.values.dtype))
    return ad.matmul(ones, ad.reshape(vec, (1, vec.shape[0])))


def linear_rows(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Row-wise affine map: (n, d_in) x (d_out, d_in)^T [+ b] -> (n, d_out)."""
    out = ad.matmul(x, ad.transpose(w))
    if b is not None:
        out = ad.add(out, tile_rows(b, x.shape[0]))
    return out


def lstm_step(
    w: LSTMWeights, x_t: Tensor, h_prev: Tensor, c_prev: Tensor
) -> tuple[Tensor, Tensor]:
    h = w.hidden_size
    if x_t.shape != (w.input_size,):
        raise DimensionError(f"lstm input {x_t.shape} does not match weights ({w.input_size},)")
    if h_prev.shape != (h,) or c_prev.shape != (h,):
        raise DimensionError(
            f"lstm state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {h}"
        )
    gates = ad.add(ad.add(matvec(w.w_x, x_t), matvec(w.w_h, h_prev)), w.b)
    i = ad.sigmoid(ad.narrow(gates, 0, 0, h))
    f = ad.sigmoid(ad.narrow(gates, 0, h, h))
    g = ad.tanh(ad.narrow(gates, 0, 2 * h, h))
    o = ad.sigmoid(ad.narrow(gates, 0, 3 * h, h))
    c_t = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h_t = ad.mul(o, ad.tanh(c_t))
    return h_t, c_t


def _run_direction(w: LSTMWeights, xs: Sequence[Tensor]) -> list[Tensor]:
    h = w.hidden_size
    dtype = w.w_x.values.dtype
    h_t = Tensor(np.zeros(h, dtype=dtype))
    c_t = Tensor(np.zeros(h, dtype=dtype))
    states = []
    for x in xs:
        h_t, c_t = lstm_step(w, x, h_t, c_t)
        states.append(h_t)
    return states


def lstm_scan(w: LSTMWeights, xs: Sequence[Tensor], reverse: bool = False) -> list[Tensor]:
    """Per-position hidden states of one direction, indexed by input position."""
    if reverse:
        return list(reversed(_run_direction(w, list(reversed(xs)))))
    return _run_direction(w, xs)


def bilstm(w_fwd: LSTMWeights, w_bwd: LSTMWeights, xs: Sequence[Tensor]) -> list[Tensor]:
    """Per-position concat [forward state at i; backward state at i]."""
    xs = list(xs)
    if not xs:
        raise DimensionError("bilstm over an empty sequence")
    fwd = lstm_scan(w_fwd, xs)
    bwd = lstm_scan(w_bwd, xs, reverse=True)
    return [ad.concat([f, b], axis=0) for f, b in zip(fwd, bwd)]


@dataclass
class CharCNNWeights:
    table: Tensor  # (|charset|, d_c); row 0 pad, row 1 unk
    filters: Tensor  # (f, width * d_c)
    bias: Tensor  # (f,)
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise DimensionError(f"filter width must be >= 1, got {self.width}")
        d_c = self.table.shape[1]
        f = self.filters.shape[0]
        if f < 1 or self.filters.shape[1] != self.width * d_c or self.bias.shape != (f,):
            raise DimensionError(
                f"inconsistent char-cnn shapes: table {self.table.shape}, "
                f"filters {self.filters.shape}, bias {self.bias.shape}, width {self.width}"
            )

    @property
    def num_filters(self) -> int:
        return self.filters.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.table, self.filters, self.bias]


def init_char_cnn(
    rng: np.random.Generator, charset_size: int, char_dim: int, width: int, filters: int
) -> CharCNNWeights:
    table = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(charset_size, char_dim))
    table[0] = 0.0  # pad char embeds to zero
    filt = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(filters, width * char_dim))
    return CharCNNWeights(
        Tensor(table, requires_grad=True),
        Tensor(filt, requires_grad=True),
        Tensor(np.zeros(filters), requires_grad=True),
        width,
    )


PAD_CHAR = 0
UNK_CHAR = 1


def char_cnn(w: CharCNNWeights, char_ids: Sequence[int]) -> Tensor:
    """Convolve over a word's characters, ReLU, max over time -> (f,) vector.

    Trailing pad characters are trimmed before convolving (then re-padded up
    to the filter width if the word is shorter), so pads beyond filter reach
    cannot influence the output. Out-of-range ids fall back to the unk char.
    """
    ids = [int(c) for c in char_ids]
    if not ids:
        raise DimensionError("char_cnn over an empty character sequence")
    while len(ids) > 1 and ids[-1] == PAD_CHAR:
        ids.pop()
    charset = w.table.shape[0]
    ids = [c if 0 <= c < charset else UNK_CHAR for c in ids]
    if len(ids) < w.width:
        ids = ids + [PAD_CHAR] * (w.width - len(ids))
    emb = ad.rows(w.table, ids)
    d_c = w.table.shape[1]
    windows = [
        ad.reshape(ad.narrow(emb, 0, t, w.width), (1, w.width * d_c))
        for t in range(len(ids) - w.width + 1)
    ]
    win = ad.concat(windows, axis=0) if len(windows) > 1 else windows[0]
    conv = ad.add(ad.matmul(win, ad.transpose(w.filters)), tile_rows(w.bias, win.shape[0]))
    return ad.max_over_axis(ad.relu(conv), axis=0)


def feed_forward_relu(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """relu(W·x + b) for a single vector."""
    if w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise DimensionError(
            f"feed-forward shapes: W {w.shape}, b {b.shape}, x {x.shape}"
        )
    return ad.relu(ad.add(matvec(w, x), b))


@dataclass
class AttentionPoolWeights:
    v: Tensor  # scoring vector, width = state width

    def __post_init__(self):
        if self.v.size == 0:
            raise DimensionError("attention scoring vector must be nonempty")

    def tensors(self) -> list[Tensor]:
        return [self.v]


def attention_pool(w: AttentionPoolWeights, states: Sequence[Tensor]) -> Tensor:
    """softmax(v·s_i over i)-weighted average of the states."""
    states = list(states)
    if not states:
        raise DimensionError("attention_pool over an empty sequence")
    s = stack_rows(states)
    weights = ad.softmax(ad.matvec(s, w.v), axis=0)
    return ad.matvec(ad.transpose(s), weights)
