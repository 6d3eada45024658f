"""Discourse-marker-prediction pretraining of the sentence encoder.

A shared bidirectional LSTM encodes each clause into [max-pooled forward;
max-pooled backward; last forward state; first backward state] (width 4h),
the two clause vectors are fused as [r1; r2; r1 + r2; r1 * r2], and a
linear head predicts which marker joined them. The trained encoder is
exported for the entailment model, where it stays trainable.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import DEFAULT_MARKERS, EmbeddingTable, MarkerPair, TokenizedSentence
from .layers import LSTMWeights, init_lstm, lstm_scan, matvec, stack_rows

logger = logging.getLogger(__name__)


@dataclass
class EncoderParams:
    """Bi-directional clause encoder; both directions share hidden size h."""

    fwd: LSTMWeights
    bwd: LSTMWeights

    def __post_init__(self):
        if self.fwd.hidden_size != self.bwd.hidden_size:
            raise DimensionError(
                f"direction hidden sizes differ: {self.fwd.hidden_size} vs {self.bwd.hidden_size}"
            )

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def input_size(self) -> int:
        return self.fwd.input_size

    def named_tensors(self) -> dict[str, Tensor]:
        return {
            "encoder.fwd.w_x": self.fwd.w_x,
            "encoder.fwd.w_h": self.fwd.w_h,
            "encoder.fwd.b": self.fwd.b,
            "encoder.bwd.w_x": self.bwd.w_x,
            "encoder.bwd.w_h": self.bwd.w_h,
            "encoder.bwd.b": self.bwd.b,
        }


def init_encoder(rng: np.random.Generator, hidden_size: int, input_size: int) -> EncoderParams:
    return EncoderParams(init_lstm(rng, hidden_size, input_size), init_lstm(rng, hidden_size, input_size))


@dataclass
class DMPHead:
    w: Tensor  # (|markers|, 16h)
    b: Tensor  # (|markers|,)

    @property
    def num_markers(self) -> int:
        return self.w.shape[0]


def init_head(rng: np.random.Generator, num_markers: int, feature_width: int) -> DMPHead:
    w = rng.uniform(-0.08, 0.08, size=(num_markers, feature_width))
    return DMPHead(Tensor(w, requires_grad=True), Tensor(np.zeros(num_markers), requires_grad=True))


def encode_sentence(p: EncoderParams, s: TokenizedSentence, emb: EmbeddingTable) -> Tensor:
    """Clause vector [max_t fwd; max_t bwd; fwd at T; bwd at 1], width 4h."""
    if len(s) == 0:
        raise DimensionError("cannot encode an empty sentence")
    ids = s.word_ids if s.word_ids is not None else [emb.vocab.id(t) for t in s.tokens]
    mat = ad.rows(emb.tensor, ids)
    xs = [ad.row(mat, i) for i in range(len(ids))]
    fwd = lstm_scan(p.fwd, xs)
    bwd = lstm_scan(p.bwd, xs, reverse=True)
    r_fwd = ad.max_over_axis(stack_rows(fwd), axis=0)
    r_bwd = ad.max_over_axis(stack_rows(bwd), axis=0)
    return ad.concat([r_fwd, r_bwd, fwd[-1], bwd[0]], axis=0)


def pair_features(r1: Tensor, r2: Tensor) -> Tensor:
    """[r1; r2; r1 + r2; r1 * r2], four times the clause width."""
    if r1.shape != r2.shape:
        raise DimensionError(f"clause widths differ: {r1.shape} vs {r2.shape}")
    return ad.concat([r1, r2, ad.add(r1, r2), ad.mul(r1, r2)], axis=0)


def dmp_forward(head: DMPHead, r: Tensor) -> Tensor:
    """Distribution over markers: softmax(W r + b)."""
    return ad.softmax(ad.add(matvec(head.w, r), head.b), axis=0)


def anneal_halving(val_accs: Sequence[float], initial_lr: float) -> list[float]:
    """Learning rate in effect after each epoch: halve whenever validation
    accuracy drops below the previous epoch's. Monotone non-increasing."""
    lrs = []
    lr = initial_lr
    for i, acc in enumerate(val_accs):
        if i > 0 and acc < val_accs[i - 1]:
            lr *= 0.5
        lrs.append(lr)
    return lrs


@dataclass
class DMPConfig:
    hidden_size: int = 300
    epochs: int = 10
    initial_lr: float = 0.1
    batch_size: int = 4
    keep_prob: float = 0.8  # feed-forward dropout rate 0.2 read as drop probability
    val_fraction: float = 0.2
    seed: int = 0
    markers: tuple[str, ...] = DEFAULT_MARKERS


@dataclass
class DMPResult:
    encoder: EncoderParams
    head: DMPHead
    log: list[dict] = field(default_factory=list)
    best_val_acc: float = 0.0
    best_epoch: int = 0


def _sgd_step(params: Sequence[Tensor], lr: float) -> None:
    for p in params:
        p.values -= lr * p.grad
        p.zero_grad()


def _dmp_loss(
    encoder: EncoderParams,
    head: DMPHead,
    emb: EmbeddingTable,
    pair: MarkerPair,
    marker_id: int,
    keep_prob: float,
    training: bool,
    rng,
) -> Tensor:
    r1 = encode_sentence(encoder, pair.s1, emb)
    r2 = encode_sentence(encoder, pair.s2, emb)
    r = pair_features(r1, r2)
    r = ad.dropout(r, keep_prob, training=training, rng=rng)
    d = dmp_forward(head, r)
    picked = ad.clamp_min(ad.narrow(d, 0, marker_id, 1), 1e-12)
    return ad.reshape(ad.scale(ad.log(picked), -1.0), ())


def _dmp_predict(encoder: EncoderParams, head: DMPHead, emb: EmbeddingTable, pair: MarkerPair) -> int:
    with ad.no_grad():
        r = pair_features(
            encode_sentence(encoder, pair.s1, emb), encode_sentence(encoder, pair.s2, emb)
        )
        d = dmp_forward(head, r)
    return int(np.argmax(d.values))


def dmp_accuracy(
    encoder: EncoderParams, head: DMPHead, emb: EmbeddingTable, pairs: Sequence[MarkerPair],
    marker_ids: Sequence[int],
) -> float:
    if not pairs:
        return 0.0
    hits = sum(
        1 for pair, mid in zip(pairs, marker_ids) if _dmp_predict(encoder, head, emb, pair) == mid
    )
    return hits / len(pairs)


def train_dmp(pairs: Sequence[MarkerPair], config: DMPConfig, emb: EmbeddingTable) -> DMPResult:
    """SGD with halving anneal over `config.epochs` epochs; returns the
    best-validation snapshot of encoder and head plus a per-epoch log."""
    marker_index = {m: i for i, m in enumerate(config.markers)}
    labeled = [(p, marker_index[p.marker]) for p in pairs if p.marker in marker_index]
    if len(labeled) < 2:
        raise ValueError(f"need at least 2 usable marker pairs, got {len(labeled)}")

    split_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 101]))
    order = split_rng.permutation(len(labeled))
    n_val = max(1, int(round(config.val_fraction * len(labeled))))
    val = [labeled[i] for i in order[:n_val]]
    train = [labeled[i] for i in order[n_val:]]
    if not train or not val:
        raise ValueError("empty train or validation split")

    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 102]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 103]))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 104]))

    encoder = init_encoder(init_rng, config.hidden_size, emb.dim)
    head = init_head(init_rng, len(config.markers), 16 * config.hidden_size)
    params = list(encoder.named_tensors().values()) + [head.w, head.b]

    result = DMPResult(encoder=encoder, head=head)
    best: tuple[float, int] | None = None
    best_state: list[np.ndarray] | None = None
    lr = config.initial_lr
    prev_acc: float | None = None

    for epoch in range(1, config.epochs + 1):
        idx = shuffle_rng.permutation(len(train))
        epoch_loss = 0.0
        for start in range(0, len(idx), config.batch_size):
            batch = [train[i] for i in idx[start : start + config.batch_size]]
            ad.reset_tape()
            losses = []
            for pair, mid in batch:
                losses.append(
                    _dmp_loss(encoder, head, emb, pair, mid, config.keep_prob, True, dropout_rng)
                )
            total = losses[0]
            for l in losses[1:]:
                total = ad.add(total, l)
            mean = ad.scale(total, 1.0 / len(batch))
            ad.backward(mean)
            epoch_loss += mean.item() * len(batch)
            _sgd_step(params, lr)
        val_acc = dmp_accuracy(encoder, head, emb, [p for p, _ in val], [m for _, m in val])
        if prev_acc is not None and val_acc < prev_acc:
            lr *= 0.5
        prev_acc = val_acc
        result.log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / len(train),
                "val_acc": val_acc,
                "lr": lr,
            }
        )
        if best is None or val_acc > best[0]:
            best = (val_acc, epoch)
            best_state = [p.values.copy() for p in params]

    if best_state is not None:
        for p, saved in zip(params, best_state):
            p.values[...] = saved
            p.zero_grad()
    result.best_val_acc, result.best_epoch = best
    ad.reset_tape()
    return result


ENCODER_KIND = "dmp_encoder"


def export_encoder(p: EncoderParams, path, markers: Sequence[str] = DEFAULT_MARKERS) -> None:
    """Write the encoder checkpoint; reload yields bit-identical tensors."""
    header = {
        "kind": ENCODER_KIND,
        "hidden_size": p.hidden_size,
        "input_dim": p.input_size,
        "markers": list(markers),
    }
    save_checkpoint(path, header, {k: v.values for k, v in p.named_tensors().items()})


def import_encoder(
    path, expected_hidden: int | None = None, expected_input_dim: int | None = None
) -> tuple[EncoderParams, dict]:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != ENCODER_KIND:
        raise CheckpointError(f"{path}: not an encoder checkpoint (kind={header.get('kind')!r})")
    h, d = header["hidden_size"], header["input_dim"]
    if expected_hidden is not None and h != expected_hidden:
        raise DimensionError(f"encoder hidden size {h} does not match expected {expected_hidden}")
    if expected_input_dim is not None and d != expected_input_dim:
        raise DimensionError(f"encoder input dim {d} does not match expected {expected_input_dim}")

    def weights(prefix: str) -> LSTMWeights:
        return LSTMWeights(
            Tensor(tensors[f"{prefix}.w_x"], requires_grad=True),
            Tensor(tensors[f"{prefix}.w_h"], requires_grad=True),
            Tensor(tensors[f"{prefix}.b"], requires_grad=True),
        )

    return EncoderParams(weights("encoder.fwd"), weights("encoder.bwd")), header
