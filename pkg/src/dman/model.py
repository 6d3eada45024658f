"""The full entailment network.

Per-token features [word; char-cnn; pos; ner; exact-match] feed an encoding
BiLSTM; a learned similarity matrix aligns premise and hypothesis words;
aligned pairs are fused by a shared feed-forward block, re-read by per-side
modeling BiLSTMs, pooled with two separate learned score vectors, and
classified by a linear+softmax output layer that also sees the elementwise
product of the two transferred clause-encoder vectors.

Every Table-5-style component can be toggled off independently; disabling
the clause encoder substitutes zero vectors of the nominal width so all
other shapes are unchanged.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .corpus import (
    DEFAULT_CHARSET,
    EmbeddingTable,
    NLIExample,
    TokenizedSentence,
    Vocab,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dmp import EncoderParams, encode_sentence
from .layers import (
    AttentionPoolWeights,
    CharCNNWeights,
    LSTMWeights,
    attention_pool,
    bilstm,
    linear_rows,
    stack_rows,
    tile_rows,
)

NUM_LABELS = 3
INIT_RANGE = 0.08


@dataclass
class DMANConfig:
    hidden_size: int = 300
    use_encoder: bool = True
    use_char: bool = True
    use_pos: bool = True
    use_ner: bool = True
    use_em: bool = True
    lam: float = 0.2  # weight on the cross-entropy term of the objective
    word_dim: int = 300
    pos_dim: int = 30
    ner_dim: int = 10
    char_dim: int = 16
    char_filters: int = 50
    char_width: int = 3
    encoder_hidden: int = 300
    attention_softmax: bool = True  # False: raw similarity weights (fidelity mode)
    only_encoder: bool = False

    def __post_init__(self):
        if self.hidden_size <= 0:
            raise ValueError(f"hidden_size must be positive, got {self.hidden_size}")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")

    @property
    def rep_width(self) -> int:
        w = self.word_dim
        if self.use_char:
            w += self.char_filters
        if self.use_pos:
            w += self.pos_dim
        if self.use_ner:
            w += self.ner_dim
        if self.use_em:
            w += 3
        return w

    @property
    def encoder_repr_width(self) -> int:
        return 4 * self.encoder_hidden

    @property
    def v1_width(self) -> int:
        return 6 * self.hidden_size + 2 * self.encoder_repr_width

    @property
    def out_width(self) -> int:
        return 6 * self.hidden_size + self.encoder_repr_width

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "DMANConfig":
        return cls(**d)


@dataclass
class DMANParams:
    config: DMANConfig
    word_table: EmbeddingTable  # frozen
    pos_vocab: Vocab
    ner_vocab: Vocab
    charset: list[str]
    pos_table: Tensor | None = None
    ner_table: Tensor | None = None
    char: CharCNNWeights | None = None
    enc_fwd: LSTMWeights | None = None
    enc_bwd: LSTMWeights | None = None
    infer_w: Tensor | None = None  # (2h, 8h)
    infer_b: Tensor | None = None  # (2h,)
    v1: Tensor | None = None  # (6h + 8*enc_h,)
    v2: AttentionPoolWeights | None = None
    v3: AttentionPoolWeights | None = None
    w_out: Tensor | None = None  # (3, 6h + 4*enc_h)
    model_p_fwd: LSTMWeights | None = None
    model_p_bwd: LSTMWeights | None = None
    model_h_fwd: LSTMWeights | None = None
    model_h_bwd: LSTMWeights | None = None
    encoder: EncoderParams | None = None  # imported, stays trainable
    w_only: Tensor | None = None  # only-encoder head (3, 12*enc_h)

    def named_tensors(self) -> dict[str, Tensor]:
        """Deterministic name -> tensor map (checkpoint and optimizer order)."""
        out: dict[str, Tensor] = {"embed.word": self.word_table.tensor}
        if self.pos_table is not None:
            out["embed.pos"] = self.pos_table
        if self.ner_table is not None:
            out["embed.ner"] = self.ner_table
        if self.char is not None:
            out["char.table"] = self.char.table
            out["char.filters"] = self.char.filters
            out["char.bias"] = self.char.bias
        for prefix, w in (
            ("enc.fwd", self.enc_fwd),
            ("enc.bwd", self.enc_bwd),
            ("model.p.fwd", self.model_p_fwd),
            ("model.p.bwd", self.model_p_bwd),
            ("model.h.fwd", self.model_h_fwd),
            ("model.h.bwd", self.model_h_bwd),
        ):
            if w is not None:
                out[f"{prefix}.w_x"] = w.w_x
                out[f"{prefix}.w_h"] = w.w_h
                out[f"{prefix}.b"] = w.b
        if self.infer_w is not None:
            out["infer.w"] = self.infer_w
            out["infer.b"] = self.infer_b
        if self.v1 is not None:
            out["sim.v1"] = self.v1
        if self.v2 is not None:
            out["pool.v2"] = self.v2.v
            out["pool.v3"] = self.v3.v
        if self.w_out is not None:
            out["out.w"] = self.w_out
        if self.encoder is not None:
            out.update(self.encoder.named_tensors())
        if self.w_only is not None:
            out["out.only.w"] = self.w_only
        return out

    def trainable_tensors(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.named_tensors().items() if t.requires_grad}

    def trainable_parameter_count(self) -> int:
        return sum(t.size for t in self.trainable_tensors().values())


def _param_rng(seed: int, name: str) -> np.random.Generator:
    # stable per-parameter substream: ablations that keep a parameter's
    # shape keep its initialization
    return np.random.default_rng(np.random.SeedSequence([seed, 1, zlib.crc32(name.encode())]))


def _uniform(seed: int, name: str, shape) -> Tensor:
    vals = _param_rng(seed, name).uniform(-INIT_RANGE, INIT_RANGE, size=shape)
    return Tensor(vals, requires_grad=True)


def _lstm(seed: int, name: str, hidden: int, inp: int) -> LSTMWeights:
    rng = _param_rng(seed, name)
    w_x = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(4 * hidden, inp))
    w_h = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(4 * hidden, hidden))
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0
    return LSTMWeights(
        Tensor(w_x, requires_grad=True),
        Tensor(w_h, requires_grad=True),
        Tensor(b, requires_grad=True),
    )


def init_params(
    config: DMANConfig,
    word_table: EmbeddingTable,
    pos_vocab: Vocab,
    ner_vocab: Vocab,
    seed: int,
    encoder: EncoderParams | None = None,
    charset: Sequence[str] | None = None,
) -> DMANParams:
    """Build all trainable tensors; the encoder comes from a DMP checkpoint."""
    if word_table.dim != config.word_dim:
        raise DimensionError(
            f"word table dim {word_table.dim} does not match config word_dim {config.word_dim}"
        )
    if config.use_encoder:
        if encoder is None:
            raise ValueError("use_encoder is on but no encoder params were provided")
        if encoder.hidden_size != config.encoder_hidden:
            raise DimensionError(
                f"encoder hidden size {encoder.hidden_size} does not match "
                f"config encoder_hidden {config.encoder_hidden}"
            )
        if encoder.input_size != config.word_dim:
            raise DimensionError(
                f"encoder input dim {encoder.input_size} does not match word_dim {config.word_dim}"
            )
    else:
        encoder = None

    charset = list(charset or DEFAULT_CHARSET)
    params = DMANParams(
        config=config,
        word_table=word_table,
        pos_vocab=pos_vocab,
        ner_vocab=ner_vocab,
        charset=charset,
        encoder=encoder,
    )
    h = config.hidden_size
    if config.only_encoder:
        params.w_only = _uniform(seed, "out.only.w", (NUM_LABELS, 3 * config.encoder_repr_width))
        return params

    if config.use_pos:
        params.pos_table = _uniform(seed, "embed.pos", (len(pos_vocab), config.pos_dim))
    if config.use_ner:
        params.ner_table = _uniform(seed, "embed.ner", (len(ner_vocab), config.ner_dim))
    if config.use_char:
        table = _uniform(seed, "char.table", (len(charset), config.char_dim))
        table.values[0] = 0.0  # pad char
        params.char = CharCNNWeights(
            table,
            _uniform(seed, "char.filters", (config.char_filters, config.char_width * config.char_dim)),
            Tensor(np.zeros(config.char_filters), requires_grad=True),
            config.char_width,
        )
    params.enc_fwd = _lstm(seed, "enc.fwd", h, config.rep_width)
    params.enc_bwd = _lstm(seed, "enc.bwd", h, config.rep_width)
    params.infer_w = _uniform(seed, "infer.w", (2 * h, 8 * h))
    params.infer_b = Tensor(np.zeros(2 * h), requires_grad=True)
    params.v1 = _uniform(seed, "sim.v1", (config.v1_width,))
    params.v2 = AttentionPoolWeights(_uniform(seed, "pool.v2", (2 * h,)))
    params.v3 = AttentionPoolWeights(_uniform(seed, "pool.v3", (2 * h,)))
    params.w_out = _uniform(seed, "out.w", (NUM_LABELS, config.out_width))
    params.model_p_fwd = _lstm(seed, "model.p.fwd", h, 2 * h)
    params.model_p_bwd = _lstm(seed, "model.p.bwd", h, 2 * h)
    params.model_h_fwd = _lstm(seed, "model.h.fwd", h, 2 * h)
    params.model_h_bwd = _lstm(seed, "model.h.bwd", h, 2 * h)
    return params


def expected_parameter_count(
    config: DMANConfig, pos_vocab_size: int, ner_vocab_size: int, charset_size: int
) -> int:
    """Analytic trainable-parameter count from the width arithmetic alone."""
    enc_w = config.encoder_repr_width
    if config.only_encoder:
        n = NUM_LABELS * 3 * enc_w
        if config.use_encoder:
            n += 2 * _lstm_size(config.encoder_hidden, config.word_dim)
        return n
    h = config.hidden_size
    n = 0
    if config.use_pos:
        n += pos_vocab_size * config.pos_dim
    if config.use_ner:
        n += ner_vocab_size * config.ner_dim
    if config.use_char:
        n += charset_size * config.char_dim
        n += config.char_filters * (config.char_width * config.char_dim + 1)
    n += 2 * _lstm_size(h, config.rep_width)  # encoding BiLSTM
    n += 4 * _lstm_size(h, 2 * h)  # two per-side modeling BiLSTMs
    n += 2 * h * (8 * h) + 2 * h  # local-inference feed-forward
    n += config.v1_width
    n += 2 * (2 * h)  # v2, v3
    n += NUM_LABELS * config.out_width
    if config.use_encoder:
        n += 2 * _lstm_size(config.encoder_hidden, config.word_dim)
    return n


def _lstm_size(h: int, d: int) -> int:
    return 4 * h * d + 4 * h * h + 4 * h


# ---------------------------------------------------------------------------
# forward pieces


def _token_features(params: DMANParams, s: TokenizedSentence) -> list[Tensor]:
    from .layers import char_cnn

    cfg = params.config
    if s.word_ids is None:
        raise ValueError("sentence has no word ids; run the preprocessor first")
    n = len(s)
    word_rows = ad.rows(params.word_table.tensor, s.word_ids)
    pos_rows = ad.rows(params.pos_table, s.pos_ids) if cfg.use_pos else None
    ner_rows = ad.rows(params.ner_table, s.ner_ids) if cfg.use_ner else None
    feats = []
    for i in range(n):
        parts = [ad.row(word_rows, i)]
        if cfg.use_char:
            parts.append(char_cnn(params.char, s.char_ids[i]))
        if pos_rows is not None:
            parts.append(ad.row(pos_rows, i))
        if ner_rows is not None:
            parts.append(ad.row(ner_rows, i))
        if cfg.use_em:
            if s.em is None:
                raise ValueError("exact-match flags missing; run the preprocessor first")
            parts.append(Tensor(np.asarray(s.em[i], dtype=np.float64)))
        feats.append(ad.concat(parts, axis=0) if len(parts) > 1 else parts[0])
    return feats


def encode_inputs(
    params: DMANParams,
    ex: NLIExample,
    training: bool = False,
    rng=None,
    keep_prob: float = 1.0,
) -> tuple[list[Tensor], list[Tensor]]:
    """Per-token encoding states (p_1..n, u_1..m), each 2h wide."""

    def side(s: TokenizedSentence) -> list[Tensor]:
        if len(s) == 0:
            raise DimensionError("cannot encode an empty sentence")
        feats = _token_features(params, s)
        feats = [ad.dropout(f, keep_prob, training, rng) for f in feats]
        return bilstm(params.enc_fwd, params.enc_bwd, feats)

    return side(ex.premise), side(ex.hypothesis)


def clause_vectors(params: DMANParams, ex: NLIExample) -> tuple[Tensor, Tensor]:
    """Transferred encoder vectors (r_p, r_h); zeros when the encoder is off."""
    cfg = params.config
    if cfg.use_encoder:
        r_p = encode_sentence(params.encoder, ex.premise, params.word_table)
        r_h = encode_sentence(params.encoder, ex.hypothesis, params.word_table)
        return r_p, r_h
    width = cfg.encoder_repr_width
    return Tensor(np.zeros(width)), Tensor(np.zeros(width))


def similarity_matrix(
    params: DMANParams,
    p_states: Sequence[Tensor],
    u_states: Sequence[Tensor],
    r_p: Tensor,
    r_h: Tensor,
) -> Tensor:
    """A[i, j] = v1 · [p_i; u_j; p_i * u_j; r_p; r_h], computed as the exact
    algebraic decomposition: two rank-one terms, a bilinear term, and the
    constant clause-vector contribution shared by every cell."""
    cfg = params.config
    h2 = 2 * cfg.hidden_size
    ew = cfg.encoder_repr_width
    if r_p.shape != (ew,) or r_h.shape != (ew,):
        raise DimensionError(f"clause vectors {r_p.shape}/{r_h.shape} must be ({ew},)")
    v1 = params.v1
    v_p = ad.narrow(v1, 0, 0, h2)
    v_u = ad.narrow(v1, 0, h2, h2)
    v_prod = ad.narrow(v1, 0, 2 * h2, h2)
    v_rp = ad.narrow(v1, 0, 3 * h2, ew)
    v_rh = ad.narrow(v1, 0, 3 * h2 + ew, ew)

    p = stack_rows(p_states)
    u = stack_rows(u_states)
    n, m = p.shape[0], u.shape[0]
    ones_n = Tensor(np.ones((n, 1)))
    ones_m = Tensor(np.ones((1, m)))

    a_rows = ad.matmul(ad.reshape(ad.matvec(p, v_p), (n, 1)), ones_m)
    a_cols = ad.matmul(ones_n, ad.reshape(ad.matvec(u, v_u), (1, m)))
    a_bilinear = ad.matmul(ad.mul(p, tile_rows(v_prod, n)), ad.transpose(u))
    const = ad.add(ad.sum_all(ad.mul(v_rp, r_p)), ad.sum_all(ad.mul(v_rh, r_h)))
    a_const = ad.matmul(ad.matmul(ones_n, ad.reshape(const, (1, 1))), ones_m)
    return ad.add(ad.add(a_rows, a_cols), ad.add(a_bilinear, a_const))


def attend(
    a: Tensor, p_states: Sequence[Tensor], u_states: Sequence[Tensor], softmax_weights: bool = True
) -> tuple[Tensor, Tensor]:
    """Cross-attention summaries: (u-tilde rows for each premise position,
    p-tilde rows for each hypothesis position)."""
    p = stack_rows(p_states)
    u = stack_rows(u_states)
    if softmax_weights:
        u_tilde = ad.matmul(ad.softmax(a, axis=1), u)
        p_tilde = ad.matmul(ad.transpose(ad.softmax(a, axis=0)), p)
    else:
        u_tilde = ad.matmul(a, u)
        p_tilde = ad.matmul(ad.transpose(a), p)
    return u_tilde, p_tilde


def local_inference(params: DMANParams, x: Tensor, x_tilde: Tensor) -> Tensor:
    """Fuse one position with its attended counterpart (single-vector form)."""
    if x.shape != x_tilde.shape:
        raise DimensionError(f"widths differ: {x.shape} vs {x_tilde.shape}")
    feats = ad.concat([x, x_tilde, ad.sub(x, x_tilde), ad.mul(x, x_tilde)], axis=0)
    from .layers import feed_forward_relu

    return feed_forward_relu(params.infer_w, params.infer_b, feats)


def _local_inference_rows(params: DMANParams, x: Tensor, x_tilde: Tensor) -> Tensor:
    feats = ad.concat([x, x_tilde, ad.sub(x, x_tilde), ad.mul(x, x_tilde)], axis=1)
    return ad.relu(linear_rows(feats, params.infer_w, params.infer_b))


def model_and_pool(
    params: DMANParams,
    p_hat: Tensor,
    u_hat: Tensor,
    training: bool = False,
    rng=None,
    keep_prob: float = 1.0,
) -> tuple[Tensor, Tensor]:
    """Per-side modeling BiLSTMs (separate weights), then attention pooling
    with the side-specific score vectors (deliberately not shared)."""

    def run(mat: Tensor, fwd: LSTMWeights, bwd: LSTMWeights, pool: AttentionPoolWeights) -> Tensor:
        vecs = [ad.row(mat, i) for i in range(mat.shape[0])]
        vecs = [ad.dropout(v, keep_prob, training, rng) for v in vecs]
        return attention_pool(pool, bilstm(fwd, bwd, vecs))

    p_m = run(p_hat, params.model_p_fwd, params.model_p_bwd, params.v2)
    u_m = run(u_hat, params.model_h_fwd, params.model_h_bwd, params.v3)
    return p_m, u_m


def predict(
    params: DMANParams,
    p_m: Tensor,
    u_m: Tensor,
    r_p: Tensor,
    r_h: Tensor,
    training: bool = False,
    rng=None,
    keep_prob: float = 1.0,
) -> Tensor:
    """Output distribution over (entailment, neutral, contradiction)."""
    feats = ad.concat([p_m, u_m, ad.mul(p_m, u_m), ad.mul(r_p, r_h)], axis=0)
    feats = ad.dropout(feats, keep_prob, training, rng)
    return ad.softmax(ad.matvec(params.w_out, feats), axis=0)


@dataclass
class ForwardResult:
    d: Tensor  # 3-way distribution
    a: Tensor | None = None  # raw similarity matrix (n, m)


def forward(
    params: DMANParams,
    ex: NLIExample,
    training: bool = False,
    rng=None,
    keep_prob: float = 1.0,
    want_attention: bool = False,
) -> ForwardResult:
    cfg = params.config
    r_p, r_h = clause_vectors(params, ex)
    if cfg.only_encoder:
        feats = ad.concat([r_p, r_h, ad.mul(r_p, r_h)], axis=0)
        d = ad.softmax(ad.matvec(params.w_only, feats), axis=0)
        return ForwardResult(d=d)
    p_states, u_states = encode_inputs(params, ex, training, rng, keep_prob)
    a = similarity_matrix(params, p_states, u_states, r_p, r_h)
    u_tilde, p_tilde = attend(a, p_states, u_states, cfg.attention_softmax)
    p_hat = _local_inference_rows(params, stack_rows(p_states), u_tilde)
    u_hat = _local_inference_rows(params, stack_rows(u_states), p_tilde)
    p_m, u_m = model_and_pool(params, p_hat, u_hat, training, rng, keep_prob)
    d = predict(params, p_m, u_m, r_p, r_h, training, rng, keep_prob)
    return ForwardResult(d=d, a=a if want_attention else None)


# ---------------------------------------------------------------------------
# attention dumps


@dataclass
class AttentionDump:
    premise_tokens: list[str]
    hypothesis_tokens: list[str]
    raw: list[list[float]]
    row_normalized: list[list[float]]
    col_normalized: list[list[float]]

    def to_json_dict(self) -> dict:
        return {
            "premise_tokens": self.premise_tokens,
            "hypothesis_tokens": self.hypothesis_tokens,
            "raw": self.raw,
            "row_normalized": self.row_normalized,
            "col_normalized": self.col_normalized,
        }


def dump_attention(params: DMANParams, ex: NLIExample) -> AttentionDump:
    """Raw and normalized similarity matrices for external plotting."""
    if params.config.only_encoder:
        raise ValueError("the only-encoder model has no similarity matrix to dump")
    with ad.no_grad():
        result = forward(params, ex, training=False, want_attention=True)
        raw = result.a.values
        rows_n = ad.softmax(Tensor(raw), axis=1).values
        cols_n = ad.softmax(Tensor(raw), axis=0).values
    return AttentionDump(
        premise_tokens=list(ex.premise.tokens),
        hypothesis_tokens=list(ex.hypothesis.tokens),
        raw=raw.tolist(),
        row_normalized=rows_n.tolist(),
        col_normalized=cols_n.tolist(),
    )


# ---------------------------------------------------------------------------
# model checkpoints

MODEL_KIND = "nli_model"


def save_model(params: DMANParams, path, extra_header: dict | None = None) -> None:
    header = {
        "kind": MODEL_KIND,
        "config": params.config.to_dict(),
        "word_vocab": params.word_table.vocab.tokens,
        "pos_vocab": params.pos_vocab.tokens,
        "ner_vocab": params.ner_vocab.tokens,
        "charset": params.charset,
        "trainable": sorted(params.trainable_tensors().keys()),
    }
    if extra_header:
        header.update(extra_header)
    save_checkpoint(path, header, {k: t.values for k, t in params.named_tensors().items()})


def load_model(path) -> tuple[DMANParams, dict]:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != MODEL_KIND:
        raise CheckpointError(f"{path}: not a model checkpoint (kind={header.get('kind')!r})")
    config = DMANConfig.from_dict(header["config"])
    word_vocab = Vocab(header["word_vocab"][2:]).freeze()
    pos_vocab = Vocab(header["pos_vocab"][2:]).freeze()
    ner_vocab = Vocab(header["ner_vocab"][2:]).freeze()
    trainable = set(header["trainable"])

    def t(name: str) -> Tensor:
        return Tensor(tensors[name], requires_grad=name in trainable)

    def lstm(prefix: str) -> LSTMWeights | None:
        if f"{prefix}.w_x" not in tensors:
            return None
        return LSTMWeights(t(f"{prefix}.w_x"), t(f"{prefix}.w_h"), t(f"{prefix}.b"))

    word_table = EmbeddingTable(word_vocab, t("embed.word"), trainable=False)
    params = DMANParams(
        config=config,
        word_table=word_table,
        pos_vocab=pos_vocab,
        ner_vocab=ner_vocab,
        charset=header["charset"],
    )
    if "embed.pos" in tensors:
        params.pos_table = t("embed.pos")
    if "embed.ner" in tensors:
        params.ner_table = t("embed.ner")
    if "char.table" in tensors:
        params.char = CharCNNWeights(
            t("char.table"), t("char.filters"), t("char.bias"), config.char_width
        )
    params.enc_fwd = lstm("enc.fwd")
    params.enc_bwd = lstm("enc.bwd")
    params.model_p_fwd = lstm("model.p.fwd")
    params.model_p_bwd = lstm("model.p.bwd")
    params.model_h_fwd = lstm("model.h.fwd")
    params.model_h_bwd = lstm("model.h.bwd")
    if "infer.w" in tensors:
        params.infer_w = t("infer.w")
        params.infer_b = t("infer.b")
    if "sim.v1" in tensors:
        params.v1 = t("sim.v1")
    if "pool.v2" in tensors:
        params.v2 = AttentionPoolWeights(t("pool.v2"))
        params.v3 = AttentionPoolWeights(t("pool.v3"))
    if "out.w" in tensors:
        params.w_out = t("out.w")
    if "encoder.fwd.w_x" in tensors:
        params.encoder = EncoderParams(
            LSTMWeights(t("encoder.fwd.w_x"), t("encoder.fwd.w_h"), t("encoder.fwd.b")),
            LSTMWeights(t("encoder.bwd.w_x"), t("encoder.bwd.w_h"), t("encoder.bwd.b")),
        )
    if "out.only.w" in tensors:
        params.w_only = t("out.only.w")
    return params, header


def ensemble_compatible(headers: Sequence[dict]) -> bool:
    """Same architecture: identical config and vocab lists across checkpoints."""
    if not headers:
        return False
    first = headers[0]
    keys = ("config", "word_vocab", "pos_vocab", "ner_vocab", "charset")
    return all(all(h.get(k) == first.get(k) for k in keys) for h in headers[1:])
