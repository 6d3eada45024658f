"""Objectives, the policy-gradient estimators, optimizers, and train loops.

The hybrid objective is lam * J_CE + (1 - lam) * J_RL, where J_RL is the
negative expected annotator-agreement reward. Because the action space has
three labels, the expectation can be computed exactly by enumeration; that
is the training default, with REINFORCE sampling available for fidelity.
The policy forward for the RL term is deterministic (dropout off).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import LABELS, LABEL_TO_ID, NLIExample
from .model import DMANConfig, DMANParams, forward, init_params

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; aborts the run with a diagnostic."""


# ---------------------------------------------------------------------------
# losses and reward


def ce_loss(d: Tensor, gold: str | int) -> Tensor:
    """Negative log probability of the gold label; zero is clamped at 1e-12."""
    gid = LABEL_TO_ID[gold] if isinstance(gold, str) else int(gold)
    if d.values[gid] <= 0.0:
        logger.warning("gold-label probability is 0; clamping at 1e-12")
    picked = ad.clamp_min(ad.narrow(d, 0, gid, 1), 1e-12)
    return ad.reshape(ad.scale(ad.log(picked), -1.0), ())


def reward(label: str, annotators: Sequence[str]) -> float:
    """Fraction of annotators that chose `label`; always in [0, 1]."""
    if not annotators:
        raise ValueError("annotator label list is empty")
    return annotators.count(label) / len(annotators)


def reward_vector(annotators: Sequence[str]) -> np.ndarray:
    return np.array([reward(l, annotators) for l in LABELS])


def rl_loss_exact(d: Tensor, annotators: Sequence[str]) -> Tensor:
    """Negative expected reward by exact 3-action enumeration."""
    rvec = Tensor(reward_vector(annotators))
    return ad.reshape(ad.scale(ad.sum_all(ad.mul(d, rvec)), -1.0), ())


def rl_loss_sampled(
    d: Tensor, annotators: Sequence[str], k_samples: int, rng
) -> tuple[float, Tensor]:
    """REINFORCE estimate of the negative expected reward.

    Returns (loss estimate, surrogate tensor). The estimate is -mean(R) over
    k sampled labels; backward of the surrogate gives the score-function
    gradient -(1/k) sum R(l_s) * grad log d_{l_s}. No baseline by default.
    """
    if k_samples < 1:
        raise ValueError(f"k_samples must be >= 1, got {k_samples}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    probs = np.clip(d.values, 0.0, None)
    probs = probs / probs.sum()
    draws = rng.choice(len(LABELS), size=k_samples, p=probs)
    rvec = reward_vector(annotators)
    counts = np.bincount(draws, minlength=len(LABELS))
    # grouped by label: -(1/k) sum_s R(l_s) == -(counts/k) · rvec, and exact
    # when sampling is degenerate
    estimate = -float((counts / k_samples) @ rvec)
    weights = Tensor(-(counts * rvec) / k_samples)
    logd = ad.log(ad.clamp_min(d, 1e-12))
    surrogate = ad.sum_all(ad.mul(logd, weights))
    return estimate, surrogate


def rl_loss_sampled_with_baseline(
    d: Tensor, annotators: Sequence[str], k_samples: int, rng, baseline: float
) -> tuple[float, Tensor]:
    """Variance-study variant: subtracts a fixed baseline from the reward
    inside the score-function term (the loss estimate is unchanged)."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    probs = np.clip(d.values, 0.0, None)
    probs = probs / probs.sum()
    draws = rng.choice(len(LABELS), size=k_samples, p=probs)
    rvec = reward_vector(annotators)
    counts = np.bincount(draws, minlength=len(LABELS))
    estimate = -float((counts / k_samples) @ rvec)
    weights = Tensor(-(counts * (rvec - baseline)) / k_samples)
    surrogate = ad.sum_all(ad.mul(ad.log(ad.clamp_min(d, 1e-12)), weights))
    return estimate, surrogate


def combined_loss(ce: Tensor, rl: Tensor, lam: float) -> Tensor:
    """lam * ce + (1 - lam) * rl."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return ad.add(ad.scale(ce, lam), ad.scale(rl, 1.0 - lam))


# ---------------------------------------------------------------------------
# optimizers and schedules


class AdaDelta:
    """Running-average adaptive updates; `lr` is a global multiplier on the
    (nominally learning-rate-free) raw delta."""

    def __init__(self, rho: float = 0.95, eps: float = 1e-8, lr: float = 1.0):
        if not (0.0 < rho < 1.0):
            raise ValueError(f"rho must be in (0, 1), got {rho}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.sq_grad: dict[str, np.ndarray] = {}
        self.sq_delta: dict[str, np.ndarray] = {}

    def step(self, named_tensors: dict[str, Tensor]) -> None:
        for name, p in named_tensors.items():
            if p.grad is None:
                continue
            g = p.grad
            if g.shape != p.values.shape:
                raise ad.DimensionError(f"{name}: grad shape {g.shape} != value {p.values.shape}")
            eg2 = self.sq_grad.setdefault(name, np.zeros_like(p.values))
            ed2 = self.sq_delta.setdefault(name, np.zeros_like(p.values))
            eg2 *= self.rho
            eg2 += (1.0 - self.rho) * g * g
            delta = -np.sqrt(ed2 + self.eps) / np.sqrt(eg2 + self.eps) * g
            ed2 *= self.rho
            ed2 += (1.0 - self.rho) * delta * delta
            p.values += self.lr * delta
            p.zero_grad()


def adadelta_step(state: AdaDelta, named_tensors: dict[str, Tensor]) -> dict[str, Tensor]:
    state.step(named_tensors)
    return named_tensors


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, named_tensors: dict[str, Tensor]) -> None:
        for p in named_tensors.values():
            if p.grad is not None:
                p.values -= self.lr * p.grad
                p.zero_grad()


def dropout_schedule(
    step: int,
    initial: float = 0.9,
    decay: float = 0.97,
    interval: int = 5000,
    floor: float = 0.5,
) -> float:
    """Keep probability initial * decay^(step // interval), clamped to [floor, 1]."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    keep = initial * decay ** (step // interval)
    return min(1.0, max(floor, keep))


# ---------------------------------------------------------------------------
# train / eval loops


@dataclass
class TrainConfig:
    lam: float = 0.2
    batch_size: int = 36
    lr: float = 0.6
    rho: float = 0.95
    eps: float = 1e-8
    keep_initial: float = 0.9
    keep_decay: float = 0.97
    keep_interval: int = 5000
    keep_floor: float = 0.5
    estimator: str = "exact"  # or "sampled"
    rl_samples: int = 1
    epochs: int = 5
    eval_every: int | None = None  # steps; None = once per epoch
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.estimator not in ("exact", "sampled"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass
class EvalResult:
    accuracy: float
    confusion: list[list[int]]  # confusion[gold][pred], label order fixed
    n: int


def predict_distribution(params: DMANParams, ex: NLIExample) -> np.ndarray:
    with ad.no_grad():
        return forward(params, ex, training=False).d.values.copy()


def evaluate(params: DMANParams, examples: Sequence[NLIExample]) -> EvalResult:
    confusion = [[0] * len(LABELS) for _ in LABELS]
    hits = 0
    for ex in examples:
        pred = int(np.argmax(predict_distribution(params, ex)))
        gold = LABEL_TO_ID[ex.gold_label]
        confusion[gold][pred] += 1
        hits += int(pred == gold)
    n = len(examples)
    return EvalResult(accuracy=hits / n if n else 0.0, confusion=confusion, n=n)


def ensemble_eval(models: Sequence[DMANParams], examples: Sequence[NLIExample]) -> EvalResult:
    """Average the output distributions across models, then argmax."""
    if not models:
        raise ValueError("ensemble needs at least one model")
    first = models[0].config
    for m in models[1:]:
        if m.config != first:
            raise ValueError("ensemble members must share an identical config")
    confusion = [[0] * len(LABELS) for _ in LABELS]
    hits = 0
    for ex in examples:
        avg = np.mean([predict_distribution(m, ex) for m in models], axis=0)
        pred = int(np.argmax(avg))
        gold = LABEL_TO_ID[ex.gold_label]
        confusion[gold][pred] += 1
        hits += int(pred == gold)
    n = len(examples)
    return EvalResult(accuracy=hits / n if n else 0.0, confusion=confusion, n=n)


@dataclass
class TrainResult:
    params: DMANParams
    log: list[dict] = field(default_factory=list)
    best_dev_acc: float = 0.0
    best_step: int = 0


def _substream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, which]))


def train_nli(
    train: Sequence[NLIExample],
    dev: Sequence[NLIExample],
    model_config: DMANConfig,
    train_config: TrainConfig,
    word_table,
    pos_vocab,
    ner_vocab,
    charset=None,
    encoder=None,
) -> TrainResult:
    """AdaDelta training of the full model under the hybrid objective.

    Deterministic given the seed: init, dropout, sampling, and shuffling
    draw from named substreams. Returns the best-dev snapshot (ties broken
    by the earlier step) and a log with one record per eval point.
    """
    if not train or not dev:
        raise ValueError("train and dev splits must be nonempty")
    params = init_params(
        model_config, word_table, pos_vocab, ner_vocab,
        seed=train_config.seed, encoder=encoder, charset=charset,
    )
    tensors = params.trainable_tensors()
    optimizer = AdaDelta(rho=train_config.rho, eps=train_config.eps, lr=train_config.lr)
    dropout_rng = _substream(train_config.seed, 2)
    sampling_rng = _substream(train_config.seed, 3)
    shuffle_rng = _substream(train_config.seed, 4)

    lam = train_config.lam
    result = TrainResult(params=params)
    best: tuple[float, int] | None = None
    best_state: dict[str, np.ndarray] | None = None
    step = 0
    window: list[tuple[float, float | None, float | None]] = []  # (loss, ce, rl)

    def eval_point(keep: float) -> None:
        nonlocal best, best_state
        dev_acc = evaluate(params, dev).accuracy
        losses = [w[0] for w in window]
        ces = [w[1] for w in window if w[1] is not None]
        rls = [w[2] for w in window if w[2] is not None]
        result.log.append(
            {
                "step": step,
                "train_loss": float(np.mean(losses)) if losses else None,
                "ce": float(np.mean(ces)) if ces else None,
                "rl": float(np.mean(rls)) if rls else None,
                "dev_acc": dev_acc,
                "keep_prob": keep,
                "lr": train_config.lr,
            }
        )
        window.clear()
        if best is None or dev_acc > best[0]:
            best = (dev_acc, step)
            best_state = {k: t.values.copy() for k, t in tensors.items()}

    for _epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(len(train))
        for start in range(0, len(order), train_config.batch_size):
            batch = [train[i] for i in order[start : start + train_config.batch_size]]
            keep = dropout_schedule(
                step,
                train_config.keep_initial,
                train_config.keep_decay,
                train_config.keep_interval,
                train_config.keep_floor,
            )
            ad.reset_tape()
            ce_terms: list[Tensor] = []
            rl_terms: list[Tensor] = []
            for ex in batch:
                if lam > 0.0:
                    d_train = forward(params, ex, training=True, rng=dropout_rng, keep_prob=keep).d
                    ce_terms.append(ce_loss(d_train, ex.gold_label))
                if lam < 1.0:
                    d_policy = forward(params, ex, training=False).d
                    if train_config.estimator == "exact":
                        rl_terms.append(rl_loss_exact(d_policy, ex.annotator_labels))
                    else:
                        _, surrogate = rl_loss_sampled(
                            d_policy, ex.annotator_labels, train_config.rl_samples, sampling_rng
                        )
                        rl_terms.append(surrogate)

            def mean(terms: list[Tensor]) -> Tensor:
                total = terms[0]
                for t in terms[1:]:
                    total = ad.add(total, t)
                return ad.scale(total, 1.0 / len(terms))

            if lam == 1.0:
                j = mean(ce_terms)
                ce_val, rl_val = j.item(), None
            elif lam == 0.0:
                j = mean(rl_terms)
                ce_val, rl_val = None, j.item()
            else:
                j_ce, j_rl = mean(ce_terms), mean(rl_terms)
                j = combined_loss(j_ce, j_rl, lam)
                ce_val, rl_val = j_ce.item(), j_rl.item()
            loss_val = j.item()
            if not np.isfinite(loss_val):
                raise TrainingDivergedError(f"non-finite loss {loss_val} at step {step}")
            ad.backward(j)
            optimizer.step(tensors)
            window.append((loss_val, ce_val, rl_val))
            step += 1
            if train_config.eval_every is not None and step % train_config.eval_every == 0:
                eval_point(keep)
        if train_config.eval_every is None:
            eval_point(dropout_schedule(step, train_config.keep_initial, train_config.keep_decay,
                                        train_config.keep_interval, train_config.keep_floor))

    if window:
        eval_point(dropout_schedule(step, train_config.keep_initial, train_config.keep_decay,
                                    train_config.keep_interval, train_config.keep_floor))
    if best_state is not None:
        for name, saved in best_state.items():
            tensors[name].values[...] = saved
            tensors[name].zero_grad()
    result.best_dev_acc, result.best_step = best
    ad.reset_tape()
    return result
