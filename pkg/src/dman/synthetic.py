"""Template-generated smoke corpora.

Desk-scale stand-ins for the real pretraining and entailment datasets: a
marker corpus whose connective is fully determined by a keyword in the
second clause, and an entailment corpus whose label is determined either by
that same keyword inventory (so a pretrained clause encoder transfers) or
by premise/hypothesis noun agreement (so word-level interaction matters).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_MARKERS, LABELS

# one cue word per marker; appears in the second clause of marker sentences
# and in hypothesis sentences of keyword-labeled entailment examples
MARKER_KEYWORDS = {
    "but": "storm",
    "because": "hunger",
    "if": "ticket",
    "when": "bell",
    "so": "nap",
    "although": "mud",
    "before": "dawn",
    "still": "statue",
}

# coarse logical class each connective hints at
LABEL_OF_MARKER = {
    "but": "contradiction",
    "although": "contradiction",
    "still": "contradiction",
    "so": "entailment",
    "because": "entailment",
    "if": "neutral",
    "when": "neutral",
    "before": "neutral",
}

NOUNS = ["cat", "dog", "bird", "horse", "fox", "owl", "fish", "frog", "bear", "wolf"]
VERBS = ["walked", "jumped", "slept", "waited", "played", "rested"]
ADVERBS = ["slowly", "quietly", "early", "late"]
PLACES = ["river", "garden", "bridge", "meadow", "barn", "gate"]
TAILS = ["today", "nearby", "again", "twice"]
PLAIN = ["lamp", "stone", "chair", "basket"]


def vocabulary() -> list[str]:
    words = set(NOUNS + VERBS + ADVERBS + PLACES + TAILS + PLAIN)
    words.update(MARKER_KEYWORDS.values())
    words.update(DEFAULT_MARKERS)
    words.update(["the", "saw", "near", "beside", ",", "."])
    return sorted(words)


def write_embeddings(path, dim: int = 16, seed: int = 7, scale: float = 1.5) -> Path:
    """Random but seeded vectors for the synthetic vocabulary, GloVe text format.

    The scale matters: unit-ish inputs keep desk-scale recurrent nets out of
    the flat small-activation regime so few-epoch runs actually move.
    """
    rng = np.random.default_rng(seed)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for word in vocabulary():
            vec = rng.uniform(-scale, scale, size=dim)
            fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")
    return path


def write_marker_text(path, n: int, seed: int = 0, markers=DEFAULT_MARKERS) -> Path:
    """Raw text, one sentence per line, each splitting into a marker pair
    whose marker is fully determined by the keyword in the right clause."""
    rng = np.random.default_rng(seed)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for i in range(n):
            marker = markers[i % len(markers)]
            keyword = MARKER_KEYWORDS[marker]
            left = f"the {rng.choice(NOUNS)} {rng.choice(VERBS)} {rng.choice(ADVERBS)}"
            right = f"the {keyword} {rng.choice(VERBS)} {rng.choice(ADVERBS)}"
            fh.write(f"{left} , {marker} {right} .\n")
    return path


def _annotators(rng, gold: str) -> list[str]:
    if rng.random() < 0.7:
        return [gold] * 5
    others = [l for l in LABELS if l != gold]
    labels = [gold, gold, gold, str(rng.choice(others)), str(rng.choice(others))]
    rng.shuffle(labels)
    return labels


def _clause(rng, noun: str, verb: str | None = None) -> str:
    verb = verb if verb is not None else str(rng.choice(VERBS))
    return f"the {noun} {verb} {rng.choice(ADVERBS)} ."


def _other(rng, pool, avoid: str) -> str:
    return str(rng.choice([w for w in pool if w != avoid]))


def nli_rows(n: int, seed: int = 0, interaction_fraction: float = 0.5) -> list[dict]:
    """Entailment examples, labels cycling for exact balance when n % 3 == 0.

    Keyword examples: the hypothesis carries a marker keyword in its noun
    slot and the label is that marker's class. Interaction examples
    (entailment/contradiction only): entailment iff noun-match equals
    verb-match (both or neither), contradiction iff exactly one matches, so
    word-level alignment is what counts and no single sentence-vector score
    separates the classes.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        gold = LABELS[i % 3]
        p_noun = str(rng.choice(NOUNS))
        p_verb = str(rng.choice(VERBS))
        premise = _clause(rng, p_noun, p_verb)
        use_interaction = gold != "neutral" and rng.random() < interaction_fraction
        if use_interaction:
            match_noun = bool(rng.integers(2))
            match_verb = match_noun if gold == "entailment" else not match_noun
            h_noun = p_noun if match_noun else _other(rng, NOUNS, p_noun)
            h_verb = p_verb if match_verb else _other(rng, VERBS, p_verb)
            hypothesis = _clause(rng, h_noun, h_verb)
        else:
            marker = str(rng.choice([m for m in DEFAULT_MARKERS if LABEL_OF_MARKER[m] == gold]))
            hypothesis = _clause(rng, MARKER_KEYWORDS[marker], _other(rng, VERBS, p_verb))
        rows.append(
            {
                "sentence1": premise,
                "sentence2": hypothesis,
                "gold_label": gold,
                "annotator_labels": _annotators(rng, gold),
            }
        )
    return rows


def write_nli_jsonl(path, rows: list[dict]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
