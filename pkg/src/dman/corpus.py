"""Text processing and dataset I/O for the entailment and marker pipelines.

Covers tokenization, vocabularies and embedding tables, POS/NER tagging
(sidecar files with a rule-based fallback), exact-match features, JSONL /
TSV readers and writers, discourse-marker pair extraction, and annotator
label statistics. Readers are streaming and stateless per file.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .autodiff import Tensor

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

LABELS = ("entailment", "neutral", "contradiction")
LABEL_TO_ID = {l: i for i, l in enumerate(LABELS)}

DEFAULT_MARKERS = ("but", "because", "if", "when", "so", "although", "before", "still")


class CorpusFormatError(ValueError):
    """Malformed input file; message names the offending line."""


# ---------------------------------------------------------------------------
# tokenization


_PUNCT = set(string.punctuation)

# suffix contractions split off as their own token, longest first
_CONTRACTIONS = ("n't", "'re", "'ve", "'ll", "'m", "'d", "'s")


def _split_chunk(chunk: str) -> list[str]:
    leading: list[str] = []
    while chunk and chunk[0] in _PUNCT:
        leading.append(chunk[0])
        chunk = chunk[1:]
    trailing: list[str] = []
    while chunk and chunk[-1] in _PUNCT and not any(
        chunk.lower().endswith(c) for c in _CONTRACTIONS
    ):
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    trailing.reverse()
    core: list[str] = []
    if chunk:
        low = chunk.lower()
        for c in _CONTRACTIONS:
            if low.endswith(c) and len(chunk) > len(c):
                core = [chunk[: -len(c)], chunk[-len(c) :]]
                break
        else:
            core = [chunk]
    return leading + core + trailing


def tokenize(text: str) -> list[str]:
    """Whitespace split, punctuation detached, contractions split; case kept."""
    out: list[str] = []
    for chunk in text.split():
        out.extend(_split_chunk(chunk))
    return out


# ---------------------------------------------------------------------------
# stemming (the deterministic "lemma form" stand-in)

# doubled final consonants that get undoubled after stripping -ing/-ed
_UNDOUBLE = set("bdgmnprt")

_STEM_RULES = (("sses", "ss"), ("ies", "y"), ("ing", ""), ("ed", ""), ("es", ""), ("s", ""), ("ly", ""))


def stem(token: str) -> str:
    """Fixed-rule suffix stripper; both sides of a comparison use the same rules."""
    w = token.lower()
    for suffix, repl in _STEM_RULES:
        if not w.endswith(suffix):
            continue
        if suffix == "s" and w.endswith("ss"):
            continue
        cand = w[: -len(suffix)] + repl
        if len(cand) < 2:
            continue
        if suffix in ("ing", "ed") and len(cand) >= 2 and cand[-1] == cand[-2] and cand[-1] in _UNDOUBLE:
            cand = cand[:-1]
        return cand
    return w


# ---------------------------------------------------------------------------
# vocabulary and embeddings


class Vocab:
    """Token ids with reserved 0 = pad and 1 = unk; lookups never fail."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens = [PAD_TOKEN, UNK_TOKEN]
        self._ids = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        self.frozen = False
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        existing = self._ids.get(token)
        if existing is not None:
            return existing
        if self.frozen:
            return UNK_ID
        idx = len(self._tokens)
        self._tokens.append(token)
        self._ids[token] = idx
        return idx

    def freeze(self) -> "Vocab":
        self.frozen = True
        return self

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)


DEFAULT_CHARSET = (
    [PAD_TOKEN, UNK_TOKEN]
    + list("abcdefghijklmnopqrstuvwxyz")
    + list("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
    + list("0123456789")
    + list(string.punctuation)
)


def charset_ids(token: str, charset: Sequence[str] | None = None) -> list[int]:
    table = {c: i for i, c in enumerate(charset or DEFAULT_CHARSET)}
    return [table.get(ch, UNK_ID) for ch in token]


@dataclass
class EmbeddingTable:
    vocab: Vocab
    tensor: Tensor  # (|vocab|, dim)
    trainable: bool

    def __post_init__(self):
        if self.tensor.shape[0] != len(self.vocab):
            raise CorpusFormatError(
                f"embedding rows {self.tensor.shape[0]} != vocab size {len(self.vocab)}"
            )

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]


def load_embeddings(
    path, vocab_mode: str = "build_from_file", vocab: Vocab | None = None
) -> tuple[Vocab, EmbeddingTable]:
    """Parse `token v1 ... vd` lines into a frozen-vocab embedding table.

    Row 0 (pad) is zeros, row 1 (unk) is the column mean of all loaded
    vectors; unknown tokens therefore look up the mean vector. In
    ``project_onto`` mode an existing vocab supplies the row order and
    tokens absent from the file get the unk vector.
    """
    path = Path(path)
    loaded: dict[str, np.ndarray] = {}
    dim = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise CorpusFormatError(f"{path}: line {lineno}: no vector components")
            if len(vals) != dim:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: expected {dim} components, got {len(vals)}"
                )
            try:
                vec = np.array([float(v) for v in vals])
            except ValueError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from None
            loaded[token] = vec
    if not loaded:
        raise CorpusFormatError(f"{path}: no embedding rows")
    mean = np.mean(np.stack(list(loaded.values())), axis=0)

    if vocab_mode == "build_from_file":
        out_vocab = Vocab(loaded.keys()).freeze()
    elif vocab_mode == "project_onto":
        if vocab is None:
            raise ValueError("project_onto mode needs a target vocab")
        out_vocab = vocab
    else:
        raise ValueError(f"unknown vocab_mode {vocab_mode!r}")

    matrix = np.zeros((len(out_vocab), dim))
    matrix[UNK_ID] = mean
    for idx in range(2, len(out_vocab)):
        tok = out_vocab.token(idx)
        matrix[idx] = loaded.get(tok, mean)
    table = EmbeddingTable(out_vocab, Tensor(matrix, requires_grad=False), trainable=False)
    return out_vocab, table


def write_embeddings(path, vocab: Vocab, matrix: np.ndarray) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for idx in range(2, len(vocab)):
            comps = " ".join(repr(float(v)) for v in matrix[idx])
            fh.write(f"{vocab.token(idx)} {comps}\n")


# ---------------------------------------------------------------------------
# tokenized sentences and linguistic features


@dataclass
class TokenizedSentence:
    tokens: list[str]
    text: str = ""
    word_ids: list[int] | None = None
    char_ids: list[list[int]] | None = None
    pos_tags: list[str] | None = None
    ner_tags: list[str] | None = None
    pos_ids: list[int] | None = None
    ner_ids: list[int] | None = None
    em: list[tuple[int, int, int]] | None = None  # (exact, lowercase, lemma) per token

    def __post_init__(self):
        if not self.text:
            self.text = " ".join(self.tokens)
        n = len(self.tokens)
        for name in ("word_ids", "char_ids", "pos_tags", "ner_tags", "pos_ids", "ner_ids", "em"):
            val = getattr(self, name)
            if val is not None and len(val) != n:
                raise CorpusFormatError(f"{name} length {len(val)} != {n} tokens")

    def __len__(self) -> int:
        return len(self.tokens)


def sentence(text: str) -> TokenizedSentence:
    return TokenizedSentence(tokens=tokenize(text), text=text)


_DET = {"a", "an", "the", "this", "that", "these", "those"}
_PRON = {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them"}
_ADP = {"in", "on", "at", "of", "to", "for", "with", "from", "by", "over", "under"}
_CONJ = {"and", "or", "but", "so", "because", "if", "when", "although", "before", "while"}
_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "al", "ish")

RULE_POS_TAGS = ("PUNCT", "NUM", "DET", "PRON", "ADP", "CONJ", "VERB", "ADV", "ADJ", "NOUN")


def rule_pos_tag(token: str) -> str:
    if all(ch in _PUNCT for ch in token):
        return "PUNCT"
    if re.fullmatch(r"[0-9][0-9.,]*", token):
        return "NUM"
    low = token.lower()
    if low in _DET:
        return "DET"
    if low in _PRON:
        return "PRON"
    if low in _ADP:
        return "ADP"
    if low in _CONJ:
        return "CONJ"
    if low.endswith("ing") or low.endswith("ed"):
        return "VERB"
    if low.endswith("ly"):
        return "ADV"
    if low.endswith(_ADJ_SUFFIXES):
        return "ADJ"
    return "NOUN"


def rule_ner_tag(token: str, position: int) -> str:
    # capitalized tokens past the sentence start read as entity mentions
    if position > 0 and token[:1].isupper():
        return "ENT"
    return "O"


def attach_tags(
    s: TokenizedSentence,
    sidecar: tuple[Sequence[str], Sequence[str]] | None = None,
    pos_vocab: Vocab | None = None,
    ner_vocab: Vocab | None = None,
) -> TokenizedSentence:
    """Fill POS/NER tag strings (sidecar or rule tagger) and optionally ids."""
    if sidecar is not None:
        pos, ner = list(sidecar[0]), list(sidecar[1])
        if len(pos) != len(s.tokens) or len(ner) != len(s.tokens):
            raise CorpusFormatError(
                f"sidecar lengths pos={len(pos)} ner={len(ner)} != {len(s.tokens)} tokens"
            )
    else:
        pos = [rule_pos_tag(t) for t in s.tokens]
        ner = [rule_ner_tag(t, i) for i, t in enumerate(s.tokens)]
    s.pos_tags, s.ner_tags = pos, ner
    if pos_vocab is not None:
        s.pos_ids = [pos_vocab.add(t) for t in pos]
    if ner_vocab is not None:
        s.ner_ids = [ner_vocab.add(t) for t in ner]
    return s


def index_words(s: TokenizedSentence, vocab: Vocab, charset: Sequence[str] | None = None) -> TokenizedSentence:
    s.word_ids = [vocab.id(t) for t in s.tokens]
    s.char_ids = [charset_ids(t, charset) for t in s.tokens]
    return s


def exact_match(p: TokenizedSentence, h: TokenizedSentence) -> tuple[TokenizedSentence, TokenizedSentence]:
    """Per-token (surface, lowercase, stem) membership flags against the other side."""

    def flags(side: TokenizedSentence, other: TokenizedSentence):
        surface = set(other.tokens)
        lower = {t.lower() for t in other.tokens}
        stems = {stem(t) for t in other.tokens}
        side.em = [
            (int(t in surface), int(t.lower() in lower), int(stem(t) in stems))
            for t in side.tokens
        ]

    flags(p, h)
    flags(h, p)
    return p, h


# ---------------------------------------------------------------------------
# NLI dataset


@dataclass
class NLIExample:
    premise: TokenizedSentence
    hypothesis: TokenizedSentence
    gold_label: str
    annotator_labels: list[str]

    def __post_init__(self):
        if self.gold_label not in LABELS:
            raise CorpusFormatError(f"gold label {self.gold_label!r} outside {LABELS}")
        if not self.annotator_labels:
            raise CorpusFormatError("annotator_labels must be nonempty")


@dataclass
class ReadCounts:
    accepted: int = 0
    skipped_no_consensus: int = 0  # gold label "-"
    skipped_bad_gold: int = 0
    rejected_empty_annotators: int = 0

    @property
    def total(self) -> int:
        return (
            self.accepted
            + self.skipped_no_consensus
            + self.skipped_bad_gold
            + self.rejected_empty_annotators
        )


def iter_nli_jsonl(path, counts: ReadCounts | None = None) -> Iterator[NLIExample]:
    path = Path(path)
    counts = counts if counts is not None else ReadCounts()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: bad JSON ({exc.msg})") from None
            gold = obj.get("gold_label", "-")
            if gold == "-":
                counts.skipped_no_consensus += 1
                continue
            if gold not in LABELS:
                counts.skipped_bad_gold += 1
                continue
            anns = obj.get("annotator_labels") or []
            if not anns:
                counts.rejected_empty_annotators += 1
                continue
            counts.accepted += 1
            yield NLIExample(
                premise=sentence(obj["sentence1"]),
                hypothesis=sentence(obj["sentence2"]),
                gold_label=gold,
                annotator_labels=list(anns),
            )


def read_nli_jsonl(path) -> tuple[list[NLIExample], ReadCounts]:
    counts = ReadCounts()
    return list(iter_nli_jsonl(path, counts)), counts


def write_nli_jsonl(path, examples: Iterable[NLIExample]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "sentence1": ex.premise.text,
                        "sentence2": ex.hypothesis.text,
                        "gold_label": ex.gold_label,
                        "annotator_labels": ex.annotator_labels,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# marker pairs


@dataclass
class MarkerPair:
    s1: TokenizedSentence
    s2: TokenizedSentence
    marker: str

    def __post_init__(self):
        if len(self.s1) < 2 or len(self.s2) < 2:
            raise CorpusFormatError("both clauses of a marker pair need >= 2 tokens")


@dataclass
class ExtractionCounts:
    emitted: int = 0
    skipped_no_marker: int = 0
    skipped_multi_marker: int = 0
    skipped_short_clause: int = 0
    skipped_no_previous: int = 0


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        out.extend(s for s in _SENTENCE_SPLIT.split(line) if s)
    return out


def extract_marker_pairs(
    path, markers: Sequence[str] = DEFAULT_MARKERS, counts: ExtractionCounts | None = None
) -> Iterator[MarkerPair]:
    """Split single-marker sentences into (left clause, right clause, marker).

    A sentence must contain exactly one marker from the set as a standalone
    token. Sentence-initial markers pair the previous sentence with the
    remainder. Both clauses need >= 2 tokens and must not contain the
    marker; everything else is skipped and counted.
    """
    counts = counts if counts is not None else ExtractionCounts()
    marker_set = {m.lower() for m in markers}
    text = Path(path).read_text(encoding="utf-8")
    prev: list[str] | None = None
    for sent in split_sentences(text):
        tokens = tokenize(sent)
        if not tokens:
            continue
        positions = [i for i, t in enumerate(tokens) if t.lower() in marker_set]
        if len(positions) == 0:
            counts.skipped_no_marker += 1
            prev = tokens
            continue
        if len(positions) > 1:
            counts.skipped_multi_marker += 1
            prev = tokens
            continue
        i = positions[0]
        marker = tokens[i].lower()
        if i == 0:
            left = prev
            right = tokens[1:]
            if left is None or any(t.lower() == marker for t in left):
                counts.skipped_no_previous += 1
                prev = tokens
                continue
        else:
            left, right = tokens[:i], tokens[i + 1 :]
        if len(left) < 2 or len(right) < 2:
            counts.skipped_short_clause += 1
            prev = tokens
            continue
        counts.emitted += 1
        yield MarkerPair(TokenizedSentence(left), TokenizedSentence(right), marker)
        prev = tokens


def write_marker_tsv(path, pairs: Iterable[MarkerPair]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(f"{pair.s1.text}\t{pair.s2.text}\t{pair.marker}\n")
            n += 1
    return n


def read_marker_tsv(path) -> list[MarkerPair]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(f"{path}: line {lineno}: expected 3 columns, got {len(parts)}")
            s1, s2, marker = parts
            out.append(MarkerPair(sentence(s1), sentence(s2), marker))
    return out


# ---------------------------------------------------------------------------
# tag sidecars: one row per sentence, two rows per example/pair


def write_tag_sidecar(path, rows: Iterable[tuple[Sequence[str], Sequence[str]]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pos, ner in rows:
            fh.write(" ".join(pos) + "\t" + " ".join(ner) + "\n")


def read_tag_sidecar(path) -> list[tuple[list[str], list[str]]]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}: line {lineno}: expected 2 columns, got {len(parts)}")
            out.append((parts[0].split(), parts[1].split()))
    return out


class Preprocessor:
    """Attaches word/char ids, POS/NER ids, and exact-match flags to examples.

    Tag vocabularies grow while preparing training data and are frozen
    before model construction; unseen tags afterwards map to unk.
    """

    def __init__(
        self,
        word_vocab: Vocab,
        pos_vocab: Vocab | None = None,
        ner_vocab: Vocab | None = None,
        charset: Sequence[str] | None = None,
    ):
        self.word_vocab = word_vocab
        self.pos_vocab = pos_vocab if pos_vocab is not None else Vocab()
        self.ner_vocab = ner_vocab if ner_vocab is not None else Vocab()
        self.charset = list(charset or DEFAULT_CHARSET)

    def prepare_sentence(
        self, s: TokenizedSentence, sidecar_row: tuple[Sequence[str], Sequence[str]] | None = None
    ) -> TokenizedSentence:
        index_words(s, self.word_vocab, self.charset)
        attach_tags(s, sidecar_row, self.pos_vocab, self.ner_vocab)
        return s

    def prepare_example(
        self,
        ex: NLIExample,
        sidecar_rows: tuple | None = None,
    ) -> NLIExample:
        self.prepare_sentence(ex.premise, sidecar_rows[0] if sidecar_rows else None)
        self.prepare_sentence(ex.hypothesis, sidecar_rows[1] if sidecar_rows else None)
        exact_match(ex.premise, ex.hypothesis)
        return ex

    def prepare_dataset(
        self, examples: Sequence[NLIExample], sidecar: Sequence[tuple] | None = None
    ) -> list[NLIExample]:
        if sidecar is not None and len(sidecar) != 2 * len(examples):
            raise CorpusFormatError(
                f"sidecar has {len(sidecar)} rows, expected {2 * len(examples)} (two per example)"
            )
        out = []
        for i, ex in enumerate(examples):
            rows = (sidecar[2 * i], sidecar[2 * i + 1]) if sidecar is not None else None
            out.append(self.prepare_example(ex, rows))
        return out

    def freeze(self) -> "Preprocessor":
        self.pos_vocab.freeze()
        self.ner_vocab.freeze()
        return self


# ---------------------------------------------------------------------------
# statistics


@dataclass
class MarkerStats:
    counts: dict[str, int]
    total: int

    def percentage(self, marker: str) -> float:
        if self.total == 0:
            return 0.0
        return 100.0 * self.counts.get(marker, 0) / self.total

    def rows(self) -> list[tuple[str, int, float]]:
        return [(m, c, self.percentage(m)) for m, c in self.counts.items()]


def marker_stats(pairs: Iterable[MarkerPair], markers: Sequence[str] = DEFAULT_MARKERS) -> MarkerStats:
    counts = {m: 0 for m in markers}
    total = 0
    for pair in pairs:
        counts[pair.marker] = counts.get(pair.marker, 0) + 1
        total += 1
    return MarkerStats(counts=counts, total=total)


@dataclass
class LabelStats:
    """Per-k counts: total(k) = examples with exactly k annotator labels,
    correct(k) = examples whose gold label appears exactly k times among
    them. The two are independent counts over the same examples."""

    totals: dict[int, int] = field(default_factory=dict)
    corrects: dict[int, int] = field(default_factory=dict)
    examples: int = 0

    def row(self, k: int) -> tuple[int, int]:
        return self.corrects.get(k, 0), self.totals.get(k, 0)

    def max_k(self) -> int:
        return max([5, *self.totals.keys(), *self.corrects.keys()])


def label_stats(examples: Iterable[NLIExample]) -> LabelStats:
    stats = LabelStats()
    for ex in examples:
        stats.examples += 1
        k_total = len(ex.annotator_labels)
        stats.totals[k_total] = stats.totals.get(k_total, 0) + 1
        k_correct = sum(1 for l in ex.annotator_labels if l == ex.gold_label)
        if k_correct > 0:
            stats.corrects[k_correct] = stats.corrects.get(k_correct, 0) + 1
    return stats
