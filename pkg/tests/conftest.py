import numpy as np
import pytest

from dman import synthetic
from dman.corpus import NLIExample, Preprocessor, load_embeddings, sentence
from dman.dmp import init_encoder
from dman.model import DMANConfig, init_params

TINY_CHARSET = ["<pad>", "<unk>"] + list("abcdefghijklmnopqrstuvwxyz.,")


@pytest.fixture(scope="session")
def word_table(tmp_path_factory):
    path = synthetic.write_embeddings(tmp_path_factory.mktemp("emb") / "glove.txt")
    _, table = load_embeddings(path)
    return table


def rows_to_examples(rows):
    return [
        NLIExample(
            sentence(r["sentence1"]), sentence(r["sentence2"]), r["gold_label"], r["annotator_labels"]
        )
        for r in rows
    ]


def tiny_config(**overrides) -> DMANConfig:
    base = dict(
        hidden_size=3,
        word_dim=16,
        pos_dim=2,
        ner_dim=2,
        char_dim=3,
        char_filters=4,
        char_width=2,
        encoder_hidden=3,
    )
    base.update(overrides)
    return DMANConfig(**base)


@pytest.fixture
def tiny_setup(word_table):
    """Prepared short examples plus a full tiny model with a random encoder."""
    examples = rows_to_examples(
        [
            {
                "sentence1": "the cat slept .",
                "sentence2": "the storm came .",
                "gold_label": "contradiction",
                "annotator_labels": ["contradiction"] * 3,
            },
            {
                "sentence1": "a dog waited .",
                "sentence2": "the nap held .",
                "gold_label": "entailment",
                "annotator_labels": ["entailment", "neutral", "entailment"],
            },
        ]
    )
    prep = Preprocessor(word_table.vocab, charset=TINY_CHARSET)
    prep.prepare_dataset(examples)
    prep.freeze()
    config = tiny_config()
    encoder = init_encoder(np.random.default_rng(0), config.encoder_hidden, config.word_dim)
    params = init_params(
        config, word_table, prep.pos_vocab, prep.ner_vocab, seed=0, encoder=encoder,
        charset=TINY_CHARSET,
    )
    return prep, examples, params
