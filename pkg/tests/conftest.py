"""Shared builders: tiny vocabularies, synthetic conversations, toy models."""

import numpy as np
import pytest

from csrr.corpus import (
    Conversation,
    Utterance,
    Vocabulary,
    build_vocabulary,
    encode_conversation,
)
from csrr.model import DialogueModel, ModelConfig


def make_text_conversation(*texts) -> Conversation:
    return Conversation(utterances=tuple(Utterance(raw_text=t) for t in texts))


def make_word_vocab(n_words: int) -> Vocabulary:
    """Vocabulary of w0..w{n-1} plus the 4 specials."""
    text = " ".join(f"w{i}" for i in range(n_words))
    seed = make_text_conversation(text, text, text, text)
    return build_vocabulary([seed], max_size=n_words + 4)


def random_conversations(
    vocabulary: Vocabulary,
    n_convs: int,
    n_utts: int = 4,
    pad_length: int = 8,
    seed: int = 0,
    min_words: int = 2,
    max_words: int = 5,
):
    """Synthetic encoded conversations over the w* vocabulary."""
    rng = np.random.default_rng(seed)
    words = [t for t in vocabulary.id_to_token[4:]]
    convs = []
    for _ in range(n_convs):
        texts = []
        for _ in range(n_utts):
            k = int(rng.integers(min_words, max_words + 1))
            texts.append(" ".join(rng.choice(words, size=k)))
        convs.append(encode_conversation(make_text_conversation(*texts), vocabulary, pad_length))
    return convs


TOY_CONFIG = dict(vocab_size=12, hidden_dim=8, embed_dim=6, latent_dim=4, pad_length=8, max_conv_length=10)


@pytest.fixture
def toy_vocab():
    return make_word_vocab(8)  # vocab_size 12


@pytest.fixture
def toy_model(toy_vocab):
    config = ModelConfig(**TOY_CONFIG)
    assert config.vocab_size == toy_vocab.vocab_size
    return DialogueModel(config, seed=0, dtype=np.float64)


@pytest.fixture
def toy_model_hred(toy_vocab):
    config = ModelConfig(**{**TOY_CONFIG, "mode": "hred"})
    return DialogueModel(config, seed=0, dtype=np.float64)


@pytest.fixture
def toy_conversations(toy_vocab):
    return random_conversations(toy_vocab, n_convs=2, n_utts=4, pad_length=8, seed=1)


# -- shared overfit run (used by the acceptance suite and generation tests) -----

OVERFIT_CONFIG = dict(vocab_size=20, hidden_dim=32, embed_dim=16, latent_dim=8,
                      pad_length=8, max_conv_length=10)


def build_overfit_corpus():
    """10 distinct synthetic conversations plus two alternate responses for
    the first context, so the latents must carry the one-to-many choice."""
    rng = np.random.default_rng(42)
    words = [f"w{i}" for i in range(16)]

    def sentence(k):
        return " ".join(rng.choice(words, size=k))

    base = [[sentence(4), sentence(3), sentence(4), sentence(4)] for _ in range(10)]
    alternates = [base[0][:3] + [sentence(4)], base[0][:3] + [sentence(3)]]
    vocabulary = make_word_vocab(16)
    encode = lambda texts: encode_conversation(make_text_conversation(*texts), vocabulary, 8)
    return vocabulary, [encode(t) for t in base], [encode(t) for t in alternates]


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory):
    """Train the small model to memorize the synthetic corpus (about half a minute)."""
    from csrr.training import TrainConfig, train

    vocabulary, base, alternates = build_overfit_corpus()
    train_set = base + alternates
    config = ModelConfig(**OVERFIT_CONFIG)
    assert config.vocab_size == vocabulary.vocab_size
    model = DialogueModel(config, seed=0, dtype=np.float32)
    train_config = TrainConfig(
        learning_rate=2e-3, clip_norm=5.0, batch_size=12, kl_anneal_steps=800,
        max_steps=2000, seed=7, checkpoint_every=500,
    )
    out_dir = tmp_path_factory.mktemp("overfit")
    result = train(model, train_set, train_set, train_config, out_dir)
    return {
        "model": model,
        "vocabulary": vocabulary,
        "base": base,
        "alternates": alternates,
        "train_set": train_set,
        "result": result,
        "train_config": train_config,
    }
