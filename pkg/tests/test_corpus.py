"""Corpus loading, filtering, splitting, vocabulary, encoding, batching."""

import json

import numpy as np
import pytest

from csrr.corpus import (
    EOS_ID,
    PAD_ID,
    SOS_ID,
    UNK_ID,
    Conversation,
    CorpusError,
    Utterance,
    Vocabulary,
    build_vocabulary,
    encode_conversation,
    encode_utterance_text,
    load_corpus,
    make_batches,
    pack_batch,
    split_corpus,
    tokenize,
    write_corpus,
)


def conv(*texts):
    return Conversation(utterances=tuple(Utterance(raw_text=t) for t in texts))


def write_jsonl(path, dialogs):
    with open(path, "w", encoding="utf-8") as f:
        for d in dialogs:
            f.write(json.dumps({"dialog": d}) + "\n")


# -- loading -----------------------------------------------------------------


def test_load_filters_out_three_utterance_conversations(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [["a", "b", "c"], ["a", "b", "c", "d"]])
    out = load_corpus(path)
    assert len(out) == 1
    assert out[0].n_plus_1 == 4


def test_load_keeps_boundary_four_utterances(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [["u1", "u2", "u3", "u4"]])
    out = load_corpus(path)
    assert out[0].n_plus_1 == 4


def test_load_truncates_to_most_recent_utterances(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [[f"u{i}" for i in range(12)]])
    out = load_corpus(path, max_conversation_length=10)
    assert out[0].n_plus_1 == 10
    assert out[0].texts() == [f"u{i}" for i in range(2, 12)]


def test_load_preserves_order(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [["a", "b", "c", str(i)] for i in range(20)])
    out = load_corpus(path)
    assert [c.texts()[-1] for c in out] == [str(i) for i in range(20)]


def test_load_malformed_record_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    with open(path, "w") as f:
        f.write(json.dumps({"dialog": ["a", "b", "c", "d"]}) + "\n")
        f.write("{not json\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(path)


def test_load_record_without_dialog_key_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    with open(path, "w") as f:
        f.write(json.dumps({"talk": ["a"]}) + "\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_corpus(path)


def test_load_empty_result_is_an_error(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [["a", "b"], ["x", "y", "z"]])
    with pytest.raises(CorpusError, match="more than 3"):
        load_corpus(path)


def test_load_unknown_format_rejected(tmp_path):
    with pytest.raises(CorpusError, match="format"):
        load_corpus(tmp_path / "c.jsonl", format="csv")


# -- splitting ---------------------------------------------------------------


def test_split_exact_ratio_sizes():
    convs = [conv("a", "b", "c", str(i)) for i in range(10)]
    tr, va, te = split_corpus(convs, (0.8, 0.1, 0.1), seed=1)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)


def test_split_floor_sizes_remainder_to_train():
    n = 45010
    convs = [conv("a", "b", "c", str(i)) for i in range(n)]
    tr, va, te = split_corpus(convs, (0.8, 0.1, 0.1), seed=3)
    # floor-based oracle: valid/test get floor(n*r), train absorbs the rest
    n_va, n_te = int(n * 0.1), int(n * 0.1)
    assert (len(tr), len(va), len(te)) == (n - n_va - n_te, n_va, n_te)
    assert (len(tr), len(va), len(te)) == (36008, 4501, 4501)


def test_split_deterministic_for_seed():
    convs = [conv("a", "b", "c", str(i)) for i in range(57)]
    first = split_corpus(convs, seed=42)
    second = split_corpus(convs, seed=42)
    for s1, s2 in zip(first, second):
        assert [c.texts() for c in s1] == [c.texts() for c in s2]


def test_split_is_a_partition():
    convs = [conv("a", "b", "c", str(i)) for i in range(41)]
    tr, va, te = split_corpus(convs, seed=9)
    ids = lambda cs: {c.texts()[-1] for c in cs}
    assert ids(tr) | ids(va) | ids(te) == {str(i) for i in range(41)}
    assert not (ids(tr) & ids(va)) and not (ids(tr) & ids(te)) and not (ids(va) & ids(te))


def test_split_too_few_conversations():
    with pytest.raises(CorpusError, match="at least 3"):
        split_corpus([conv("a", "b", "c", "d"), conv("a", "b", "c", "e")])


def test_split_bad_ratios():
    convs = [conv("a", "b", "c", str(i)) for i in range(5)]
    with pytest.raises(CorpusError, match="sum to 1"):
        split_corpus(convs, (0.8, 0.1, 0.2))
    with pytest.raises(CorpusError, match="positive"):
        split_corpus(convs, (1.1, -0.05, -0.05))


# -- vocabulary ----------------------------------------------------------------


def test_vocabulary_counts_and_size():
    vocab = build_vocabulary([conv("a a b", "x", "x", "x")], max_size=7)
    # counts: a=2, x=3, b=1 -> ranked x, a, b; all retained (7 - 4 = 3 slots)
    assert vocab.vocab_size == 7
    assert vocab.id_to_token[:4] == ("<pad>", "<unk>", "<sos>", "<eos>")
    assert vocab.id_to_token[4:] == ("x", "a", "b")


def test_vocabulary_small_example_hand_count():
    vocab = build_vocabulary([conv("a a b", "c", "c", "c")], max_size=6)
    # 2 retained slots: c (3), a (2); b drops
    assert vocab.vocab_size == 6
    assert vocab.lookup("b") == UNK_ID


def test_vocabulary_min_count_maps_rare_to_unk():
    vocab = build_vocabulary([conv("a a b", "a", "a", "a")], max_size=10, min_count=2)
    assert vocab.lookup("a") != UNK_ID
    assert vocab.lookup("b") == UNK_ID


def test_vocabulary_frequency_tie_breaks_lexicographically():
    vocab = build_vocabulary([conv("y x", "y x", "z z", "z")], max_size=10)
    # x and y tie at 2: x first
    assert vocab.lookup("x") < vocab.lookup("y")


def test_vocabulary_max_size_too_small():
    with pytest.raises(CorpusError, match="at least 5"):
        build_vocabulary([conv("a", "b", "c", "d")], max_size=4)


def test_vocabulary_save_load_round_trip(tmp_path):
    vocab = build_vocabulary([conv("a a b", "c d", "e", "f g h")], max_size=12)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.id_to_token == vocab.id_to_token
    assert loaded.token_to_id == vocab.token_to_id


# -- encoding -------------------------------------------------------------------


@pytest.fixture
def vocab():
    return build_vocabulary(
        [conv("hello world", "how are you", "i am fine thanks", "good to hear that")],
        max_size=30,
    )


def test_encode_simple_utterance(vocab):
    utt = encode_utterance_text("Hello", vocab, pad_length=15)
    assert utt.token_ids == (vocab.lookup("hello"), EOS_ID)
    assert utt.length == 2


def test_encode_truncates_to_pad_length(vocab):
    text = " ".join(["hello"] * 20)
    utt = encode_utterance_text(text, vocab, pad_length=15)
    assert utt.length == 15
    assert utt.token_ids[-1] == EOS_ID
    assert all(t == vocab.lookup("hello") for t in utt.token_ids[:-1])


def test_encode_all_oov(vocab):
    utt = encode_utterance_text("qqq zzz", vocab, pad_length=15)
    assert utt.token_ids == (UNK_ID, UNK_ID, EOS_ID)


def test_encode_empty_utterance(vocab):
    utt = encode_utterance_text("", vocab, pad_length=15)
    assert utt.token_ids == (EOS_ID,)


def test_tokenize_splits_punctuation_and_lowercases():
    assert tokenize("Hello, world!") == ["hello", ",", "world", "!"]


def test_round_trip_decode_of_encode(vocab):
    rng = np.random.default_rng(0)
    words = ["hello", "world", "how", "are", "you", "zebra", "qux", "fine!"]
    for _ in range(50):
        text = " ".join(rng.choice(words, size=rng.integers(1, 8)))
        utt = encode_utterance_text(text, vocab, pad_length=15)
        expected = [t if vocab.lookup(t) != UNK_ID else "<unk>" for t in tokenize(text)][:14]
        assert vocab.decode(utt.token_ids) == expected


# -- batching ---------------------------------------------------------------------


def make_encoded(vocab, n, n_utts=4):
    out = []
    for i in range(n):
        c = conv(*[f"hello world {i} {j}" for j in range(n_utts)])
        out.append(encode_conversation(c, vocab, pad_length=15))
    return out


def test_make_batches_sizes(vocab):
    convs = make_encoded(vocab, 5)
    batches = list(make_batches(convs, batch_size=2))
    assert [b.size for b in batches] == [2, 2, 1]


def test_every_conversation_appears_once(vocab):
    convs = make_encoded(vocab, 7)
    batches = list(make_batches(convs, batch_size=3, shuffle_seed=5))
    total = sum(b.size for b in batches)
    assert total == 7


def test_mask_sum_equals_lengths(vocab):
    convs = make_encoded(vocab, 4)
    for batch in make_batches(convs, batch_size=2):
        assert batch.mask.sum() == batch.lengths.sum()
        # per-utterance check
        assert np.array_equal(batch.mask.sum(axis=2), batch.lengths)


def test_padded_positions_hold_pad(vocab):
    convs = make_encoded(vocab, 3)
    batch = pack_batch(convs, pad_length=15)
    assert np.all(batch.token_ids[batch.mask == 0] == PAD_ID)


def test_batches_deterministic_for_seed(vocab):
    convs = make_encoded(vocab, 9)
    a = [b.token_ids.tolist() for b in make_batches(convs, 4, shuffle_seed=11)]
    b = [b.token_ids.tolist() for b in make_batches(convs, 4, shuffle_seed=11)]
    assert a == b


def test_make_batches_rejects_bad_batch_size(vocab):
    with pytest.raises(CorpusError, match="batch_size"):
        list(make_batches(make_encoded(vocab, 2), batch_size=0))


def test_write_corpus_round_trip(tmp_path, vocab):
    convs = [conv("a", "b", "c", "d"), conv("w", "x", "y", "z", "zz")]
    path = tmp_path / "out.jsonl"
    write_corpus(path, convs)
    loaded = load_corpus(path)
    assert [c.texts() for c in loaded] == [c.texts() for c in convs]


def test_specials_are_distinct_and_pad_is_zero():
    assert PAD_ID == 0
    assert len({PAD_ID, UNK_ID, SOS_ID, EOS_ID}) == 4
