#!/usr/bin/env python3
# Corpus pipeline walkthrough: load -> filter -> split -> vocabulary -> encode -> batch.

import json
import tempfile
from pathlib import Path

import numpy as np

from csrr.corpus import (
    build_vocabulary,
    encode_conversation,
    load_corpus,
    make_batches,
    split_corpus,
)

workdir = Path(tempfile.mkdtemp())
corpus_path = workdir / "corpus.jsonl"

# one JSON object per line; "dialog" holds the ordered utterances
rng = np.random.default_rng(0)
words = ["hello", "there", "how", "are", "you", "fine", "thanks", "bye", "ok", "sure"]
with open(corpus_path, "w") as f:
    for i in range(30):
        n_utts = int(rng.integers(2, 8))  # some of these are too short and get filtered
        dialog = [" ".join(rng.choice(words, size=int(rng.integers(2, 6)))) for _ in range(n_utts)]
        f.write(json.dumps({"dialog": dialog}) + "\n")

conversations = load_corpus(corpus_path, max_conversation_length=10)
print(f"loaded {len(conversations)} conversations with more than 3 utterances")

train, valid, test = split_corpus(conversations, (0.8, 0.1, 0.1), seed=1)
print(f"split 8:1:1 -> train {len(train)}, valid {len(valid)}, test {len(test)}")

vocab = build_vocabulary(train, max_size=50)
print(f"vocabulary of {vocab.vocab_size} entries; first rows: {vocab.id_to_token[:8]}")

encoded = [encode_conversation(c, vocab, pad_length=15) for c in train]
sample = encoded[0].utterances[0]
print(f"'{sample.raw_text}' -> ids {list(sample.token_ids)} (EOS terminated)")
print("decoded back:", vocab.decode(sample.token_ids))

for batch in make_batches(encoded, batch_size=4, shuffle_seed=7):
    print(f"batch: ids {batch.token_ids.shape}, conv lengths {batch.conv_lengths.tolist()}, "
          f"mask sum {int(batch.mask.sum())}")
    break
