"""Multi-turn conversation corpus: loading, filtering, vocabulary, encoding, batching.

The on-disk corpus format is JSON lines, one object per line with a
"dialog" key holding the ordered utterance strings of one conversation.
Conversations with 3 or fewer utterances are dropped at load time;
over-long conversations keep only their most recent utterances so the
response stays adjacent to its query.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD_ID = 0
UNK_ID = 1
SOS_ID = 2
EOS_ID = 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<sos>", "<eos>")

MIN_UTTERANCES = 4  # conversations must have more than 3 utterances

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(Exception):
    """Raised for malformed corpus files or invalid corpus operations."""


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace+punctuation tokenization."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Utterance:
    """One turn of a conversation, optionally encoded to token ids."""

    raw_text: str
    token_ids: tuple[int, ...] = ()

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class Conversation:
    """Ordered utterances; the last two are the query and the response."""

    utterances: tuple[Utterance, ...]

    @property
    def n_plus_1(self) -> int:
        return len(self.utterances)

    def texts(self) -> list[str]:
        return [u.raw_text for u in self.utterances]


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token<->id map with PAD/UNK/SOS/EOS reserved as ids 0..3."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False)

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, ids) -> list[str]:
        """Map ids back to surface tokens, stopping at EOS and skipping PAD/SOS."""
        out = []
        for i in ids:
            i = int(i)
            if i == EOS_ID:
                break
            if i in (PAD_ID, SOS_ID):
                continue
            out.append(self.id_to_token[i])
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token:
                f.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise CorpusError(f"vocabulary file {path} does not start with {SPECIAL_TOKENS}")
        return cls._from_tokens(tokens)

    @classmethod
    def _from_tokens(cls, tokens: list[str]) -> "Vocabulary":
        token_to_id = {t: i for i, t in enumerate(tokens)}
        if len(token_to_id) != len(tokens):
            raise CorpusError("duplicate token in vocabulary")
        return cls(id_to_token=tuple(tokens), token_to_id=token_to_id)


@dataclass(frozen=True)
class Batch:
    """Padded id/length/mask arrays for a batch of encoded conversations.

    token_ids: (B, U, L) int32, PAD-filled.
    lengths:   (B, U) int32 token counts (0 for empty utterance slots).
    conv_lengths: (B,) int32 utterance counts per conversation.
    mask:      (B, U, L) float32, 1 where a real token sits.
    """

    token_ids: np.ndarray
    lengths: np.ndarray
    conv_lengths: np.ndarray
    mask: np.ndarray

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def load_corpus(path, format: str = "dialog-jsonl", max_conversation_length: int = 10) -> list[Conversation]:
    """Load raw conversations, dropping those with <= 3 utterances.

    Over-long conversations keep their most recent utterances.
    """
    if format != "dialog-jsonl":
        raise CorpusError(f"unknown corpus format: {format!r}")
    conversations: list[Conversation] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or "dialog" not in record:
                raise CorpusError(f"line {lineno}: record has no 'dialog' key")
            dialog = record["dialog"]
            if (
                not isinstance(dialog, list)
                or len(dialog) < 1
                or not all(isinstance(u, str) for u in dialog)
            ):
                raise CorpusError(f"line {lineno}: 'dialog' must be a non-empty list of strings")
            if len(dialog) < MIN_UTTERANCES:
                continue
            dialog = dialog[-max_conversation_length:]
            conversations.append(
                Conversation(utterances=tuple(Utterance(raw_text=t) for t in dialog))
            )
    if not conversations:
        raise CorpusError(f"{path}: no conversations with more than 3 utterances")
    return conversations


def split_corpus(
    conversations: list[Conversation],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[Conversation], list[Conversation], list[Conversation]]:
    """Random train/valid/test partition; floor-based sizes, remainder to train."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise CorpusError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(conversations)
    if n < 3:
        raise CorpusError(f"need at least 3 conversations to split, got {n}")
    n_valid = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_valid - n_test
    order = np.random.default_rng(seed).permutation(n)
    train = [conversations[i] for i in order[:n_train]]
    valid = [conversations[i] for i in order[n_train : n_train + n_valid]]
    test = [conversations[i] for i in order[n_train + n_valid :]]
    return train, valid, test


def build_vocabulary(train_conversations: list[Conversation], max_size: int = 20000, min_count: int = 1) -> Vocabulary:
    """Frequency-ranked vocabulary (lexicographic tie-break) plus the 4 specials."""
    if max_size < 5:
        raise CorpusError(f"max_size must be at least 5, got {max_size}")
    if not train_conversations:
        raise CorpusError("cannot build a vocabulary from an empty train set")
    counts: Counter[str] = Counter()
    for conv in train_conversations:
        for utt in conv.utterances:
            counts.update(tokenize(utt.raw_text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    retained = [t for t, c in ranked if c >= min_count][: max_size - 4]
    return Vocabulary._from_tokens(list(SPECIAL_TOKENS) + retained)


def encode_utterance_text(text: str, vocabulary: Vocabulary, pad_length: int) -> Utterance:
    """Tokenize, truncate to pad_length-1, append EOS; OOV maps to UNK."""
    tokens = tokenize(text)[: pad_length - 1]
    ids = tuple(vocabulary.lookup(t) for t in tokens) + (EOS_ID,)
    return Utterance(raw_text=text, token_ids=ids)


def encode_conversation(conversation: Conversation, vocabulary: Vocabulary, pad_length: int = 15) -> Conversation:
    return Conversation(
        utterances=tuple(
            encode_utterance_text(u.raw_text, vocabulary, pad_length) for u in conversation.utterances
        )
    )


def pack_batch(conversations: list[Conversation], pad_length: int | None = None) -> Batch:
    """Pack encoded conversations into padded arrays (one Batch)."""
    if not conversations:
        raise CorpusError("cannot pack an empty batch")
    max_utts = max(c.n_plus_1 for c in conversations)
    if pad_length is None:
        pad_length = max(u.length for c in conversations for u in c.utterances)
    b = len(conversations)
    token_ids = np.full((b, max_utts, pad_length), PAD_ID, dtype=np.int32)
    lengths = np.zeros((b, max_utts), dtype=np.int32)
    conv_lengths = np.zeros(b, dtype=np.int32)
    for i, conv in enumerate(conversations):
        conv_lengths[i] = conv.n_plus_1
        for t, utt in enumerate(conv.utterances):
            if utt.length == 0:
                raise CorpusError("conversation contains an unencoded utterance")
            if utt.length > pad_length:
                raise CorpusError(
                    f"utterance length {utt.length} exceeds pad_length {pad_length}"
                )
            token_ids[i, t, : utt.length] = utt.token_ids
            lengths[i, t] = utt.length
    mask = (np.arange(pad_length)[None, None, :] < lengths[:, :, None]).astype(np.float32)
    return Batch(token_ids=token_ids, lengths=lengths, conv_lengths=conv_lengths, mask=mask)


def make_batches(
    conversations: list[Conversation],
    batch_size: int,
    shuffle_seed: int | None = None,
    pad_length: int | None = None,
):
    """Yield batches covering every conversation exactly once; final batch may be partial."""
    if batch_size < 1:
        raise CorpusError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(conversations))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(conversations))
    for start in range(0, len(conversations), batch_size):
        chunk = [conversations[i] for i in order[start : start + batch_size]]
        yield pack_batch(chunk, pad_length=pad_length)


def write_corpus(path, conversations: list[Conversation]) -> None:
    """Write conversations back out in the dialog-jsonl format."""
    with open(path, "w", encoding="utf-8") as f:
        for conv in conversations:
            f.write(json.dumps({"dialog": conv.texts()}) + "\n")
