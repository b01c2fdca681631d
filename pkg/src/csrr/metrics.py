"""Embedding-based response quality metrics plus distinct n-gram diversity.

Average/Extrema/Greedy compare a generated response with its reference via
word vectors: cosine of mean vectors, cosine of per-dimension extrema, and
symmetric greedy token matching. Pairs where either side has no in-vocab
token (or a degenerate zero vector) are excluded from the corpus means and
counted, never scored as zero. Dist-1/Dist-2 is the unique-over-total
n-gram ratio pooled across all generated responses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class MetricsError(Exception):
    """Raised for malformed embedding files or misaligned inputs."""


@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token)

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class EvalReport:
    average: float | None
    extrema: float | None
    greedy: float | None
    dist1: float
    dist2: float
    response_count: int
    excluded: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "average": self.average,
            "extrema": self.extrema,
            "greedy": self.greedy,
            "dist1": self.dist1,
            "dist2": self.dist2,
            "response_count": self.response_count,
            "excluded": dict(self.excluded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        def cell(v):
            return "  n/a" if v is None else f"{v:.3f}"

        header = f"{'Average':>9} {'Extrema':>9} {'Greedy':>9} {'Dist-1':>9} {'Dist-2':>9}"
        row = (
            f"{cell(self.average):>9} {cell(self.extrema):>9} {cell(self.greedy):>9} "
            f"{self.dist1:>9.3f} {self.dist2:>9.3f}"
        )
        return header + "\n" + row


def load_embeddings(path) -> EmbeddingTable:
    """Plain-text word vectors: optional "count dim" header, then "word v1 ... vd"."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        lines = f.readlines()
    start = 0
    if lines:
        head = lines[0].split()
        if len(head) == 2:
            try:
                int(head[0]), int(head[1])
                start = 1
            except ValueError:
                pass
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.rstrip("\n").split()
        if not parts:
            continue
        word, values = parts[0], parts[1:]
        if not values:
            raise MetricsError(f"line {lineno}: no vector values for {word!r}")
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise MetricsError(f"line {lineno}: non-numeric vector value") from exc
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise MetricsError(f"line {lineno}: dimension {vec.size} != expected {dim}")
        if word not in vectors:
            vectors[word] = vec
    if not vectors or dim is None:
        raise MetricsError(f"{path}: no embedding vectors found")
    return EmbeddingTable(vectors=vectors, dim=dim)


def _in_vocab(tokens, table: EmbeddingTable) -> list[np.ndarray]:
    """Vectors for known tokens, skipping OOV and zero-norm entries."""
    out = []
    for t in tokens:
        v = table.get(t)
        if v is not None and np.linalg.norm(v) > 0:
            out.append(v)
    return out


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return None
    return float(np.dot(a, b) / (na * nb))


def embedding_average(response_tokens, reference_tokens, table: EmbeddingTable) -> float | None:
    """Cosine of mean in-vocab vectors; None when undefined."""
    rv = _in_vocab(response_tokens, table)
    gv = _in_vocab(reference_tokens, table)
    if not rv or not gv:
        return None
    return _cosine(np.mean(rv, axis=0), np.mean(gv, axis=0))


def _greedy_directional(from_vecs, to_vecs) -> float:
    to_mat = np.stack(to_vecs)
    to_unit = to_mat / np.linalg.norm(to_mat, axis=1, keepdims=True)
    total = 0.0
    for v in from_vecs:
        sims = to_unit @ (v / np.linalg.norm(v))
        total += float(sims.max())
    return total / len(from_vecs)


def embedding_greedy(response_tokens, reference_tokens, table: EmbeddingTable) -> float | None:
    """Symmetric greedy matching: mean of best-cosine matches, both directions."""
    rv = _in_vocab(response_tokens, table)
    gv = _in_vocab(reference_tokens, table)
    if not rv or not gv:
        return None
    return 0.5 * (_greedy_directional(rv, gv) + _greedy_directional(gv, rv))


def _extrema_vector(vecs) -> np.ndarray:
    mat = np.stack(vecs)
    vmax = mat.max(axis=0)
    vmin = mat.min(axis=0)
    return np.where(np.abs(vmax) >= np.abs(vmin), vmax, vmin)


def embedding_extrema(response_tokens, reference_tokens, table: EmbeddingTable) -> float | None:
    """Cosine of per-dimension extrema vectors (largest-magnitude value per dim)."""
    rv = _in_vocab(response_tokens, table)
    gv = _in_vocab(reference_tokens, table)
    if not rv or not gv:
        return None
    return _cosine(_extrema_vector(rv), _extrema_vector(gv))


def distinct_n(responses: list[list[str]], n: int) -> float:
    """Unique over total n-grams pooled across all responses; 0 when no n-grams."""
    if n not in (1, 2):
        raise MetricsError(f"distinct_n supports n in {{1, 2}}, got {n}")
    if not responses:
        raise MetricsError("distinct_n needs at least one response")
    total = 0
    unique = set()
    for tokens in responses:
        for i in range(len(tokens) - n + 1):
            gram = tuple(tokens[i : i + n])
            unique.add(gram)
            total += 1
    if total == 0:
        return 0.0
    return len(unique) / total


def evaluate_pairs(response_token_lists, reference_token_lists, table: EmbeddingTable) -> EvalReport:
    """Corpus-level report over pre-tokenized, line-aligned pairs."""
    if len(response_token_lists) != len(reference_token_lists):
        raise MetricsError(
            f"line count mismatch: {len(response_token_lists)} responses vs "
            f"{len(reference_token_lists)} references"
        )
    if not response_token_lists:
        raise MetricsError("nothing to evaluate: zero response lines")
    scores: dict[str, list[float]] = {"average": [], "extrema": [], "greedy": []}
    excluded = {"average": 0, "extrema": 0, "greedy": 0}
    fns = {"average": embedding_average, "extrema": embedding_extrema, "greedy": embedding_greedy}
    for resp, ref in zip(response_token_lists, reference_token_lists):
        for name, fn in fns.items():
            s = fn(resp, ref, table)
            if s is None:
                excluded[name] += 1
            else:
                scores[name].append(s)

    def mean_or_none(xs):
        return float(np.mean(xs)) if xs else None

    return EvalReport(
        average=mean_or_none(scores["average"]),
        extrema=mean_or_none(scores["extrema"]),
        greedy=mean_or_none(scores["greedy"]),
        dist1=distinct_n(response_token_lists, 1),
        dist2=distinct_n(response_token_lists, 2),
        response_count=len(response_token_lists),
        excluded=excluded,
    )


def evaluate(responses_path, references_path, table: EmbeddingTable) -> EvalReport:
    """Evaluate whitespace-tokenized line-aligned response/reference files."""
    with open(responses_path, encoding="utf-8") as f:
        responses = [line.rstrip("\n").split() for line in f]
    with open(references_path, encoding="utf-8") as f:
        references = [line.rstrip("\n").split() for line in f]
    return evaluate_pairs(responses, references, table)
