"""Embedding metrics vs hand values and the brute-force oracle; distinct n-grams."""

import numpy as np
import pytest

from csrr.metrics import (
    EmbeddingTable,
    MetricsError,
    distinct_n,
    embedding_average,
    embedding_extrema,
    embedding_greedy,
    evaluate,
    evaluate_pairs,
    load_embeddings,
)

from oracles import brute_average, brute_distinct, brute_extrema, brute_greedy


def table_from(d: dict) -> EmbeddingTable:
    vecs = {k: np.asarray(v, dtype=np.float64) for k, v in d.items()}
    dim = len(next(iter(vecs.values())))
    return EmbeddingTable(vectors=vecs, dim=dim)


@pytest.fixture
def tiny_table():
    return table_from(
        {
            "a": [1.0, 0.0],
            "b": [0.0, 1.0],
            "c": [1.0, 0.0],
            "d": [1.0, 1.0],
            "e": [-2.0, 0.0],
        }
    )


# -- loading ------------------------------------------------------------------------


def test_load_embeddings_basic(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("x 1 0 0\ny 0 1 0\n")
    table = load_embeddings(path)
    assert len(table) == 2 and table.dim == 3


def test_load_embeddings_with_header(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("2 3\nx 1 0 0\ny 0 1 0\n")
    table = load_embeddings(path)
    assert len(table) == 2 and table.dim == 3


def test_load_embeddings_duplicate_keeps_first(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("x 1 0\nx 0 1\n")
    table = load_embeddings(path)
    assert len(table) == 1
    assert np.allclose(table.get("x"), [1, 0])


def test_load_embeddings_ragged_line_errors(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("x 1 0 0\ny 0 1\n")
    with pytest.raises(MetricsError, match="line 2"):
        load_embeddings(path)


def test_load_embeddings_non_numeric_errors(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("x 1 zero\n")
    with pytest.raises(MetricsError, match="line 1"):
        load_embeddings(path)


# -- hand-computed examples -------------------------------------------------------------


def test_average_identical_one_word(tiny_table):
    assert embedding_average(["a"], ["a"], tiny_table) == pytest.approx(1.0)


def test_average_orthogonal_means(tiny_table):
    assert embedding_average(["a"], ["b"], tiny_table) == pytest.approx(0.0)


def test_average_hand_value(tiny_table):
    # resp mean (1,0), ref mean (1,1)/sqrt(2) after normalizing d=(1,1): cos = 1/sqrt(2)
    got = embedding_average(["a"], ["d"], tiny_table)
    assert got == pytest.approx(1.0 / np.sqrt(2.0))


def test_average_undefined_when_all_oov(tiny_table):
    assert embedding_average(["zz"], ["a"], tiny_table) is None
    assert embedding_average(["a"], [], tiny_table) is None


def test_average_undefined_on_zero_mean():
    table = table_from({"p": [1.0, 0.0], "q": [-1.0, 0.0], "r": [0.0, 1.0]})
    assert embedding_average(["p", "q"], ["r"], table) is None


def test_greedy_identical_sentences(tiny_table):
    assert embedding_greedy(["a", "b"], ["a", "b"], tiny_table) == pytest.approx(1.0)


def test_greedy_hand_value(tiny_table):
    # resp {a}, ref {b, c}: G(resp,ref)=1, G(ref,resp)=(0+1)/2 -> 0.75
    assert embedding_greedy(["a"], ["b", "c"], tiny_table) == pytest.approx(0.75)


def test_greedy_order_invariant(tiny_table):
    a = embedding_greedy(["a", "b", "d"], ["c", "e"], tiny_table)
    b = embedding_greedy(["d", "a", "b"], ["e", "c"], tiny_table)
    assert a == pytest.approx(b)


def test_extrema_single_token_reduces_to_cosine(tiny_table):
    assert embedding_extrema(["a"], ["d"], tiny_table) == pytest.approx(1.0 / np.sqrt(2.0))


def test_extrema_magnitude_rule(tiny_table):
    # tokens {(1,0), (-2,0)}: extrema (-2, 0)
    from csrr.metrics import _extrema_vector

    vec = _extrema_vector([np.array([1.0, 0.0]), np.array([-2.0, 0.0])])
    assert np.allclose(vec, [-2.0, 0.0])


def test_extrema_duplicate_token_invariant(tiny_table):
    a = embedding_extrema(["a", "b"], ["d"], tiny_table)
    b = embedding_extrema(["a", "b", "b"], ["d"], tiny_table)
    assert a == pytest.approx(b)


def test_metrics_symmetric_under_swap(tiny_table):
    resp, ref = ["a", "b"], ["d", "e"]
    for fn in (embedding_average, embedding_extrema, embedding_greedy):
        assert fn(resp, ref, tiny_table) == pytest.approx(fn(ref, resp, tiny_table))


def test_metrics_invariant_to_uniform_scaling(tiny_table):
    scaled = table_from({k: 3.7 * v for k, v in tiny_table.vectors.items()})
    resp, ref = ["a", "b"], ["d", "e"]
    for fn in (embedding_average, embedding_extrema, embedding_greedy):
        assert fn(resp, ref, tiny_table) == pytest.approx(fn(resp, ref, scaled))


# -- distinct ---------------------------------------------------------------------------


def test_distinct_hand_value():
    assert distinct_n([["a", "b"], ["a", "c"]], 1) == pytest.approx(0.75)


def test_distinct_all_unique_tokens():
    assert distinct_n([["a", "b", "c"]], 1) == 1.0


def test_distinct_repeated_responses_shrink():
    one = distinct_n([["a", "b"]], 2)
    many = distinct_n([["a", "b"]] * 50, 2)
    assert many < one
    assert many == pytest.approx(1 / 50)


def test_distinct_duplicate_never_increases():
    rng = np.random.default_rng(0)
    pool = [list(rng.choice(["a", "b", "c", "d"], size=rng.integers(2, 6))) for _ in range(8)]
    for n in (1, 2):
        base = distinct_n(pool, n)
        assert distinct_n(pool + [pool[0]], n) <= base


def test_distinct_short_responses_contribute_nothing():
    assert distinct_n([["a"], ["b"]], 2) == 0.0


def test_distinct_validates_n():
    with pytest.raises(MetricsError):
        distinct_n([["a"]], 3)


# -- oracle equivalence -------------------------------------------------------------------


def random_fixture(rng):
    dim = int(rng.integers(2, 5))
    vocab = [f"t{i}" for i in range(int(rng.integers(3, 9)))]
    table = table_from({w: rng.normal(size=dim) for w in vocab})
    draw = lambda: [str(rng.choice(vocab + ["oov"])) for _ in range(int(rng.integers(1, 6)))]
    return table, draw


def test_matches_brute_force_oracle_on_random_fixtures():
    rng = np.random.default_rng(314)
    for _ in range(25):
        table, draw = random_fixture(rng)
        resp, ref = draw(), draw()
        pairs = [
            (embedding_average, brute_average),
            (embedding_greedy, brute_greedy),
            (embedding_extrema, brute_extrema),
        ]
        for fast, brute in pairs:
            a, b = fast(resp, ref, table), brute(resp, ref, table.vectors)
            if b is None:
                assert a is None
            else:
                assert a == pytest.approx(b, abs=1e-9)
        responses = [draw() for _ in range(4)]
        for n in (1, 2):
            assert distinct_n(responses, n) == pytest.approx(brute_distinct(responses, n), abs=1e-12)


# -- corpus-level evaluation ------------------------------------------------------------------


def test_evaluate_identical_files_score_one(tmp_path, tiny_table):
    lines = ["a b", "d e", "c a b"]
    rp, gp = tmp_path / "r.txt", tmp_path / "g.txt"
    rp.write_text("\n".join(lines) + "\n")
    gp.write_text("\n".join(lines) + "\n")
    report = evaluate(rp, gp, tiny_table)
    assert report.average == pytest.approx(1.0)
    assert report.extrema == pytest.approx(1.0)
    assert report.greedy == pytest.approx(1.0)
    assert report.response_count == 3


def test_evaluate_line_count_mismatch(tmp_path, tiny_table):
    rp, gp = tmp_path / "r.txt", tmp_path / "g.txt"
    rp.write_text("a\nb\n")
    gp.write_text("a\n")
    with pytest.raises(MetricsError, match="mismatch"):
        evaluate(rp, gp, tiny_table)


def test_evaluate_counts_excluded_pairs(tiny_table):
    report = evaluate_pairs([["a"], ["zz"]], [["b"], ["a"]], tiny_table)
    assert report.excluded == {"average": 1, "extrema": 1, "greedy": 1}
    assert report.response_count == 2


def test_evaluate_report_ranges_on_random_inputs(tiny_table):
    rng = np.random.default_rng(5)
    words = list(tiny_table.vectors) + ["oov"]
    resp = [[str(rng.choice(words)) for _ in range(3)] for _ in range(10)]
    ref = [[str(rng.choice(words)) for _ in range(3)] for _ in range(10)]
    report = evaluate_pairs(resp, ref, tiny_table)
    for value in (report.average, report.extrema, report.greedy):
        assert value is None or -1.0 - 1e-12 <= value <= 1.0 + 1e-12
    assert 0.0 <= report.dist1 <= 1.0
    assert 0.0 <= report.dist2 <= 1.0


def test_evaluate_empty_files_rejected(tmp_path, tiny_table):
    rp, gp = tmp_path / "r.txt", tmp_path / "g.txt"
    rp.write_text("")
    gp.write_text("")
    with pytest.raises(MetricsError, match="zero"):
        evaluate(rp, gp, tiny_table)


def test_report_table_has_paper_column_names(tiny_table):
    report = evaluate_pairs([["a"]], [["a"]], tiny_table)
    header = report.format_table().splitlines()[0]
    for column in ("Average", "Extrema", "Greedy", "Dist-1", "Dist-2"):
        assert column in header
    assert '"average"' in report.to_json()
