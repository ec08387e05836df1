import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_unit
from epsnet import (
    CosineIndex,
    DualEmbeddingIndex,
    EventAnnotation,
    FrameStream,
    KeyframeIndex,
    candidates_for_hit_rate,
    full_index,
    rerank,
    top_k,
)
from epsnet.exceptions import DimensionMismatchError, EmptyStreamError, ReRankCoverageError
from epsnet.index import first_hit_ranks, rank_order
from oracles import sort_all_top_k


def _index(rng, n, d, fps=1.0):
    return full_index(FrameStream(random_unit(rng, n, d), fps=fps))


def test_query_equal_to_keyframe_ranks_first(rng):
    idx = _index(rng, 50, 8)
    r = top_k(idx, idx.embeddings[17], 3)
    assert r.frame_ids[0] == 17
    assert r.scores[0] == pytest.approx(1.0, abs=1e-12)


def test_k_larger_than_index_returns_everything_sorted(rng):
    idx = _index(rng, 10, 4)
    r = top_k(idx, rng.standard_normal(4), 50)
    assert len(r) == 10
    assert (np.diff(r.scores) <= 0).all()


def test_matches_full_sort_oracle(rng):
    idx = _index(rng, 5000, 32)
    for _ in range(20):
        q = rng.standard_normal(32)
        r = top_k(idx, q, 50)
        scores = idx.embeddings @ (q / np.linalg.norm(q))
        assert r.frame_ids.tolist() == sort_all_top_k(scores, idx.frame_ids, 50)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 45))
def test_rank_order_with_heavy_ties(seed, n, k):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 4, n).astype(float)
    ids = np.sort(rng.choice(10 * n, n, replace=False))
    got = rank_order(scores, ids, k).tolist()
    assert got == sort_all_top_k(scores, ids, k)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_ranking_scale_stable(seed, c):
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal(30)
    ids = np.arange(30)
    assert rank_order(scores, ids, 10).tolist() == rank_order(c * scores, ids, 10).tolist()


def test_errors(rng):
    idx = _index(rng, 5, 4)
    with pytest.raises(DimensionMismatchError):
        top_k(idx, np.ones(3), 2)
    with pytest.raises(ValueError):
        top_k(idx, np.ones(4), 0)
    empty = KeyframeIndex.from_positions(FrameStream(np.eye(2)), [], "novelty")
    with pytest.raises(EmptyStreamError):
        top_k(empty, np.ones(2), 1)


def test_cosine_index_estimator(rng):
    X = random_unit(rng, 100, 8)
    est = CosineIndex().fit(X, frame_ids=np.arange(100) * 2)
    scores, pos = est.search(X[:3], k=4)
    assert pos[:, 0].tolist() == [0, 1, 2]
    np.testing.assert_allclose(scores[:, 0], 1.0)
    with pytest.raises(DimensionMismatchError):
        est.search(np.ones((1, 3)))


def test_rerank_same_space_equals_top_k(rng):
    idx = _index(rng, 200, 16)
    dual = DualEmbeddingIndex(idx, idx.keyframes)
    for _ in range(10):
        q = rng.standard_normal(16)
        assert rerank(dual, q, q, 50, 5) == top_k(idx, q, 5)


def test_rerank_full_shortlist_equals_space_b_search(rng):
    idx = _index(rng, 80, 8)
    B = FrameStream(random_unit(rng, 80, 5))
    dual = DualEmbeddingIndex(idx, B)
    qa, qb = rng.standard_normal(8), rng.standard_normal(5)
    got = rerank(dual, qa, qb, 80, 7)
    assert got.frame_ids.tolist() == top_k(full_index(B), qb, 7).frame_ids.tolist()


def test_rerank_with_n_equal_k_only_reorders(rng):
    idx = _index(rng, 80, 8)
    dual = DualEmbeddingIndex(idx, FrameStream(random_unit(rng, 80, 5)))
    qa, qb = rng.standard_normal(8), rng.standard_normal(5)
    assert set(rerank(dual, qa, qb, 5, 5).frame_ids) == set(top_k(idx, qa, 5).frame_ids)


def test_rerank_coverage_error(rng):
    idx = _index(rng, 10, 4)
    partial = {i: rng.standard_normal(3) for i in range(9)}
    with pytest.raises(ReRankCoverageError) as err:
        DualEmbeddingIndex(idx, partial)
    assert err.value.frame_id == 9
    lazy = DualEmbeddingIndex(idx, partial, strict=False)
    with pytest.raises(ReRankCoverageError):
        rerank(lazy, idx.embeddings[9], np.ones(3), 10, 3)


def _events_at(idx, positions, tol_offset=0.0):
    return [
        EventAnnotation.instant(i, "s", float(idx.timestamps[p]) + tol_offset, idx.embeddings[p])
        for i, p in enumerate(positions)
    ]


def test_candidates_target_at_hit1_is_one(rng):
    idx = _index(rng, 60, 16)
    events = _events_at(idx, [3, 20, 40])
    assert candidates_for_hit_rate(idx, events, 1.0, 0.0) == 1


def test_candidates_unreachable(rng):
    idx = _index(rng, 20, 8)
    events = _events_at(idx, [2]) + [EventAnnotation.instant(9, "s", 500.0, np.ones(8))]
    assert candidates_for_hit_rate(idx, events, 1.0, 0.5) is None
    assert candidates_for_hit_rate(idx, events, 0.5, 0.5) == 1


def test_candidates_step_function(rng):
    idx = _index(rng, 100, 8)
    events = [EventAnnotation.instant(i, "s", float(t), rng.standard_normal(8)) for i, t in enumerate([5, 50, 90])]
    ranks = np.sort(first_hit_ranks(idx, events, 0.0))
    assert candidates_for_hit_rate(idx, events, 1 / 3, 0.0) == ranks[0]
    assert candidates_for_hit_rate(idx, events, 0.5, 0.0) == ranks[1]
    assert candidates_for_hit_rate(idx, events, 1.0, 0.0) == ranks[2]


def test_candidates_requires_events(rng):
    with pytest.raises(ValueError):
        candidates_for_hit_rate(_index(rng, 5, 2), [], 0.5, 0.5)
