import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epsnet import EventAnnotation, FrameRecord, FrameStream, KeyframeIndex, cosine, full_index, normalize
from epsnet.exceptions import DimensionMismatchError, IndexMismatchError, NormalizationError, StreamCorruptError
from oracles import scalar_dot

vectors = arrays(np.float64, st.integers(1, 16), elements=st.floats(-100, 100, allow_subnormal=False)).filter(
    lambda v: np.linalg.norm(v) > 1e-6
)


def test_normalize_3_4_5():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)


def test_normalize_zero_vector_raises():
    with pytest.raises(NormalizationError):
        normalize(np.zeros(8))


def test_normalize_rejects_nan():
    with pytest.raises(NormalizationError):
        normalize([1.0, np.nan])


@given(vectors)
def test_normalize_idempotent(v):
    u = normalize(v)
    np.testing.assert_allclose(normalize(u), u, atol=1e-12)
    assert abs(np.linalg.norm(u) - 1) < 1e-12


def test_cosine_self_and_orthogonal():
    e = normalize([1.0, 2.0, 3.0])
    assert cosine(e, e) == pytest.approx(1.0, abs=1e-15)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_matches_scalar_loop(rng):
    for _ in range(50):
        a, b = (normalize(rng.standard_normal(8)) for _ in range(2))
        assert abs(cosine(a, b) - scalar_dot(a, b)) < 1e-12


@given(vectors, st.randoms(use_true_random=False))
def test_cosine_symmetric_and_bounded(v, r):
    a = normalize(v)
    b = normalize(np.array([r.uniform(-1, 1) for _ in a]) + 1e-3)
    assert cosine(a, b) == cosine(b, a)
    assert abs(cosine(a, b)) <= 1 + 1e-6


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine(np.ones(3), np.ones(4))


def test_stream_normalizes_on_ingest(rng):
    s = FrameStream(rng.standard_normal((20, 5)) * 7)
    np.testing.assert_allclose(np.linalg.norm(s.embeddings, axis=1), 1.0, atol=1e-5)


def test_stream_defaults_and_fps():
    s = FrameStream(np.eye(3), fps=2.0)
    assert s.frame_ids.tolist() == [0, 1, 2]
    assert s.timestamps.tolist() == [0.0, 0.5, 1.0]


def test_stream_arrays_are_read_only(rng):
    s = FrameStream(rng.standard_normal((4, 3)))
    with pytest.raises(ValueError):
        s.embeddings[0, 0] = 1.0


def test_stream_rejects_non_increasing_ids():
    with pytest.raises(StreamCorruptError) as err:
        FrameStream(np.eye(3), [0, 2, 2])
    assert err.value.frame_id == 2


def test_stream_rejects_decreasing_timestamps():
    with pytest.raises(StreamCorruptError):
        FrameStream(np.eye(3), [0, 1, 2], [0.0, 1.0, 0.5])


def test_stream_allows_equal_timestamps():
    assert len(FrameStream(np.eye(2), [0, 1], [3.0, 3.0])) == 2


def test_from_records_dimension_mismatch():
    recs = [FrameRecord(0, 0.0, np.ones(3)), FrameRecord(1, 0.1, np.ones(4))]
    with pytest.raises(StreamCorruptError) as err:
        FrameStream.from_records(recs)
    assert err.value.frame_id == 1


def test_records_round_trip(rng):
    s = FrameStream(rng.standard_normal((6, 4)), [1, 3, 4, 8, 9, 20], fps=10)
    assert FrameStream.from_records(list(s), fps=10) == s


def test_positions_of_missing_id(rng):
    s = FrameStream(rng.standard_normal((3, 2)), [5, 6, 9])
    assert s.positions_of([6, 9]).tolist() == [1, 2]
    with pytest.raises(IndexMismatchError):
        s.positions_of([7])


def test_index_from_positions_records_provenance(rng):
    s = FrameStream(rng.standard_normal((5, 3)), stream_id="cam")
    idx = KeyframeIndex.from_positions(s, [0, 3], "uniform", k=2)
    assert idx.frame_ids.tolist() == [0, 3]
    assert idx.provenance.to_dict() == {"method": "uniform", "params": {"k": 2}, "source_stream": "cam", "source_length": 5}
    assert len(full_index(s)) == 5


def test_index_unknown_method(rng):
    with pytest.raises(ValueError):
        KeyframeIndex.from_positions(FrameStream(np.eye(2)), [0], "magic")


def test_event_rejects_reversed_interval():
    with pytest.raises(ValueError):
        EventAnnotation(0, "s", 2.0, 1.0, np.ones(3))


def test_event_instant_is_zero_length():
    e = EventAnnotation.instant("a", "s", 4.0, [0.0, 2.0])
    assert e.t_start_s == e.t_end_s == 4.0
    assert e.query.tolist() == [0.0, 1.0]
