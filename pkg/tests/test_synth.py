import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epsnet import SynthConfig, crowd_out_benchmark, evaluate, full_index, generate, novelty_filter
from epsnet.exceptions import GeometryInfeasibleError
from epsnet.io import stream_to_bytes
from epsnet.synth import random_rotation, short_event_benchmark, with_oracle_rerank_space


def test_two_single_frame_events():
    b = generate(SynthConfig(d=8, n_events=2, frames_per_event=(1, 1)))
    assert len(b.stream) == 2 and len(b.events) == 2
    assert evaluate(full_index(b.stream), b.events, k=2).hit_rate == 1.0


@given(st.integers(0, 10_000))
@settings(max_examples=15)
def test_bundle_invariants(seed):
    b = generate(SynthConfig(d=32, n_events=8, frames_per_event=(1, 12), seed=seed, n_sequences=2))
    np.testing.assert_allclose(np.linalg.norm(b.stream.embeddings, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(b.stream.timestamps, b.stream.frame_ids / 5.0)
    assert sorted(b.ground_truth) == b.stream.frame_ids.tolist()
    for e in b.events:
        ts = [t for f, t in zip(b.stream.frame_ids, b.stream.timestamps) if b.ground_truth[int(f)] == e.event_id]
        assert min(ts) <= e.t_start_s <= e.t_end_s <= max(ts)
    D = b.event_directions
    G = D @ D.T
    assert (G[~np.eye(len(D), dtype=bool)] <= 0.3).all()


def test_intra_event_similarity_near_target():
    b = generate(SynthConfig(seed=3))
    assert abs(b.metadata["realized_intra_event_sim"] - 0.97) <= 0.02


def test_filter_keeps_one_or_two_frames_per_event():
    b = generate(SynthConfig(seed=1))
    kept = novelty_filter(b.stream, 0.92).frame_ids
    per_event = np.bincount([b.ground_truth[int(f)] for f in kept], minlength=30)
    assert set(per_event.tolist()) <= {1, 2}


def test_sanity_ceiling_without_noise_or_rotation():
    b = generate(SynthConfig(query_noise_deg=0.0, cross_modal_rotation=np.eye(64), seed=2))
    assert evaluate(full_index(b.stream), b.events, k=1, tolerance_s=0.0).hit_rate == 1.0


def test_deterministic_bytes():
    a, b = crowd_out_benchmark(0), crowd_out_benchmark(0)
    assert stream_to_bytes(a.stream) == stream_to_bytes(b.stream)
    assert a.events == b.events
    assert a.metadata["attempts"] == b.metadata["attempts"]


def test_seeds_differ():
    assert stream_to_bytes(generate(SynthConfig(seed=0)).stream) != stream_to_bytes(generate(SynthConfig(seed=1)).stream)


def test_infeasible_geometry():
    with pytest.raises(GeometryInfeasibleError, match="increase d"):
        generate(SynthConfig(d=2, n_events=20, inter_event_sim_max=0.1, intra_event_sim=0.97))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(inter_event_sim_max=0.98, intra_event_sim=0.97)
    with pytest.raises(ValueError):
        SynthConfig(fps=0)
    with pytest.raises(ValueError):
        SynthConfig(n_events=3, frames_per_event=[1, 2])


def test_heavy_tail_creates_imbalance():
    b = generate(SynthConfig(d=64, n_events=30, frames_per_event=(1, 400), heavy_tail_alpha=0.8, seed=4))
    sizes = np.bincount(list(b.ground_truth.values()))
    assert sizes.max() >= 10 * np.median(sizes)


def test_crowd_out_witness():
    for seed in range(3):
        b = crowd_out_benchmark(seed)
        full = evaluate(full_index(b.stream), b.events, 5).hit_rate
        nov = evaluate(novelty_filter(b.stream, 0.92), b.events, 5).hit_rate
        assert full < 1.0 and nov > full
        assert b.metadata["check_full_hit"] == full
        sizes = np.bincount(list(b.ground_truth.values()))
        assert sorted(sizes.tolist()) == [10] * 29 + [500]


def test_rotation_and_adapter_pairs():
    b = crowd_out_benchmark(0, rotation_angle=1.0, n_adapter_pairs=50)
    R = random_rotation(64, 1.0, 0)
    np.testing.assert_allclose(R @ R.T, np.eye(64), atol=1e-10)
    assert len(b.adapter_pairs) == 50
    p = b.adapter_pairs[0]
    np.testing.assert_allclose(R.T @ p.source, p.target, atol=1e-12)


def test_oracle_rerank_space():
    b = with_oracle_rerank_space(generate(SynthConfig(d=16, n_events=4, frames_per_event=(2, 3))))
    assert b.rerank_stream.d == 4
    for e in b.events:
        assert e.rerank_query[e.event_id] == 1.0


def test_short_event_spans():
    b = short_event_benchmark(0)
    sizes = np.bincount(list(b.ground_truth.values()))
    assert sizes.min() >= 1 and sizes.max() <= 2
