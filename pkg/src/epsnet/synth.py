"""Synthetic frame streams with known event structure.

Each event has a unit direction. Its frames are the direction plus Gaussian
jitter in the tangent space, renormalized, so that two frames of the same
event have an expected similarity of ``intra_event_sim``. Events occupy
contiguous runs of frames in time. Each event's text query is its direction
rotated by a fixed angle (``query_noise_deg``) in a random tangent direction,
then optionally mapped through ``cross_modal_rotation`` to mimic a text
encoder whose space is misaligned with the image space.

Presets:

* :func:`crowd_out_benchmark`: one event with 50x the frames of the others
  and weakly aligned queries, so that near-duplicate frames of a few events
  fill the top-k of the unfiltered index.
* :func:`short_event_benchmark`: 1-2 frame events along a slow random walk of
  directions, so a low threshold merges neighbouring events.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .adapter import TrainPair
from .core import EventAnnotation, FrameStream
from .exceptions import GeometryInfeasibleError

__all__ = [
    "SynthBundle",
    "SynthConfig",
    "crowd_out_benchmark",
    "generate",
    "random_rotation",
    "short_event_benchmark",
    "with_oracle_rerank_space",
]

MAX_PLACEMENT_TRIES = 10_000
INTRA_SIM_TOLERANCE = 0.02


@dataclass(frozen=True, eq=False)
class SynthConfig:
    """Parameters of :func:`generate`.

    ``frames_per_event`` is either a ``(min, max)`` tuple (inclusive, drawn
    uniformly, or from a truncated Pareto law when ``heavy_tail_alpha`` is
    set) or a list of ``n_events`` explicit counts. ``event_layout="walk"`` places
    each event direction at similarity ``walk_step_sim`` from the previous
    one; ``"independent"`` draws them uniformly. Either way, no two events
    may exceed ``inter_event_sim_max``.
    """

    d: int = 64
    n_events: int = 30
    frames_per_event: tuple | Sequence[int] = (10, 10)
    intra_event_sim: float = 0.97
    inter_event_sim_max: float = 0.3
    query_noise_deg: float = 78.0
    cross_modal_rotation: np.ndarray | None = field(default=None, repr=False)
    fps: float = 5.0
    seed: int = 0
    sub_seed: int = 0
    event_layout: str = "independent"
    walk_step_sim: float = 0.93
    heavy_tail_alpha: float | None = None
    n_sequences: int = 1
    n_adapter_pairs: int = 0
    stream_id: str = "synth"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.n_events < 1:
            raise ValueError("n_events must be positive")
        if not 0 < self.inter_event_sim_max < self.intra_event_sim < 1:
            raise ValueError("need 0 < inter_event_sim_max < intra_event_sim < 1")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if not 0 <= self.query_noise_deg <= 180:
            raise ValueError("query_noise_deg must lie in [0, 180]")
        if self.event_layout not in ("independent", "walk"):
            raise ValueError("event_layout must be 'independent' or 'walk'")
        if self.event_layout == "walk" and not 0 < self.walk_step_sim < 1:
            raise ValueError("walk_step_sim must lie in (0, 1)")
        if not 1 <= self.n_sequences <= self.n_events:
            raise ValueError("n_sequences must lie in [1, n_events]")
        if self.n_adapter_pairs < 0:
            raise ValueError("n_adapter_pairs must be non-negative")
        if self.explicit_counts:
            counts = list(self.frames_per_event)
            if len(counts) != self.n_events or min(counts) < 1:
                raise ValueError("explicit frames_per_event needs n_events positive counts")
        else:
            lo, hi = self.frames_per_event
            if not 1 <= lo <= hi:
                raise ValueError("frames_per_event range must satisfy 1 <= min <= max")
        if self.cross_modal_rotation is not None:
            R = np.asarray(self.cross_modal_rotation, dtype=np.float64)
            if R.shape != (self.d, self.d) or not np.allclose(R @ R.T, np.eye(self.d), atol=1e-8):
                raise ValueError("cross_modal_rotation must be a d x d orthogonal matrix")
            object.__setattr__(self, "cross_modal_rotation", R)

    @property
    def explicit_counts(self) -> bool:
        fpe = self.frames_per_event
        return not (isinstance(fpe, tuple) and len(fpe) == 2)

    def summary(self) -> dict:
        return {
            "d": self.d,
            "n_events": self.n_events,
            "frames_per_event": list(self.frames_per_event),
            "intra_event_sim": self.intra_event_sim,
            "inter_event_sim_max": self.inter_event_sim_max,
            "query_noise_deg": self.query_noise_deg,
            "cross_modal_rotation": self.cross_modal_rotation is not None,
            "fps": self.fps,
            "seed": self.seed,
            "sub_seed": self.sub_seed,
            "event_layout": self.event_layout,
            "walk_step_sim": self.walk_step_sim,
            "heavy_tail_alpha": self.heavy_tail_alpha,
            "n_sequences": self.n_sequences,
            "n_adapter_pairs": self.n_adapter_pairs,
        }


@dataclass(eq=False)
class SynthBundle:
    stream: FrameStream
    events: list
    ground_truth: dict
    adapter_pairs: list | None = None
    rerank_stream: FrameStream | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def event_directions(self) -> np.ndarray:
        return self.metadata["_directions"]


def _unit(X):
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def _tangent(rng, e, n=None):
    """Gaussian vectors orthogonal to the unit vector ``e``."""
    g = rng.standard_normal((1 if n is None else n, e.shape[0]))
    g -= (g @ e)[:, None] * e
    return g[0] if n is None else g


def _rotate_towards(e, t, angle):
    return np.cos(angle) * e + np.sin(angle) * t / np.linalg.norm(t)


def _place_events(cfg: SynthConfig, rng) -> np.ndarray:
    dirs: list[np.ndarray] = []
    step = np.arccos(cfg.walk_step_sim)
    for _ in range(cfg.n_events):
        for _ in range(MAX_PLACEMENT_TRIES):
            if cfg.event_layout == "walk" and dirs:
                v = _rotate_towards(dirs[-1], _tangent(rng, dirs[-1]), step)
            else:
                v = _unit(rng.standard_normal(cfg.d))
            if not dirs or float(np.max(np.stack(dirs) @ v)) <= cfg.inter_event_sim_max:
                dirs.append(v)
                break
        else:
            raise GeometryInfeasibleError(
                f"could not place {cfg.n_events} event directions with pairwise similarity "
                f"<= {cfg.inter_event_sim_max} in d={cfg.d}; increase d or relax the cap"
            )
    return np.stack(dirs)


def _event_sizes(cfg: SynthConfig, rng) -> np.ndarray:
    if cfg.explicit_counts:
        return np.asarray(cfg.frames_per_event, dtype=np.int64)
    lo, hi = cfg.frames_per_event
    if cfg.heavy_tail_alpha is None:
        return rng.integers(lo, hi + 1, size=cfg.n_events)
    # truncated Pareto via inverse CDF
    a = cfg.heavy_tail_alpha
    u = rng.random(cfg.n_events)
    x = lo / (1 - u * (1 - (lo / (hi + 1)) ** a)) ** (1 / a)
    return np.clip(np.floor(x), lo, hi).astype(np.int64)


def _jitter_scale(cfg: SynthConfig) -> float:
    # E[frame . frame'] ~= 1 / (1 + s^2 (d - 1)) for tangent jitter of scale s
    return float(np.sqrt((1.0 / cfg.intra_event_sim - 1.0) / (cfg.d - 1)))


def generate(config: SynthConfig) -> SynthBundle:
    """Sample a stream, its events and (optionally) adapter training pairs."""
    cfg = config
    rng = np.random.default_rng([cfg.seed, cfg.sub_seed])
    dirs = _place_events(cfg, rng)
    sizes = _event_sizes(cfg, rng)
    order = rng.permutation(cfg.n_events) if cfg.event_layout == "independent" else np.arange(cfg.n_events)
    sigma = _jitter_scale(cfg)

    blocks, owners, intra = [], [], []
    for rank, j in enumerate(order):
        g = _tangent(rng, dirs[j], int(sizes[j]))
        F = _unit(dirs[j] + sigma * g)
        blocks.append(F)
        owners.append(np.full(len(F), rank))
        if len(F) > 1:
            G = F @ F.T
            intra.append((G.sum() - np.trace(G)) / (len(F) * (len(F) - 1)))
    X = np.vstack(blocks)
    owner = np.concatenate(owners)
    realized = float(np.mean(intra)) if intra else None
    if realized is not None and abs(realized - cfg.intra_event_sim) > INTRA_SIM_TOLERANCE:
        raise GeometryInfeasibleError(
            f"realized intra-event similarity {realized:.4f} is not within "
            f"{INTRA_SIM_TOLERANCE} of {cfg.intra_event_sim}; increase d"
        )
    stream = FrameStream(X, fps=cfg.fps, stream_id=cfg.stream_id)
    t = stream.timestamps

    event_dirs = dirs[order]  # indexed by event_id (time order)
    angle = np.deg2rad(cfg.query_noise_deg)
    R = cfg.cross_modal_rotation
    events = []
    for eid in range(cfg.n_events):
        e = event_dirs[eid]
        q = _rotate_towards(e, _tangent(rng, e), angle) if angle > 0 else e.copy()
        if R is not None:
            q = R @ q
        span = t[owner == eid]
        seq = f"{cfg.stream_id}/{eid * cfg.n_sequences // cfg.n_events}"
        events.append(EventAnnotation(eid, seq, span[0], span[-1], q))

    pairs = None
    if cfg.n_adapter_pairs:
        U = _unit(rng.standard_normal((cfg.n_adapter_pairs, cfg.d)))
        S = U if R is None else U @ R.T
        pairs = [TrainPair(s, u) for s, u in zip(S, U)]

    ground_truth = {int(f): int(o) for f, o in zip(stream.frame_ids, owner)}
    metadata = {
        "config": cfg.summary(),
        "realized_intra_event_sim": realized,
        "n_frames": len(stream),
        "_directions": event_dirs,
    }
    return SynthBundle(stream, events, ground_truth, pairs, None, metadata)


def with_oracle_rerank_space(bundle: SynthBundle) -> SynthBundle:
    """Attach a second-stage space that separates events perfectly.

    Every frame of event ``j`` (and the event's re-rank query) is the basis
    vector ``e_j`` in ``n_events`` dimensions.
    """
    n = len(bundle.events)
    owner = np.array([bundle.ground_truth[int(f)] for f in bundle.stream.frame_ids])
    B = np.eye(n)[owner]
    rerank_stream = FrameStream(
        B, bundle.stream.frame_ids, bundle.stream.timestamps, fps=bundle.stream.fps,
        stream_id=bundle.stream.stream_id + "/rerank",
    )
    events = [
        EventAnnotation(e.event_id, e.sequence_id, e.t_start_s, e.t_end_s, e.query, np.eye(n)[i])
        for i, e in enumerate(bundle.events)
    ]
    return replace(bundle, events=events, rerank_stream=rerank_stream)


def random_rotation(d: int, angle: float, seed=0) -> np.ndarray:
    """Rotation ``expm(angle * A)`` for a random skew ``A`` with spectral norm 1.

    ``angle`` (radians) is the largest principal rotation angle.
    """
    rng = np.random.default_rng([int(seed), 7])
    A = rng.standard_normal((d, d))
    A = A - A.T
    A /= np.linalg.norm(A, 2)
    return expm(angle * A)


CROWD_OUT_DEFAULTS = dict(
    d=64,
    n_events=30,
    frames_per_event=[500] + [10] * 29,
    intra_event_sim=0.97,
    inter_event_sim_max=0.3,
    query_noise_deg=78.0,
    fps=5.0,
    stream_id="crowd_out",
)
CROWD_OUT_TAU = 0.92
CROWD_OUT_MAX_ATTEMPTS = 100


def crowd_out_benchmark(seed=0, *, rotation_angle=None, n_adapter_pairs=0, k=5, tolerance_s=0.5) -> SynthBundle:
    """Seeded preset that is guaranteed to show crowd-out.

    30 events in d=64: one with 500 frames, 29 with 10, intra-event
    similarity 0.97, event directions at most 0.3 apart, queries 78 degrees
    off their event direction. The bundle is accepted only if the full index
    misses at least one event at Hit@k and the novelty index (tau=0.92)
    scores strictly higher; otherwise the sub-seed is incremented. The number
    of attempts is recorded in ``metadata["attempts"]``.

    With ``rotation_angle`` set, queries are passed through
    :func:`random_rotation` and ``n_adapter_pairs`` training pairs for the
    inverse map are attached. The acceptance check always uses the
    unrotated queries.
    """
    from .evaluation import evaluate
    from .filter import novelty_filter
    from .core import full_index

    R = None if rotation_angle is None else random_rotation(CROWD_OUT_DEFAULTS["d"], rotation_angle, seed)
    for attempt in range(CROWD_OUT_MAX_ATTEMPTS):
        plain = generate(SynthConfig(seed=seed, sub_seed=attempt, **CROWD_OUT_DEFAULTS))
        full = evaluate(full_index(plain.stream), plain.events, k, tolerance_s).hit_rate
        nov = evaluate(novelty_filter(plain.stream, CROWD_OUT_TAU), plain.events, k, tolerance_s).hit_rate
        if full < 1.0 and nov > full:
            break
    else:
        raise GeometryInfeasibleError(f"no crowd-out instance within {CROWD_OUT_MAX_ATTEMPTS} attempts")
    if R is not None or n_adapter_pairs:
        bundle = generate(
            SynthConfig(seed=seed, sub_seed=attempt, cross_modal_rotation=R,
                        n_adapter_pairs=n_adapter_pairs, **CROWD_OUT_DEFAULTS)
        )
    else:
        bundle = plain
    bundle.metadata.update(
        preset="crowd_out", attempts=attempt + 1, check_full_hit=full, check_novelty_hit=nov,
        rotation_angle=rotation_angle,
    )
    return bundle


SHORT_EVENT_DEFAULTS = dict(
    d=64,
    n_events=80,
    frames_per_event=(1, 2),
    intra_event_sim=0.99,
    inter_event_sim_max=0.95,
    event_layout="walk",
    walk_step_sim=0.93,
    query_noise_deg=60.0,
    fps=1.0,
    stream_id="short_events",
)


def short_event_benchmark(seed=0, **overrides) -> SynthBundle:
    """1-2 frame events at 1 fps whose directions drift by ~21 degrees per event.

    Consecutive events are more similar (0.93) than a low threshold such as
    0.90, so the filter drops every other event there; at 0.96 it keeps them.
    """
    params = {**SHORT_EVENT_DEFAULTS, **overrides}
    bundle = generate(SynthConfig(seed=seed, **params))
    bundle.metadata["preset"] = "short_events"
    return bundle
