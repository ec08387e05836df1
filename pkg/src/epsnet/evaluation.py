"""Hit@k evaluation, the matched-count method comparison, and statistics.

A retrieval for an event is a hit when any of its top-k frames has a
timestamp inside ``[t_start - tol, t_end + tol]`` (bounds inclusive).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .adapter import AdapterModel, adapter_forward
from .baselines import SELECTORS, SelectionRequest
from .core import EventAnnotation, FrameStream, KeyframeIndex, full_index
from .exceptions import DimensionMismatchError
from .filter import compression_ratio, novelty_filter
from .index import DualEmbeddingIndex, RetrievalResult, rank_order, rerank

__all__ = [
    "BootstrapResult",
    "Comparison",
    "EvalReport",
    "EventAnnotation",
    "SignTestResult",
    "bootstrap_delta",
    "compare_methods",
    "evaluate",
    "hit_at_k",
    "sign_test",
    "tau_sweep",
]

SCHEMA_VERSION = 1
METHOD_ORDER = ("full", "novelty", "kmeans", "fp", "uniform", "random")


def hit_at_k(result: RetrievalResult, event: EventAnnotation, tolerance_s: float) -> bool:
    if tolerance_s < 0:
        raise ValueError("tolerance_s must be non-negative")
    if len(result) == 0:
        return False
    return bool(event.matches(result.timestamps, tolerance_s).any())


@dataclass(eq=False)
class EvalReport:
    per_event: list
    per_sequence: dict
    aggregate: dict
    stats: dict | None = None

    @property
    def hit_rate(self) -> float:
        return self.aggregate["hit_at_k"]

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "aggregate": dict(self.aggregate),
            "per_sequence": dict(self.per_sequence),
            "per_event": [dict(e) for e in self.per_event],
        }
        if self.stats is not None:
            out["stats"] = self.stats
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {version!r}")
        return cls(
            per_event=[dict(e) for e in data["per_event"]],
            per_sequence=dict(data["per_sequence"]),
            aggregate=dict(data["aggregate"]),
            stats=data.get("stats"),
        )

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def _queries(events, index: KeyframeIndex, adapter: AdapterModel | None) -> np.ndarray:
    Q = np.stack([e.query for e in events])
    if adapter is not None:
        if Q.shape[1] != adapter.d:
            raise DimensionMismatchError(
                f"adapter stage: event queries have dimension {Q.shape[1]}, adapter expects {adapter.d}"
            )
        Q = adapter_forward(adapter, Q)
    if Q.shape[1] != index.d:
        stage = "after adapter" if adapter is not None else "query"
        raise DimensionMismatchError(
            f"first-stage index: {stage} dimension {Q.shape[1]} does not match index dimension {index.d}"
        )
    return Q


def evaluate(
    index: KeyframeIndex,
    events: Sequence[EventAnnotation],
    k: int = 5,
    tolerance_s: float = 0.5,
    adapter: AdapterModel | None = None,
    rerank_space=None,
    n_candidates: int = 50,
) -> EvalReport:
    """Hit@k of ``index`` over ``events``.

    ``adapter`` maps each event query before the search. ``rerank_space``
    (a :class:`FrameStream`, a mapping ``frame_id -> embedding`` or a ready
    :class:`DualEmbeddingIndex`) turns on two-stage retrieval: the first
    ``n_candidates`` are rescored with each event's ``rerank_query``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if tolerance_s < 0:
        raise ValueError("tolerance_s must be non-negative")
    per_event = []
    if events:
        Q = _queries(events, index, adapter)
        dual = None
        if rerank_space is not None:
            dual = rerank_space if isinstance(rerank_space, DualEmbeddingIndex) else DualEmbeddingIndex(index, rerank_space)
            missing = [e.event_id for e in events if e.rerank_query is None]
            if missing:
                raise ValueError(f"re-rank stage: events without rerank_query: {missing[:5]}")
        S = Q @ index.embeddings.T if dual is None else None
        for i, event in enumerate(events):
            if dual is None:
                pos = rank_order(S[i], index.frame_ids, k)
                ts = index.timestamps[pos]
            else:
                ts = rerank(dual, Q[i], event.rerank_query, max(n_candidates, k), k).timestamps
            match = np.flatnonzero(event.matches(ts, tolerance_s))
            per_event.append(
                {
                    "event_id": event.event_id,
                    "sequence_id": event.sequence_id,
                    "hit": bool(match.size),
                    "best_rank": int(match[0]) + 1 if match.size else None,
                }
            )
    hits = np.array([e["hit"] for e in per_event], dtype=float)
    per_sequence = {}
    for seq in dict.fromkeys(e["sequence_id"] for e in per_event):
        per_sequence[str(seq)] = float(np.mean([e["hit"] for e in per_event if e["sequence_id"] == seq]))
    aggregate = {
        "hit_at_k": float(hits.mean()) if hits.size else 0.0,
        "k": int(k),
        "tolerance_s": float(tolerance_s),
        "method": index.method,
        "frame_count": len(index),
        "n_events": len(per_event),
        "adapter": adapter is not None,
        "rerank_candidates": int(n_candidates) if rerank_space is not None else None,
    }
    return EvalReport(per_event, per_sequence, aggregate)


class SignTestResult(NamedTuple):
    p_value: float
    wins: int
    losses: int
    n: int
    all_ties: bool


def sign_test(per_sequence_a, per_sequence_b) -> SignTestResult:
    """Exact two-sided sign test on paired values; ties are dropped.

    ``p = 2 * P(X >= max(wins, losses))`` with ``X ~ Binomial(n, 1/2)``,
    capped at 1. When every pair ties the result is ``p = 1`` with
    ``all_ties`` set (and a warning is emitted).
    """
    a = np.asarray(per_sequence_a, dtype=float)
    b = np.asarray(per_sequence_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("sign_test needs two equal-length, non-empty sequences")
    wins = int(np.sum(a > b))
    losses = int(np.sum(a < b))
    n = wins + losses
    if n == 0:
        warnings.warn("sign test: all pairs tied, p-value set to 1", RuntimeWarning, stacklevel=2)
        return SignTestResult(1.0, 0, 0, 0, True)
    m = max(wins, losses)
    tail = sum(math.comb(n, i) for i in range(m, n + 1))
    p = min(1.0, 2 * tail / 2**n)
    return SignTestResult(float(p), wins, losses, n, False)


class BootstrapResult(NamedTuple):
    median_delta: float
    min_delta: float
    fraction_positive: float


def bootstrap_delta(per_sequence_a, per_sequence_b, trials: int = 1000, seed=0) -> BootstrapResult:
    """Resample sequences with replacement; report the spread of mean(a) - mean(b)."""
    a = np.asarray(per_sequence_a, dtype=float)
    b = np.asarray(per_sequence_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("bootstrap_delta needs two equal-length sequences of length >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, a.size, size=(trials, a.size))
    deltas = (a - b)[idx].mean(axis=1)
    return BootstrapResult(float(np.median(deltas)), float(deltas.min()), float(np.mean(deltas > 0)))


def _paired_sequences(report_a: EvalReport, report_b: EvalReport):
    keys = list(report_a.per_sequence)
    return [report_a.per_sequence[s] for s in keys], [report_b.per_sequence[s] for s in keys]


def _pair_stats(nov: EvalReport, full: EvalReport, trials: int, seed) -> dict:
    a, b = _paired_sequences(nov, full)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        st = sign_test(a, b)
    stats = {
        "sign_test_p": st.p_value,
        "sign_test_wins": st.wins,
        "sign_test_losses": st.losses,
        "sign_test_all_ties": st.all_ties,
        "n_sequences": len(a),
        "bootstrap": None,
    }
    if len(a) >= 2:
        bs = bootstrap_delta(a, b, trials, seed)
        stats["bootstrap"] = bs._asdict()
    return stats


@dataclass(eq=False)
class Comparison:
    rows: list
    reports: dict = field(repr=False)
    stats: dict
    params: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "params": dict(self.params),
            "rows": [dict(r) for r in self.rows],
            "stats": self.stats,
        }

    def row(self, method: str) -> dict:
        return next(r for r in self.rows if r["method"] == method)

    def render(self) -> str:
        head = f"{'method':<8} {'frames':>7} {'Hit@' + str(self.params['k']):>7}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r['method']:<8} {r['frame_count']:>7d} {100 * r['hit_at_k']:>6.1f}%")
        p = self.stats["sign_test_p"]
        lines.append(f"sign test (novelty vs full): p = {p:.4g}")
        if self.stats.get("bootstrap"):
            bs = self.stats["bootstrap"]
            lines.append(
                "bootstrap delta: median {:+.3f}, min {:+.3f}, positive {:.1%}".format(
                    bs["median_delta"], bs["min_delta"], bs["fraction_positive"]
                )
            )
        return "\n".join(lines)


def compare_methods(
    stream: FrameStream,
    events: Sequence[EventAnnotation],
    tau: float = 0.92,
    k: int = 5,
    tolerance_s: float = 0.5,
    seed=0,
    adapter: AdapterModel | None = None,
    bootstrap_trials: int = 1000,
) -> Comparison:
    """Evaluate all six strategies with every baseline matched to the novelty count."""
    nov_index = novelty_filter(stream, tau)
    k_match = len(nov_index)
    indices = {"full": full_index(stream), "novelty": nov_index}
    for method in ("kmeans", "fp", "uniform", "random"):
        indices[method] = SELECTORS[method](SelectionRequest(stream, k_match, seed))
    reports = {m: evaluate(indices[m], events, k, tolerance_s, adapter) for m in METHOD_ORDER}
    # identical protocol across methods
    assert len({(r.aggregate["k"], r.aggregate["n_events"]) for r in reports.values()}) == 1
    assert all(len(indices[m]) == k_match for m in METHOD_ORDER if m != "full")
    rows = [
        {"method": m, "frame_count": len(indices[m]), "hit_at_k": reports[m].hit_rate}
        for m in METHOD_ORDER
    ]
    stats = _pair_stats(reports["novelty"], reports["full"], bootstrap_trials, seed)
    params = {
        "tau": float(tau), "k": int(k), "tolerance_s": float(tolerance_s), "seed": seed,
        "n_frames": len(stream), "n_events": len(events),
        "compression_ratio": compression_ratio(len(stream), nov_index),
    }
    return Comparison(rows, reports, stats, params)


def tau_sweep(
    stream: FrameStream,
    events: Sequence[EventAnnotation],
    taus: Sequence[float],
    k: int = 5,
    tolerance_s: float = 0.5,
) -> list:
    """One row per threshold: compression, novelty/uniform/full Hit@k and per-sequence wins.

    ``nov_beats_full`` counts sequences where novelty is strictly better.
    """
    if not len(taus):
        raise ValueError("tau_sweep needs at least one tau")
    full = evaluate(full_index(stream), events, k, tolerance_s)
    rows = []
    for tau in taus:
        nov_index = novelty_filter(stream, tau)
        uni_index = SELECTORS["uniform"](SelectionRequest(stream, len(nov_index)))
        nov = evaluate(nov_index, events, k, tolerance_s)
        uni = evaluate(uni_index, events, k, tolerance_s)
        a, b = _paired_sequences(nov, full)
        rows.append(
            {
                "tau": float(tau),
                "compression_ratio": compression_ratio(len(stream), nov_index),
                "frame_count": len(nov_index),
                "novelty": nov.hit_rate,
                "uniform": uni.hit_rate,
                "full": full.hit_rate,
                "nov_beats_full": int(sum(x > y for x, y in zip(a, b))),
                "n_sequences": len(a),
            }
        )
    return rows


def render_sweep(rows) -> str:
    head = f"{'tau':>5} {'comp':>7} {'novelty':>8} {'uniform':>8} {'full':>6} {'nov>full':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['tau']:>5.2f} {r['compression_ratio']:>6.1f}x {100 * r['novelty']:>7.1f}% "
            f"{100 * r['uniform']:>7.1f}% {100 * r['full']:>5.1f}% "
            f"{r['nov_beats_full']:>4d}/{r['n_sequences']:<4d}"
        )
    return "\n".join(lines)
