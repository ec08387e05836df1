"""File formats.

Embedding stream (``.esf``), little-endian throughout::

    header   magic "ESF1" | version u16 | d u32 | count u64 | fps_millis u32   (22 bytes)
    record   frame_id u64 | timestamp_micros u64 | d x float32             (16 + 4d bytes)

A 512-dim record is 2064 bytes. Annotations and adapter training pairs are
JSON lines; indices, reports and sweep tables are JSON documents; adapter
checkpoints are a small binary header (magic "LITA") followed by the four
parameter arrays as float64.
"""

from __future__ import annotations

import base64
import json
import os
import struct
import warnings
from pathlib import Path

import numpy as np

from .adapter import AdapterModel, TrainPair
from .core import EventAnnotation, FrameStream, KeyframeIndex, Provenance
from .evaluation import EvalReport
from .exceptions import AnnotationError, CorruptEmbeddingError, FormatError, TruncationError

__all__ = [
    "ESF_HEADER",
    "ESF_MAGIC",
    "ESF_VERSION",
    "read_adapter",
    "read_annotations",
    "read_bundle",
    "read_index",
    "read_pairs",
    "read_report",
    "read_stream",
    "record_size",
    "stream_from_bytes",
    "stream_to_bytes",
    "write_adapter",
    "write_annotations",
    "write_bundle",
    "write_index",
    "write_json",
    "write_pairs",
    "write_report",
    "write_stream",
]

ESF_MAGIC = b"ESF1"
ESF_VERSION = 1
ESF_HEADER = struct.Struct("<4sHIQI")
LITA_MAGIC = b"LITA"
LITA_VERSION = 1
LITA_HEADER = struct.Struct("<4sHII")
NORM_WARN = 1e-3
NORM_FAIL = 0.1
INDEX_SCHEMA = 1


def record_size(d: int) -> int:
    return 16 + 4 * d


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("frame_id", "<u8"), ("timestamp_micros", "<u8"), ("embedding", "<f4", (d,))])


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# ---- embedding streams -------------------------------------------------------


def stream_to_bytes(stream: FrameStream) -> bytes:
    fps_millis = 0 if stream.fps is None else int(round(stream.fps * 1000))
    header = ESF_HEADER.pack(ESF_MAGIC, ESF_VERSION, stream.d, len(stream), fps_millis)
    rec = np.empty(len(stream), dtype=_record_dtype(stream.d))
    rec["frame_id"] = stream.frame_ids
    rec["timestamp_micros"] = np.rint(stream.timestamps * 1e6).astype(np.uint64)
    rec["embedding"] = stream.embeddings.astype(np.float32)
    return header + rec.tobytes()


def stream_from_bytes(data: bytes, *, stream_id="stream") -> FrameStream:
    if len(data) < ESF_HEADER.size:
        raise TruncationError("file shorter than the 22-byte header", len(data))
    magic, version, d, count, fps_millis = ESF_HEADER.unpack_from(data)
    if magic != ESF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {ESF_MAGIC!r}")
    if version != ESF_VERSION:
        raise FormatError(f"unsupported version {version}, expected {ESF_VERSION}")
    if d == 0:
        raise FormatError("header declares d = 0")
    rs = record_size(d)
    body = len(data) - ESF_HEADER.size
    # size arithmetic before touching the records
    if body < count * rs:
        complete = body // rs
        raise TruncationError(
            f"header declares {count} records but only {complete} are complete",
            ESF_HEADER.size + complete * rs,
        )
    if body > count * rs:
        raise FormatError(f"{body - count * rs} trailing bytes after {count} records")
    rec = np.frombuffer(data, dtype=_record_dtype(d), count=count, offset=ESF_HEADER.size)
    X = rec["embedding"].astype(np.float64)
    ids = rec["frame_id"].astype(np.int64)
    if count:
        dev = np.abs(np.linalg.norm(X, axis=1) - 1.0)
        bad = np.flatnonzero(~(dev <= NORM_FAIL))
        if bad.size:
            f = int(ids[bad[0]])
            raise CorruptEmbeddingError(f"frame_id {f}: embedding norm deviates from 1 by more than {NORM_FAIL}", f)
        drift = int(np.sum(dev > NORM_WARN))
        if drift:
            warnings.warn(f"re-normalizing {drift} embeddings whose norm deviates by > {NORM_WARN}", stacklevel=3)
    ts = rec["timestamp_micros"].astype(np.float64) / 1e6
    fps = fps_millis / 1000 if fps_millis else None
    return FrameStream(X.reshape(count, d), ids, ts, fps=fps, stream_id=stream_id)


def write_stream(path, stream: FrameStream) -> None:
    _atomic_write(path, stream_to_bytes(stream))


def read_stream(path, *, stream_id=None) -> FrameStream:
    path = Path(path)
    return stream_from_bytes(path.read_bytes(), stream_id=stream_id or path.stem)


# ---- annotations and training pairs -------------------------------------------


def _floats(v) -> list:
    return [float(x) for x in np.asarray(v, dtype=np.float64)]


def _annotation_record(e: EventAnnotation) -> dict:
    rec = {
        "event_id": e.event_id,
        "sequence_id": e.sequence_id,
        "t_start_s": e.t_start_s,
        "t_end_s": e.t_end_s,
        "query": _floats(e.query),
    }
    if e.rerank_query is not None:
        rec["rerank_query"] = _floats(e.rerank_query)
    return rec


def _jsonl(records) -> bytes:
    return "".join(json.dumps(r) + "\n" for r in records).encode()


def write_annotations(path, events) -> None:
    _atomic_write(path, _jsonl(_annotation_record(e) for e in events))


def _vector(obj, key, lineno, dim):
    v = obj.get(key)
    if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise AnnotationError(f"{key!r} must be a non-empty array of numbers", lineno)
    if dim is not None and len(v) != dim:
        raise AnnotationError(f"{key!r} has dimension {len(v)}, earlier lines have {dim}", lineno)
    return np.asarray(v, dtype=np.float64)


def read_annotations(path) -> list:
    """Load every annotation or none; errors name the offending line."""
    events = []
    dims = {"query": None, "rerank_query": None}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise AnnotationError("expected a JSON object", lineno)
            for key in ("event_id", "sequence_id", "t_start_s", "t_end_s", "query"):
                if key not in obj:
                    raise AnnotationError(f"missing field {key!r}", lineno)
            q = _vector(obj, "query", lineno, dims["query"])
            dims["query"] = q.shape[0]
            rq = None
            if obj.get("rerank_query") is not None:
                rq = _vector(obj, "rerank_query", lineno, dims["rerank_query"])
                dims["rerank_query"] = rq.shape[0]
            try:
                events.append(
                    EventAnnotation(obj["event_id"], obj["sequence_id"], obj["t_start_s"], obj["t_end_s"], q, rq)
                )
            except (TypeError, ValueError) as exc:
                raise AnnotationError(str(exc), lineno) from None
    return events


def write_pairs(path, pairs) -> None:
    _atomic_write(path, _jsonl({"source": _floats(p.source), "target": _floats(p.target)} for p in pairs))


def read_pairs(path) -> list:
    pairs = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict) or "source" not in obj or "target" not in obj:
                raise AnnotationError("expected an object with 'source' and 'target'", lineno)
            s = _vector(obj, "source", lineno, dim)
            dim = s.shape[0]
            t = _vector(obj, "target", lineno, dim)
            try:
                pairs.append(TrainPair(s, t))
            except ValueError as exc:
                raise AnnotationError(str(exc), lineno) from None
    return pairs


# ---- indices, reports ---------------------------------------------------------


def _dumps(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode()


def write_json(path, obj) -> None:
    _atomic_write(path, _dumps(obj))


def index_to_dict(index: KeyframeIndex) -> dict:
    return {
        "schema_version": INDEX_SCHEMA,
        "provenance": index.provenance.to_dict(),
        "stream_id": index.keyframes.stream_id,
        "n_frames": len(index),
        "d": index.d,
        "esf": base64.b64encode(stream_to_bytes(index.keyframes)).decode("ascii"),
    }


def index_from_dict(obj: dict) -> KeyframeIndex:
    if obj.get("schema_version") != INDEX_SCHEMA:
        raise FormatError(f"unsupported index schema_version {obj.get('schema_version')!r}")
    try:
        frames = stream_from_bytes(base64.b64decode(obj["esf"], validate=True), stream_id=obj["stream_id"])
        prov = Provenance(**obj["provenance"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed index file: {exc}") from None
    return KeyframeIndex(frames, prov)


def write_index(path, index: KeyframeIndex) -> None:
    write_json(path, index_to_dict(index))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from None


def read_index(path) -> KeyframeIndex:
    return index_from_dict(_load_json(path))


def write_report(path, report: EvalReport) -> None:
    write_json(path, report.to_dict())


def read_report(path) -> EvalReport:
    try:
        return EvalReport.from_dict(_load_json(path))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed report: {exc}") from None


# ---- adapter checkpoints --------------------------------------------------------


def adapter_to_bytes(model: AdapterModel) -> bytes:
    header = LITA_HEADER.pack(LITA_MAGIC, LITA_VERSION, model.d, model.hidden_dim)
    return header + model.to_vector().astype("<f8").tobytes()


def adapter_from_bytes(data: bytes) -> AdapterModel:
    if len(data) < LITA_HEADER.size:
        raise TruncationError("checkpoint shorter than its header", len(data))
    magic, version, d, h = LITA_HEADER.unpack_from(data)
    if magic != LITA_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {LITA_MAGIC!r}")
    if version != LITA_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    n = 2 * d * h + h + d
    expected = LITA_HEADER.size + 8 * n
    if len(data) < expected:
        raise TruncationError(f"checkpoint needs {expected} bytes, has {len(data)}", len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes in checkpoint")
    theta = np.frombuffer(data, dtype="<f8", count=n, offset=LITA_HEADER.size).astype(np.float64)
    return AdapterModel.from_vector(theta, d, h)


def write_adapter(path, model: AdapterModel) -> None:
    _atomic_write(path, adapter_to_bytes(model))


def read_adapter(path) -> AdapterModel:
    return adapter_from_bytes(Path(path).read_bytes())


# ---- synthetic bundles ----------------------------------------------------------


def write_bundle(directory, bundle) -> dict:
    """Write a :class:`~epsnet.synth.SynthBundle` as a directory of files.

    Returns the mapping of artifact name to file name.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = {"stream": "stream.esf", "events": "events.jsonl"}
    write_stream(root / files["stream"], bundle.stream)
    write_annotations(root / files["events"], bundle.events)
    if bundle.adapter_pairs:
        files["pairs"] = "pairs.jsonl"
        write_pairs(root / files["pairs"], bundle.adapter_pairs)
    if bundle.rerank_stream is not None:
        files["rerank"] = "rerank.esf"
        write_stream(root / files["rerank"], bundle.rerank_stream)
    meta = {k: v for k, v in bundle.metadata.items() if not k.startswith("_")}
    meta["files"] = files
    meta["ground_truth"] = {str(f): e for f, e in bundle.ground_truth.items()}
    write_json(root / "bundle.json", meta)
    return files


def read_bundle(directory):
    from .synth import SynthBundle

    root = Path(directory)
    meta = _load_json(root / "bundle.json")
    files = meta.pop("files")
    gt = {int(f): e for f, e in meta.pop("ground_truth").items()}
    return SynthBundle(
        stream=read_stream(root / files["stream"], stream_id=(meta.get("config") or {}).get("stream_id")),
        events=read_annotations(root / files["events"]),
        ground_truth=gt,
        adapter_pairs=read_pairs(root / files["pairs"]) if "pairs" in files else None,
        rerank_stream=read_stream(root / files["rerank"]) if "rerank" in files else None,
        metadata=meta,
    )
