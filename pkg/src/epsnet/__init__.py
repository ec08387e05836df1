"""Streaming novelty filtering of frame embeddings and retrieval evaluation."""

from .adapter import (
    AdapterConfig,
    AdapterModel,
    ResidualMLPAdapter,
    TrainPair,
    TrainResult,
    adapter_forward,
    adapter_gradients,
    adapter_loss,
    adapter_train,
    gradient_check,
)
from .baselines import (
    FarthestPointSelector,
    KMeansSelector,
    RandomSelector,
    SelectionRequest,
    UniformSelector,
    farthest_point_select,
    kmeans_select,
    random_select,
    uniform_select,
)
from .core import (
    EventAnnotation,
    FrameRecord,
    FrameStream,
    KeyframeIndex,
    Provenance,
    cosine,
    full_index,
    normalize,
)
from .evaluation import (
    EvalReport,
    bootstrap_delta,
    compare_methods,
    evaluate,
    hit_at_k,
    sign_test,
    tau_sweep,
)
from .exceptions import *  # noqa: F401,F403
from .filter import (
    EpsNetReport,
    FilterConfig,
    NoveltyFilter,
    TemporalMemory,
    compression_ratio,
    novelty_filter,
    verify_epsnet,
)
from .index import (
    CosineIndex,
    DualEmbeddingIndex,
    RetrievalResult,
    candidates_for_hit_rate,
    rerank,
    top_k,
)
from .synth import SynthBundle, SynthConfig, crowd_out_benchmark, generate, short_event_benchmark

__version__ = "0.1.0"
