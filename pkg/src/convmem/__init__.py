"""Graph-structured long-term memory for multi-session conversations.

Sessions are segmented into topic units, gated for long-term value,
summarized, and mined for entities and relations; everything lands in
one heterogeneous graph. Queries seed the graph through multi-aspect
similarity search, expand a focused subgraph, and rank turns with a
personalized random walk whose edge weights are recomputed per query.
"""

from .answer import AnswerComposer, compose_context
from .embedding import (
    DEFAULT_DIM,
    Embedder,
    Embedding,
    HashEmbedder,
    RemoteEmbedder,
    cosine,
    embedder_from_env,
)
from .errors import (
    ConvmemError,
    CorpusFormatError,
    DimensionError,
    EmptyGraph,
    IntegrityError,
    InternalInvariantError,
    InvalidInput,
    InvalidName,
    JudgeUnparseable,
    ProviderRejected,
    ProviderUnavailable,
    SnapshotCorrupt,
    SnapshotVersionError,
    StructuredOutputError,
)
from .evaluation import (
    Conversation,
    Corpus,
    EvalHarness,
    EvalReport,
    Question,
    QuestionResult,
    SessionRecord,
    hit_at_k,
    load_corpus,
    recall_at_k,
    save_corpus,
    sessions_from_turns,
    token_f1,
    turn_coverage,
)
from .gateway import (
    AccountingSnapshot,
    ChatProvider,
    CompletionResult,
    FlakyChatProvider,
    HttpChatProvider,
    LlmGateway,
    MockChatProvider,
    NullChatProvider,
    gateway_from_env,
)
from .ingest import IngestPipeline, IngestReport
from .model import (
    Entity,
    EvidenceBundle,
    QueryContext,
    RelationEdge,
    RetrievalConfig,
    SegmentRecord,
    SubgraphStats,
    Turn,
    entity_node,
    normalize_name,
    segment_node,
    turn_node,
)
from .prompts import PromptInstance, load_template, render_template
from .retrieval import RetrievalEngine, ScoreVector, SeedSet, Subgraph
from .service import create_app
from .store import GraphStats, GraphStore, MemoryGraph

__version__ = "0.1.0"

__all__ = [
    "AccountingSnapshot",
    "AnswerComposer",
    "ChatProvider",
    "CompletionResult",
    "Conversation",
    "ConvmemError",
    "Corpus",
    "CorpusFormatError",
    "DEFAULT_DIM",
    "DimensionError",
    "Embedder",
    "Embedding",
    "EmptyGraph",
    "Entity",
    "EvalHarness",
    "EvalReport",
    "EvidenceBundle",
    "FlakyChatProvider",
    "GraphStats",
    "GraphStore",
    "HashEmbedder",
    "HttpChatProvider",
    "IngestPipeline",
    "IngestReport",
    "IntegrityError",
    "InternalInvariantError",
    "InvalidInput",
    "InvalidName",
    "JudgeUnparseable",
    "LlmGateway",
    "MemoryGraph",
    "MockChatProvider",
    "NullChatProvider",
    "PromptInstance",
    "ProviderRejected",
    "ProviderUnavailable",
    "QueryContext",
    "Question",
    "QuestionResult",
    "RelationEdge",
    "RemoteEmbedder",
    "RetrievalConfig",
    "RetrievalEngine",
    "ScoreVector",
    "SeedSet",
    "SegmentRecord",
    "SessionRecord",
    "SnapshotCorrupt",
    "SnapshotVersionError",
    "StructuredOutputError",
    "Subgraph",
    "SubgraphStats",
    "Turn",
    "compose_context",
    "cosine",
    "create_app",
    "embedder_from_env",
    "entity_node",
    "gateway_from_env",
    "hit_at_k",
    "load_corpus",
    "load_template",
    "normalize_name",
    "recall_at_k",
    "render_template",
    "save_corpus",
    "segment_node",
    "sessions_from_turns",
    "token_f1",
    "turn_coverage",
    "turn_node",
    "__version__",
]
