"""riskrank: retrieval evaluation and embedding-adapter finetuning.

Builds dense / lexical / hybrid retrieval over question-context corpora,
trains a linear adapter on frozen base embeddings with an in-batch
ranking loss, and scores systems with MRR@k, MAP@k, NDCG@k, and HR@k.
"""

from .benchmark import (
    BenchmarkTable,
    EvalConfig,
    MetricComparison,
    compare_systems,
    emit_report,
    run_eval,
)
from .cache import EmbeddingRecord, VectorCache, text_digest
from .corpus import (
    Chunk,
    DatasetSplit,
    Document,
    QAPair,
    build_qrels,
    chunk_document,
    load_documents,
    load_qa_pairs,
    save_qa_pairs,
    split_pairs,
    synth_dataset,
)
from .embedding import HashEmbedder, cosine, hash_embed, l2_normalize, tokenize
from .finetune import (
    AdapterParams,
    LossReport,
    TrainingBatch,
    TrainingConfig,
    apply_adapter,
    batch_similarity,
    finite_diff_check,
    load_adapter,
    mnr_loss,
    mnr_loss_grad,
    save_adapter,
    train_adapter,
)
from .index import (
    DenseIndex,
    LexicalIndex,
    RankedHit,
    RankedList,
    build_dense_index,
    build_lexical_index,
    bm25_score,
    dense_search,
    lexical_search,
    rerank,
    rrf_fuse,
)
from .metrics import (
    MetricReport,
    evaluate_run,
    hit_rate_at_k,
    map_at_k,
    mrr_at_k,
    ndcg_at_k,
)
from .remote import ProviderConfig, RemoteEmbedder, RemoteEmbedError, remote_embed

__version__ = "0.1.0"

__all__ = [
    "AdapterParams",
    "BenchmarkTable",
    "Chunk",
    "DatasetSplit",
    "DenseIndex",
    "Document",
    "EmbeddingRecord",
    "EvalConfig",
    "HashEmbedder",
    "LexicalIndex",
    "LossReport",
    "MetricComparison",
    "MetricReport",
    "ProviderConfig",
    "QAPair",
    "RankedHit",
    "RankedList",
    "RemoteEmbedError",
    "RemoteEmbedder",
    "TrainingBatch",
    "TrainingConfig",
    "VectorCache",
    "apply_adapter",
    "batch_similarity",
    "bm25_score",
    "build_dense_index",
    "build_lexical_index",
    "build_qrels",
    "chunk_document",
    "compare_systems",
    "cosine",
    "dense_search",
    "emit_report",
    "evaluate_run",
    "finite_diff_check",
    "hash_embed",
    "hit_rate_at_k",
    "l2_normalize",
    "lexical_search",
    "load_adapter",
    "load_documents",
    "load_qa_pairs",
    "map_at_k",
    "mnr_loss",
    "mnr_loss_grad",
    "mrr_at_k",
    "ndcg_at_k",
    "remote_embed",
    "rerank",
    "rrf_fuse",
    "run_eval",
    "save_adapter",
    "save_qa_pairs",
    "split_pairs",
    "synth_dataset",
    "text_digest",
    "tokenize",
    "train_adapter",
]
