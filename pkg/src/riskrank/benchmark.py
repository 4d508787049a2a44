"""End-to-end evaluation: embed, index, retrieve, score, and emit tables.

``run_eval`` turns a pair dataset plus an embedder (and optional adapter)
into a MetricReport; ``compare_systems`` builds the provider-comparison
table (hit rate, improvement in percentage points, embedding size); and
``emit_report`` renders reports and tables as JSON (full precision, with
the evaluation-config fingerprint), markdown (numbers rounded half-even to
the displayed precision), or CSV (long format, plot-ready).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .corpus import DatasetSplit, QAPair, build_qrels
from .finetune import AdapterParams, apply_adapter
from .index import (
    RankedList,
    RerankHook,
    build_dense_index,
    build_lexical_index,
    dense_search,
    lexical_search,
    rerank,
    rrf_fuse,
)
from .metrics import DISPLAY_DECIMALS, MetricReport, evaluate_run

__all__ = [
    "EvalConfig",
    "BenchmarkRow",
    "BenchmarkTable",
    "MetricComparison",
    "Embedder",
    "run_eval",
    "compare_systems",
    "emit_report",
    "make_run_dir",
    "register_rerank_hook",
]

logger = logging.getLogger(__name__)

RETRIEVAL_MODES = ("dense", "lexical", "hybrid")
CANDIDATE_POOLS = ("all_contexts", "test_contexts")
TABLE1_METRICS = ("MRR@10", "MAP@100", "NDCG@10")

_RERANK_HOOKS: dict[str, RerankHook] = {}


def register_rerank_hook(name: str, hook: RerankHook) -> None:
    """Make a re-ranking hook selectable by name in EvalConfig."""
    _RERANK_HOOKS[name] = hook


class Embedder(Protocol):
    dim: int

    def embed(self, texts: list[str]) -> np.ndarray: ...


@dataclass(frozen=True)
class EvalConfig:
    """Everything that determines an evaluation, fingerprinted into reports."""

    retrieval_mode: str = "dense"
    candidate_pool: str = "all_contexts"
    k_list: tuple[int, ...] = (5, 10, 100)
    rerank: str | None = None
    system: str = ""
    seed: int = 0
    k_rrf: int = 60
    rrf_depth: int = 100

    def __post_init__(self) -> None:
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ValueError(
                f"retrieval_mode must be one of {RETRIEVAL_MODES}, got {self.retrieval_mode!r}"
            )
        if self.candidate_pool not in CANDIDATE_POOLS:
            raise ValueError(
                f"candidate_pool must be one of {CANDIDATE_POOLS}, got {self.candidate_pool!r}"
            )
        if not self.k_list:
            raise ValueError("k_list must be nonempty")
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _adapted(adapter: AdapterParams | None, matrix: np.ndarray) -> np.ndarray:
    if adapter is None:
        return matrix
    return np.stack([apply_adapter(adapter, row) for row in matrix])


def run_eval(
    pairs: Sequence[QAPair],
    split: DatasetSplit,
    embedder: Embedder,
    config: EvalConfig,
    adapter: AdapterParams | None = None,
) -> MetricReport:
    """Retrieve every test question against the context pool and score it.

    The pool is either every pair's context or only the test contexts; each
    context is a retrievable item carrying its pair id. Retrieval depth is
    ``max(k_list, 100)`` so MAP@100 is always defined. An adapter whose
    recorded training pairs intersect the test pairs is rejected.
    """
    if not split.test:
        raise ValueError("split.test must be nonempty")
    test_ids = {p.pair_id for p in split.test}
    if adapter is not None and adapter.train_pair_ids is not None:
        leaked = sorted(test_ids & set(adapter.train_pair_ids))
        if leaked:
            raise ValueError(
                f"adapter was trained on {len(leaked)} test pair(s): {leaked[:5]}"
            )
    if config.rerank is not None and config.rerank not in _RERANK_HOOKS:
        raise ValueError(f"unknown rerank hook {config.rerank!r}")

    pool = list(pairs) if config.candidate_pool == "all_contexts" else list(split.test)
    pool_ids = [p.pair_id for p in pool]
    missing = test_ids - set(pool_ids)
    if missing:
        raise ValueError(f"candidate pool is missing test contexts: {sorted(missing)[:5]}")
    depth = max(max(config.k_list), 100)
    logger.info(
        "run_eval: mode=%s pool=%s items=%d queries=%d fingerprint=%s",
        config.retrieval_mode, config.candidate_pool, len(pool), len(split.test),
        config.fingerprint(),
    )

    hook = _RERANK_HOOKS.get(config.rerank) if config.rerank is not None else None
    need_dense = config.retrieval_mode in ("dense", "hybrid")
    need_lexical = config.retrieval_mode in ("lexical", "hybrid")

    dense_index = None
    query_matrix = None
    if need_dense:
        context_matrix = embedder.embed([p.context for p in pool])
        if context_matrix.shape[0] != len(pool):
            raise ValueError(
                f"embedder returned {context_matrix.shape[0]} vectors for {len(pool)} contexts"
            )
        query_matrix = embedder.embed([p.question for p in split.test])
        if query_matrix.shape[0] != len(split.test):
            raise ValueError(
                f"embedder returned {query_matrix.shape[0]} vectors for "
                f"{len(split.test)} questions"
            )
        dense_index = build_dense_index(pool_ids, _adapted(adapter, context_matrix))
        query_matrix = _adapted(adapter, query_matrix)
    lexical_index = None
    if need_lexical:
        lexical_index = build_lexical_index(pool_ids, [p.context for p in pool])

    run: list[RankedList] = []
    for position, pair in enumerate(split.test):
        lists = []
        if need_dense:
            lists.append(
                dense_search(dense_index, query_matrix[position], depth, pair.pair_id)
            )
        if need_lexical:
            lists.append(
                lexical_search(lexical_index, pair.question, depth, pair.pair_id)
            )
        if config.retrieval_mode == "hybrid":
            ranking = rrf_fuse(lists, k_rrf=config.k_rrf, depth=config.rrf_depth)
            ranking = RankedList(query_id=ranking.query_id, hits=ranking.hits[:depth])
        else:
            ranking = lists[0]
        run.append(rerank(hook, pair.question, ranking))

    qrels = build_qrels(split.test)
    return evaluate_run(run, qrels, config.k_list)


@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    hit_rate_at_5: float
    improvement_points: float  # reference minus this row, in percentage points
    embedding_dim: int
    is_reference: bool


@dataclass(frozen=True)
class BenchmarkTable:
    """Provider-comparison table, sorted ascending by hit rate."""

    rows: tuple[BenchmarkRow, ...]
    reference: str


def compare_systems(
    reports: Mapping[str, MetricReport],
    reference: str,
    dims: Mapping[str, int],
) -> BenchmarkTable:
    """Build the comparison table from named reports.

    Improvements are computed from unrounded hit rates; rounding happens
    only at display time.
    """
    if not reports:
        raise ValueError("no reports to compare")
    if reference not in reports:
        raise ValueError(f"reference system {reference!r} not among reports")
    hit_rates = {}
    for name, report in reports.items():
        if "HR@5" not in report.aggregate:
            raise ValueError(f"report {name!r} is missing HR@5")
        if name not in dims:
            raise ValueError(f"no embedding dim given for system {name!r}")
        hit_rates[name] = report.aggregate["HR@5"]
    ref_rate = hit_rates[reference]
    rows = tuple(
        BenchmarkRow(
            name=name,
            hit_rate_at_5=hit_rates[name],
            improvement_points=(ref_rate - hit_rates[name]) * 100.0,
            embedding_dim=int(dims[name]),
            is_reference=(name == reference),
        )
        for name in sorted(hit_rates, key=lambda n: (hit_rates[n], n))
    )
    return BenchmarkTable(rows=rows, reference=reference)


@dataclass(frozen=True)
class MetricComparison:
    """Base-versus-finetuned metric table (one row per metric)."""

    base: MetricReport
    finetuned: MetricReport
    metric_names: tuple[str, ...] = TABLE1_METRICS

    def __post_init__(self) -> None:
        if not self.metric_names:
            raise ValueError("metric_names must be nonempty")
        for name in self.metric_names:
            for label, report in (("base", self.base), ("finetuned", self.finetuned)):
                if name not in report.aggregate:
                    raise ValueError(f"{label} report is missing {name}")


def _fmt(value: float) -> str:
    return f"{value:.{DISPLAY_DECIMALS}f}"


def _markdown_lines(obj) -> list[str]:
    if isinstance(obj, MetricComparison):
        lines = ["| Metric | Base | Finetuned |", "| --- | --- | --- |"]
        for name in obj.metric_names:
            lines.append(
                f"| {name} | {_fmt(obj.base.aggregate[name])} "
                f"| {_fmt(obj.finetuned.aggregate[name])} |"
            )
        return lines
    if isinstance(obj, BenchmarkTable):
        lines = [
            "| System | HR@5 | Improvement | Embedding Size |",
            "| --- | --- | --- | --- |",
        ]
        for row in obj.rows:
            name = f"{row.name} (reference)" if row.is_reference else row.name
            lines.append(
                f"| {name} | {_fmt(row.hit_rate_at_5)} "
                f"| {row.improvement_points:.1f} | {row.embedding_dim} |"
            )
        return lines
    if isinstance(obj, MetricReport):
        lines = ["| Metric | Value |", "| --- | --- |"]
        for name in sorted(obj.aggregate):
            lines.append(f"| {name} | {_fmt(obj.aggregate[name])} |")
        return lines
    raise TypeError(f"cannot render {type(obj).__name__} as a report")


def _csv_lines(obj) -> list[str]:
    if isinstance(obj, MetricComparison):
        lines = ["metric,base,finetuned"]
        for name in obj.metric_names:
            lines.append(
                f"{name},{obj.base.aggregate[name]!r},{obj.finetuned.aggregate[name]!r}"
            )
        return lines
    if isinstance(obj, BenchmarkTable):
        lines = ["system,hr_at_5,improvement_points,embedding_dim,is_reference"]
        for row in obj.rows:
            lines.append(
                f"{row.name},{row.hit_rate_at_5!r},{row.improvement_points!r},"
                f"{row.embedding_dim},{row.is_reference}"
            )
        return lines
    if isinstance(obj, MetricReport):
        lines = ["metric,value"]
        for name in sorted(obj.aggregate):
            lines.append(f"{name},{obj.aggregate[name]!r}")
        return lines
    raise TypeError(f"cannot render {type(obj).__name__} as a report")


def _json_payload(obj, config: EvalConfig | None, fingerprint: str | None) -> dict:
    if isinstance(obj, MetricComparison):
        payload = {
            "kind": "metric_comparison",
            "metrics": list(obj.metric_names),
            "base": obj.base.to_dict(),
            "finetuned": obj.finetuned.to_dict(),
        }
    elif isinstance(obj, BenchmarkTable):
        payload = {
            "kind": "benchmark_table",
            "reference": obj.reference,
            "rows": [asdict(row) for row in obj.rows],
        }
    elif isinstance(obj, MetricReport):
        payload = {"kind": "metric_report", **obj.to_dict()}
    else:
        raise TypeError(f"cannot render {type(obj).__name__} as a report")
    if config is not None:
        payload["config"] = config.to_dict()
        payload["config_fingerprint"] = config.fingerprint()
    elif fingerprint is not None:
        payload["config_fingerprint"] = fingerprint
    return payload


def emit_report(
    obj: MetricReport | MetricComparison | BenchmarkTable,
    format: str,
    path: Path | str,
    *,
    config: EvalConfig | None = None,
    fingerprint: str | None = None,
) -> Path:
    """Render a report object to disk; returns the written path.

    JSON output embeds the evaluation config (retrieval mode, pool, cutoffs)
    and its fingerprint when ``config`` is given. Refuses to write an empty
    table or a report with no metrics, so a failed upstream step can never
    leave a plausible-looking empty file.
    """
    if isinstance(obj, BenchmarkTable) and not obj.rows:
        raise ValueError("refusing to emit an empty benchmark table")
    if isinstance(obj, MetricReport) and not obj.aggregate:
        raise ValueError("refusing to emit a metric report with no metrics")
    path = Path(path)
    if format == "json":
        payload = _json_payload(obj, config, fingerprint)
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif format == "markdown":
        text = "\n".join(_markdown_lines(obj)) + "\n"
    elif format == "csv":
        text = "\n".join(_csv_lines(obj)) + "\n"
    else:
        raise ValueError(f"unknown report format {format!r}")
    path.write_text(text, encoding="utf-8")
    return path


def make_run_dir(base: Path | str, fingerprint: str, now: datetime | None = None) -> Path:
    """Create ``<base>/<UTC timestamp>-<fingerprint prefix>`` and return it."""
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y%m%dT%H%M%S")
    run_dir = Path(base) / f"{stamp}-{fingerprint[:8]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir
