"""Linear adapter training over frozen base embeddings.

The trainable part is a single linear map (optionally with bias) applied to
both question and context embeddings. Training minimizes the in-batch
ranking loss

    L = -sum_i log( exp(S[i,i]) / sum_j exp(S[i,j]) )

where ``S[i,j] = scale * cos(adapt(q_i), adapt(p_j))``: each row's softmax
is pushed toward its own diagonal, so every other context in the batch acts
as a negative and the denominator's off-diagonal terms exclude the positive.
All training math runs in float64; gradients are analytic and validated by
central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import QAPair

__all__ = [
    "AdapterParams",
    "TrainingConfig",
    "TrainingBatch",
    "BatchStats",
    "LossReport",
    "apply_adapter",
    "batch_similarity",
    "mnr_loss",
    "mnr_loss_grad",
    "train_adapter",
    "finite_diff_check",
    "save_adapter",
    "load_adapter",
]


@dataclass
class AdapterParams:
    """A (d_out, d_in) linear map with optional bias.

    ``train_pair_ids`` records which pairs the adapter saw during training,
    so evaluation harnesses can refuse leaked test pairs.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    train_pair_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2 or min(self.weight.shape) < 1:
            raise ValueError(f"weight must be a 2-D matrix, got shape {self.weight.shape}")
        if not np.all(np.isfinite(self.weight)):
            raise ValueError("adapter weight contains non-finite entries")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weight.shape[0],):
                raise ValueError(
                    f"bias shape {self.bias.shape} does not match d_out {self.weight.shape[0]}"
                )
            if not np.all(np.isfinite(self.bias)):
                raise ValueError("adapter bias contains non-finite entries")

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def use_bias(self) -> bool:
        return self.bias is not None

    @classmethod
    def identity(cls, dim: int, use_bias: bool = False) -> "AdapterParams":
        """Identity map: the adapted model equals the base model exactly."""
        return cls(
            weight=np.eye(dim, dtype=np.float64),
            bias=np.zeros(dim, dtype=np.float64) if use_bias else None,
        )


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 12
    epochs: int = 2
    learning_rate: float = 0.05
    scale: float = 20.0
    seed: int = 0
    shuffle_each_epoch: bool = True
    use_bias: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (in-batch negatives required)")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if not np.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite")


@dataclass(frozen=True)
class TrainingBatch:
    """Row i of ``query_vecs`` pairs with row i of ``positive_vecs``."""

    query_vecs: np.ndarray
    positive_vecs: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.query_vecs, dtype=np.float64)
        p = np.asarray(self.positive_vecs, dtype=np.float64)
        if q.ndim != 2 or p.ndim != 2 or q.shape != p.shape:
            raise ValueError(
                f"query and positive matrices must share a 2-D shape, "
                f"got {q.shape} and {p.shape}"
            )
        object.__setattr__(self, "query_vecs", q)
        object.__setattr__(self, "positive_vecs", p)

    @property
    def size(self) -> int:
        return self.query_vecs.shape[0]


@dataclass(frozen=True)
class BatchStats:
    epoch: int
    batch: int
    loss: float
    in_batch_accuracy: float
    batch_size: int


@dataclass
class LossReport:
    """Per-batch losses and per-epoch summaries from one training run."""

    batches: list[BatchStats] = field(default_factory=list)
    epoch_mean_loss: list[float] = field(default_factory=list)  # per pair, per epoch
    epoch_accuracy: list[float] = field(default_factory=list)

    def write_jsonl(self, path: Path | str) -> None:
        with Path(path).open("w", encoding="utf-8") as handle:
            for stats in self.batches:
                handle.write(json.dumps(asdict(stats)) + "\n")


def apply_adapter(adapter: AdapterParams, vec: np.ndarray) -> np.ndarray:
    """``weight @ vec (+ bias)``, in float64 and not normalized."""
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (adapter.d_in,):
        raise ValueError(f"vector has shape {v.shape}, adapter expects ({adapter.d_in},)")
    out = adapter.weight @ v
    if adapter.bias is not None:
        out = out + adapter.bias
    return out


def _adapt_rows(adapter: AdapterParams, rows: np.ndarray) -> np.ndarray:
    out = rows @ adapter.weight.T
    if adapter.bias is not None:
        out = out + adapter.bias
    return out


def _normalize_rows(rows: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise ValueError(f"adapter maps {what} row {bad} to the zero vector")
    return rows / norms[:, None], norms


def batch_similarity(
    adapter: AdapterParams, batch: TrainingBatch, scale: float
) -> np.ndarray:
    """All-pairs scaled cosine matrix of adapted vectors.

    ``S[i, j] = scale * cos(adapt(q_i), adapt(p_j))``; the diagonal holds each
    query's positive and the off-diagonal entries are its in-batch negatives.
    """
    adapted_q = _adapt_rows(adapter, batch.query_vecs)
    adapted_p = _adapt_rows(adapter, batch.positive_vecs)
    unit_q, _ = _normalize_rows(adapted_q, "query")
    unit_p, _ = _normalize_rows(adapted_p, "positive")
    return scale * (unit_q @ unit_p.T)


def mnr_loss(similarity: np.ndarray) -> float:
    """Sum over rows of softmax cross-entropy against the diagonal.

    Computed with max subtraction for stability. A 1x1 matrix has no
    negatives and yields exactly 0.
    """
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix contains non-finite entries")
    row_max = s.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(s - row_max).sum(axis=1)) + row_max[:, 0]
    return float(np.sum(logsumexp - np.diagonal(s)))


def mnr_loss_grad(similarity: np.ndarray) -> np.ndarray:
    """d(loss)/dS: row-wise softmax minus the identity. Rows sum to 0."""
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix contains non-finite entries")
    shifted = np.exp(s - s.max(axis=1, keepdims=True))
    softmax = shifted / shifted.sum(axis=1, keepdims=True)
    return softmax - np.eye(s.shape[0])


def _loss_and_param_grads(
    adapter: AdapterParams, batch: TrainingBatch, scale: float
) -> tuple[float, float, np.ndarray, np.ndarray | None]:
    """Forward pass plus analytic (loss, accuracy, dW, db) for one batch.

    Backpropagates through the scale, the row normalization, and the linear
    map: for a = W q, d(loss)/da = (g - u (u . g)) / |a| with u = a/|a|.
    """
    adapted_q = _adapt_rows(adapter, batch.query_vecs)
    adapted_p = _adapt_rows(adapter, batch.positive_vecs)
    unit_q, norm_q = _normalize_rows(adapted_q, "query")
    unit_p, norm_p = _normalize_rows(adapted_p, "positive")
    similarity = scale * (unit_q @ unit_p.T)

    loss = mnr_loss(similarity)
    grad_s = mnr_loss_grad(similarity)
    diag = np.diagonal(similarity)
    accuracy = float(np.mean(diag == similarity.max(axis=1)))

    grad_unit_q = scale * (grad_s @ unit_p)
    grad_unit_p = scale * (grad_s.T @ unit_q)
    grad_adapted_q = (
        grad_unit_q - unit_q * np.einsum("ij,ij->i", unit_q, grad_unit_q)[:, None]
    ) / norm_q[:, None]
    grad_adapted_p = (
        grad_unit_p - unit_p * np.einsum("ij,ij->i", unit_p, grad_unit_p)[:, None]
    ) / norm_p[:, None]

    grad_weight = grad_adapted_q.T @ batch.query_vecs + grad_adapted_p.T @ batch.positive_vecs
    grad_bias = None
    if adapter.bias is not None:
        grad_bias = grad_adapted_q.sum(axis=0) + grad_adapted_p.sum(axis=0)
    return loss, accuracy, grad_weight, grad_bias


EpochCallback = Callable[[int, AdapterParams], None]


def train_adapter(
    pairs: Sequence[QAPair],
    base_embed: Callable[[str], np.ndarray],
    config: TrainingConfig,
    epoch_callback: EpochCallback | None = None,
) -> tuple[AdapterParams, LossReport]:
    """Gradient-descent training of a linear adapter on question-context pairs.

    The weight starts at identity, so the epoch-0 model equals the base
    model; each epoch reshuffles with the seeded generator; a final short
    batch is kept only if it still contains a negative (size >= 2). The run
    is deterministic under (pairs, embedder, config). ``epoch_callback``
    receives a snapshot of the parameters after every epoch, e.g. to record
    per-epoch retrieval quality on a held-out set.
    """
    if len(pairs) < config.batch_size:
        raise ValueError(
            f"need at least batch_size={config.batch_size} pairs, got {len(pairs)}"
        )
    question_rows = []
    context_rows = []
    for pair in pairs:
        q = np.asarray(base_embed(pair.question), dtype=np.float64)
        p = np.asarray(base_embed(pair.context), dtype=np.float64)
        if not q.any():
            raise ValueError(f"pair {pair.pair_id}: base embedding of question is all-zero")
        if not p.any():
            raise ValueError(f"pair {pair.pair_id}: base embedding of context is all-zero")
        question_rows.append(q)
        context_rows.append(p)
    questions = np.stack(question_rows)
    contexts = np.stack(context_rows)
    dim = questions.shape[1]

    adapter = AdapterParams.identity(dim, use_bias=config.use_bias)
    adapter.train_pair_ids = tuple(pair.pair_id for pair in pairs)
    rng = np.random.default_rng(config.seed)
    report = LossReport()

    for epoch in range(1, config.epochs + 1):
        if config.shuffle_each_epoch:
            order = rng.permutation(len(pairs))
        else:
            order = np.arange(len(pairs))
        epoch_loss = 0.0
        epoch_pairs = 0
        batch_accuracies = []
        batch_index = 0
        for start in range(0, len(pairs), config.batch_size):
            rows = order[start : start + config.batch_size]
            if len(rows) < 2:
                break  # a single-pair tail has no negatives
            batch = TrainingBatch(
                query_vecs=questions[rows], positive_vecs=contexts[rows]
            )
            loss, accuracy, grad_weight, grad_bias = _loss_and_param_grads(
                adapter, batch, config.scale
            )
            adapter.weight = adapter.weight - config.learning_rate * grad_weight
            if adapter.bias is not None and grad_bias is not None:
                adapter.bias = adapter.bias - config.learning_rate * grad_bias
            batch_index += 1
            epoch_loss += loss
            epoch_pairs += len(rows)
            batch_accuracies.append(accuracy)
            report.batches.append(
                BatchStats(
                    epoch=epoch,
                    batch=batch_index,
                    loss=loss,
                    in_batch_accuracy=accuracy,
                    batch_size=len(rows),
                )
            )
        report.epoch_mean_loss.append(epoch_loss / epoch_pairs)
        report.epoch_accuracy.append(
            float(np.mean(batch_accuracies)) if batch_accuracies else 0.0
        )
        if epoch_callback is not None:
            snapshot = AdapterParams(
                weight=adapter.weight.copy(),
                bias=None if adapter.bias is None else adapter.bias.copy(),
                train_pair_ids=adapter.train_pair_ids,
            )
            epoch_callback(epoch, snapshot)
    return adapter, report


def finite_diff_check(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic_grad: np.ndarray,
    *,
    eps: float,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between central differences and an analytic gradient.

    Coordinates are sampled without replacement when ``max_coords`` is set.
    Relative error uses ``|num - ana| / max(|num|, |ana|, 1e-6)`` so
    near-zero coordinates cannot blow up the ratio.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    theta = np.asarray(params, dtype=np.float64)
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    if analytic.shape != theta.shape:
        raise ValueError(
            f"gradient shape {analytic.shape} does not match params {theta.shape}"
        )
    flat_indices = np.arange(theta.size)
    if max_coords is not None and max_coords < theta.size:
        flat_indices = np.random.default_rng(seed).choice(
            theta.size, size=max_coords, replace=False
        )
    worst = 0.0
    flat = theta.ravel().copy()
    for idx in flat_indices:
        original = flat[idx]
        flat[idx] = original + eps
        plus = loss_fn(flat.reshape(theta.shape))
        flat[idx] = original - eps
        minus = loss_fn(flat.reshape(theta.shape))
        flat[idx] = original
        numeric = (plus - minus) / (2.0 * eps)
        ana = analytic.ravel()[idx]
        err = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-6)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Persistence: adapter.json (dims, scale, seed, config echo, train pair ids)
# plus adapter.bin (row-major float32 little-endian weight, then bias).
# ---------------------------------------------------------------------------


def save_adapter(
    path: Path | str, adapter: AdapterParams, config: TrainingConfig
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "d_out": adapter.d_out,
        "d_in": adapter.d_in,
        "use_bias": adapter.use_bias,
        "scale": config.scale,
        "seed": config.seed,
        "config": asdict(config),
        "train_pair_ids": (
            list(adapter.train_pair_ids) if adapter.train_pair_ids is not None else None
        ),
    }
    (path / "adapter.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    blob = np.ascontiguousarray(adapter.weight, dtype="<f4").tobytes()
    if adapter.bias is not None:
        blob += np.ascontiguousarray(adapter.bias, dtype="<f4").tobytes()
    (path / "adapter.bin").write_bytes(blob)


def load_adapter(path: Path | str) -> tuple[AdapterParams, TrainingConfig]:
    path = Path(path)
    meta = json.loads((path / "adapter.json").read_text(encoding="utf-8"))
    d_out, d_in = meta["d_out"], meta["d_in"]
    raw = (path / "adapter.bin").read_bytes()
    expected = 4 * d_out * d_in + (4 * d_out if meta["use_bias"] else 0)
    if len(raw) != expected:
        raise ValueError(
            f"{path / 'adapter.bin'}: {len(raw)} bytes, expected {expected}"
        )
    weight = np.frombuffer(raw[: 4 * d_out * d_in], dtype="<f4").reshape(d_out, d_in)
    bias = None
    if meta["use_bias"]:
        bias = np.frombuffer(raw[4 * d_out * d_in :], dtype="<f4")
    ids = meta.get("train_pair_ids")
    adapter = AdapterParams(
        weight=weight.astype(np.float64),
        bias=None if bias is None else bias.astype(np.float64),
        train_pair_ids=tuple(ids) if ids is not None else None,
    )
    config = TrainingConfig(**meta["config"])
    return adapter, config
