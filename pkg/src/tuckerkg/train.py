"""Loss, hand-derived gradients, Adam and the epoch driver.

Training uses 1-N scoring: each batch row is one (subject, relation) pair
scored against every entity, with a per-entity Bernoulli negative
log-likelihood averaged over entities and then over the batch. Gradients
are computed analytically for the embeddings, the core tensor and the
batch-norm scale/shift parameters; dropout masks and batch statistics are
treated as part of the realized computation.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .data import TripleStore, make_1n_batches
from .model import TuckerModel, score_pairs, sigmoid
from .tensor import ShapeError

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12  # keeps the Bernoulli log-likelihood finite at p in {0, 1}


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run."""

    lr: float = 0.005
    decay: float = 1.0          # per-epoch learning-rate multiplier
    ent_dim: int = 30
    rel_dim: int = 30
    dropout_input: float = 0.2
    dropout_rel_matrix: float = 0.2
    dropout_hidden: float = 0.3
    label_smoothing: float = 0.1
    batch_size: int = 128
    epochs: int = 500
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label smoothing must be in [0, 1)")
        for rate in (self.dropout_input, self.dropout_rel_matrix, self.dropout_hidden):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate must be in [0, 1), got {rate}")


# Published best-performing settings per benchmark dataset.
PRESETS = {
    "fb15k": dict(lr=0.003, decay=0.99, ent_dim=200, rel_dim=200,
                  dropout_input=0.2, dropout_rel_matrix=0.2, dropout_hidden=0.3,
                  label_smoothing=0.0),
    "fb15k-237": dict(lr=0.0005, decay=1.0, ent_dim=200, rel_dim=200,
                      dropout_input=0.3, dropout_rel_matrix=0.4, dropout_hidden=0.5,
                      label_smoothing=0.1),
    "wn18": dict(lr=0.005, decay=0.995, ent_dim=200, rel_dim=30,
                 dropout_input=0.2, dropout_rel_matrix=0.1, dropout_hidden=0.2,
                 label_smoothing=0.1),
    "wn18rr": dict(lr=0.01, decay=1.0, ent_dim=200, rel_dim=30,
                   dropout_input=0.2, dropout_rel_matrix=0.2, dropout_hidden=0.3,
                   label_smoothing=0.1),
}


def preset_config(name: str, **overrides) -> TrainConfig:
    key = name.lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = dict(PRESETS[key])
    merged.update(overrides)
    return TrainConfig(**merged)


@dataclass
class GradientSet:
    """Gradients shaped like the trainable parameters."""

    entity_emb: np.ndarray
    relation_emb: np.ndarray
    core: np.ndarray
    bn_in_scale: np.ndarray
    bn_in_shift: np.ndarray
    bn_hidden_scale: np.ndarray
    bn_hidden_shift: np.ndarray


def bce_loss(p, y) -> float:
    """Mean Bernoulli negative log-likelihood of probabilities p against labels y.

    p is clamped away from {0, 1} before the logs.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probabilities {p.shape} vs labels {y.shape}")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def smooth_labels(y, ls: float, n_entities: int) -> np.ndarray:
    """Soften binary labels: (1 - ls) * y + ls / n_entities, elementwise."""
    y = np.asarray(y, dtype=np.float64)
    return (1.0 - ls) * y + ls / n_entities


def forward_backward(
    model: TuckerModel,
    batch,
    cfg: TrainConfig,
    rng,
    freeze_bn_stats: bool = False,
):
    """Training-mode loss and analytic gradients for one 1-N batch.

    batch is (pairs, labels) from make_1n_batches. Returns (loss, GradientSet).
    With freeze_bn_stats the batch norms normalize with their stored running
    statistics (which then stay untouched), making the loss a plain function
    of the parameters; otherwise batch statistics are used and the running
    statistics are updated as a side effect.
    """
    pairs, labels = batch
    subj_ids = pairs[:, 0]
    rel_ids = pairs[:, 1]
    n_batch, n_entities = labels.shape
    if n_entities != model.n_entities:
        raise ShapeError(
            f"label width {n_entities} vs model entity count {model.n_entities}"
        )

    scores, cache = score_pairs(
        model,
        subj_ids,
        rel_ids,
        training=True,
        rng=rng,
        freeze_bn_stats=freeze_bn_stats,
        update_running=not freeze_bn_stats,
        want_cache=True,
    )
    probs = sigmoid(scores)
    targets = smooth_labels(labels, cfg.label_smoothing, n_entities)
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_pair = -np.mean(
        targets * np.log(pc) + (1.0 - targets) * np.log(1.0 - pc), axis=1
    )
    loss = float(np.mean(per_pair))

    # d loss / d score; the sigmoid and the log-likelihood collapse to p - y.
    dscores = (probs - targets) / (n_batch * n_entities)

    d_entity = np.zeros_like(model.entity_emb)
    d_entity += dscores.T @ cache.h_dropped  # object-side use of the embeddings

    dh_dropped = dscores @ model.entity_emb
    dh = dh_dropped * cache.mask_hidden
    if model.use_bn:
        dh, d_bnh_scale, d_bnh_shift = model.bn_hidden.backward(
            cache.bn_hidden_cache, dh
        )
    else:
        d_bnh_scale = np.zeros(model.ent_dim)
        d_bnh_shift = np.zeros(model.ent_dim)

    d_relmat_dropped = cache.x_dropped[:, :, None] * dh[:, None, :]
    dx_dropped = np.einsum("bk,bpk->bp", dh, cache.relmat_dropped)

    d_relmat = d_relmat_dropped * cache.mask_rel
    d_relmat_flat = d_relmat.reshape(n_batch, -1)
    d_core_unfolded = cache.rel_vecs.T @ d_relmat_flat
    d_e = model.ent_dim
    d_core = np.ascontiguousarray(
        d_core_unfolded.reshape(model.rel_dim, d_e, d_e).transpose(1, 0, 2)
    )
    d_rel_vecs = d_relmat_flat @ cache.core_unfolded.T
    d_relation = np.zeros_like(model.relation_emb)
    np.add.at(d_relation, rel_ids, d_rel_vecs)

    dx = dx_dropped * cache.mask_in
    if model.use_bn:
        dx, d_bni_scale, d_bni_shift = model.bn_in.backward(cache.bn_in_cache, dx)
    else:
        d_bni_scale = np.zeros(model.ent_dim)
        d_bni_shift = np.zeros(model.ent_dim)
    np.add.at(d_entity, subj_ids, dx)  # subject-side use of the embeddings

    grads = GradientSet(
        entity_emb=d_entity,
        relation_emb=d_relation,
        core=d_core,
        bn_in_scale=d_bni_scale,
        bn_in_shift=d_bni_shift,
        bn_hidden_scale=d_bnh_scale,
        bn_hidden_shift=d_bnh_shift,
    )
    return loss, grads


def _param_slots(model: TuckerModel):
    slots = {
        "entity_emb": model.entity_emb,
        "relation_emb": model.relation_emb,
        "core": model.core,
    }
    if model.use_bn:
        slots.update(
            bn_in_scale=model.bn_in.scale,
            bn_in_shift=model.bn_in.shift,
            bn_hidden_scale=model.bn_hidden.scale,
            bn_hidden_shift=model.bn_hidden.shift,
        )
    return slots


class AdamState:
    """First/second moment accumulators and the shared step counter."""

    def __init__(self, model: TuckerModel, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in _param_slots(model).items()}
        self.v = {k: np.zeros_like(v) for k, v in _param_slots(model).items()}


def adam_step(model: TuckerModel, grads: GradientSet, state: AdamState, lr: float):
    """One bias-corrected Adam update, applied in place. Returns (model, state)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, param in _param_slots(model).items():
        g = getattr(grads, name)
        if g.shape != param.shape:
            raise ShapeError(f"gradient {name} {g.shape} vs parameter {param.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return model, state


METRIC_COLUMNS = (
    "epoch", "lr", "train_loss", "valid_mrr",
    "valid_hits1", "valid_hits3", "valid_hits10",
)


def write_metrics_csv(rows, path):
    """Write per-epoch metric rows with a fixed column order.

    Floats are rendered with repr for exact, stable round-trips.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([_render(row.get(col, "")) for col in METRIC_COLUMNS])


class _MetricsAppender:
    """Appends metric rows to a CSV file as training progresses."""

    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(METRIC_COLUMNS)
        self.fh.flush()

    def append(self, row):
        self.writer.writerow([_render(row.get(col, "")) for col in METRIC_COLUMNS])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _render(value):
    if isinstance(value, float):
        return repr(value)
    return value


def fit(
    model: TuckerModel,
    store: TripleStore,
    cfg: TrainConfig,
    on_epoch=None,
    log_path=None,
    rng=None,
):
    """Run cfg.epochs training epochs over the store's training split.

    The learning rate for epoch e (0-based) is cfg.lr * cfg.decay ** e.
    on_epoch, if given, is called as on_epoch(epoch, model) after each
    epoch's updates and may return a dict of extra metrics (e.g. validation
    ranking results) merged into that epoch's log row. When log_path is set
    each epoch's row is appended to the CSV as it completes. rng defaults
    to a fresh generator seeded with cfg.seed; it drives both the epoch
    shuffles and the dropout masks.

    Returns (model, rows) with one metrics dict per epoch.
    """
    if not store.augmented:
        raise ValueError("fit requires the reciprocal-augmented store")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    state = AdamState(
        model, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, epsilon=cfg.adam_epsilon
    )
    appender = _MetricsAppender(log_path) if log_path is not None else None
    rows = []
    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr * cfg.decay ** epoch
            losses = []
            for batch_idx, batch in enumerate(
                make_1n_batches(store, model.n_entities, cfg.batch_size, rng)
            ):
                loss, grads = forward_backward(model, batch, cfg, rng)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                    )
                adam_step(model, grads, state, lr)
                losses.append(loss)
            row = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
            }
            if on_epoch is not None:
                extra = on_epoch(epoch, model)
                if extra:
                    row.update(extra)
            rows.append(row)
            log.info("epoch %d lr %.6g loss %.6f", epoch, lr, row["train_loss"])
            if appender is not None:
                appender.append(row)
    finally:
        if appender is not None:
            appender.close()
    return model, rows
