"""The Tucker link-prediction model: parameters, normalization and scoring.

A model scores a triple (subject, relation, object) by contracting a shared
core tensor with the subject embedding, the relation embedding and the
object embedding. All entities share one embedding matrix regardless of
subject/object position; relations include one extra reciprocal embedding
per raw relation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, mode_n_vec_product


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


class BatchNorm:
    """Per-feature batch normalization over rows of a (batch, dim) array.

    Running statistics follow the convention
    new_running = (1 - momentum) * running + momentum * batch_statistic,
    with the biased (population) variance used both for normalization and
    for the running update.
    """

    def __init__(self, dim: int, momentum: float = 0.1, epsilon: float = 1e-5):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.dim = dim
        self.momentum = momentum
        self.epsilon = epsilon
        self.scale = np.ones(dim)
        self.shift = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x, use_batch_stats: bool, update_running: bool = False):
        """Normalize rows of x. Returns (y, cache) where cache feeds backward.

        With use_batch_stats the statistics of this batch are used (training
        regime); otherwise the stored running statistics are used (evaluation
        or frozen-statistics regime).
        """
        if use_batch_stats:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_running:
                m = self.momentum
                self.running_mean = (1.0 - m) * self.running_mean + m * mean
                self.running_var = (1.0 - m) * self.running_var + m * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        y = self.scale * xhat + self.shift
        return y, (xhat, inv_std, use_batch_stats)

    def backward(self, cache, dy):
        """Gradient of the forward pass. Returns (dx, dscale, dshift).

        In the batch-statistics regime gradients flow through the batch mean
        and variance; in the running-statistics regime those are constants.
        """
        xhat, inv_std, batch_stats = cache
        dscale = (dy * xhat).sum(axis=0)
        dshift = dy.sum(axis=0)
        if batch_stats:
            dx = (self.scale * inv_std) * (
                dy - dy.mean(axis=0) - xhat * (dy * xhat).mean(axis=0)
            )
        else:
            dx = dy * (self.scale * inv_std)
        return dx, dscale, dshift

    def state_matrix(self) -> np.ndarray:
        """Rows scale, shift, running_mean, running_var; used by checkpoints."""
        return np.stack([self.scale, self.shift, self.running_mean, self.running_var])

    @classmethod
    def from_state_matrix(cls, state, momentum: float, epsilon: float) -> "BatchNorm":
        state = np.asarray(state, dtype=np.float64)
        if state.ndim != 2 or state.shape[0] != 4:
            raise ShapeError(f"batch-norm state must be 4 x dim, got {state.shape}")
        bn = cls(state.shape[1], momentum=momentum, epsilon=epsilon)
        bn.scale, bn.shift, bn.running_mean, bn.running_var = (
            state[0].copy(), state[1].copy(), state[2].copy(), state[3].copy(),
        )
        return bn


@dataclass
class ModelKind:
    """Identifies which constrained-core family a parameter count refers to.

    base_dim is the native embedding dimensionality of that family's
    formula, before the real-valued doubling used by the complex and
    head/tail parameterizations.
    """

    tag: str  # tucker | distmult | complex | simple | rescal
    base_dim: int = 0


@dataclass
class TuckerModel:
    """Parameters of the Tucker link-prediction model.

    entity_emb:   (n_entities, ent_dim), shared by subjects and objects
    relation_emb: (n_relations_aug, rel_dim), reciprocals included
    core:         (ent_dim, rel_dim, ent_dim)
    """

    entity_emb: np.ndarray
    relation_emb: np.ndarray
    core: np.ndarray
    bn_in: BatchNorm = None
    bn_hidden: BatchNorm = None
    dropout_input: float = 0.0
    dropout_rel_matrix: float = 0.0
    dropout_hidden: float = 0.0
    use_bn: bool = True

    def __post_init__(self):
        self.entity_emb = np.ascontiguousarray(self.entity_emb, dtype=np.float64)
        self.relation_emb = np.ascontiguousarray(self.relation_emb, dtype=np.float64)
        self.core = np.ascontiguousarray(self.core, dtype=np.float64)
        d_e = self.entity_emb.shape[1]
        d_r = self.relation_emb.shape[1]
        if self.core.shape != (d_e, d_r, d_e):
            raise ShapeError(
                f"core must be ({d_e}, {d_r}, {d_e}) to match the embeddings, "
                f"got {self.core.shape}"
            )
        if self.bn_in is None:
            self.bn_in = BatchNorm(d_e)
        if self.bn_hidden is None:
            self.bn_hidden = BatchNorm(d_e)
        for rate in (self.dropout_input, self.dropout_rel_matrix, self.dropout_hidden):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate must be in [0, 1), got {rate}")

    @property
    def n_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n_relations_aug(self) -> int:
        return self.relation_emb.shape[0]

    @property
    def ent_dim(self) -> int:
        return self.entity_emb.shape[1]

    @property
    def rel_dim(self) -> int:
        return self.relation_emb.shape[1]

    def check_entity(self, e: int):
        if not 0 <= e < self.n_entities:
            raise IndexError(f"entity id {e} out of range [0, {self.n_entities})")

    def check_relation(self, r: int):
        if not 0 <= r < self.n_relations_aug:
            raise IndexError(
                f"relation id {r} out of range [0, {self.n_relations_aug})"
            )


@dataclass
class ForwardCache:
    """Intermediates of a training-mode scoring pass, kept for the backward pass."""

    subj_ids: np.ndarray
    rel_ids: np.ndarray
    bn_in_cache: tuple
    mask_in: np.ndarray
    x_dropped: np.ndarray        # (B, d_e) subject rows after bn_in + dropout
    rel_vecs: np.ndarray         # (B, d_r)
    core_unfolded: np.ndarray    # (d_r, d_e * d_e) mode-2 unfolding of the core
    relmat_dropped: np.ndarray   # (B, d_e, d_e) per-pair relation matrices after dropout
    mask_rel: np.ndarray
    bn_hidden_cache: tuple
    mask_hidden: np.ndarray
    h_dropped: np.ndarray        # (B, d_e) transformed rows entering the output product
    scores: np.ndarray           # (B, n_entities)


def _dropout_mask(rng, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: zero with probability rate, else 1/(1-rate)."""
    if rate == 0.0:
        return np.ones(shape)
    if rng is None:
        raise ValueError("training-mode scoring with dropout needs an rng")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def core_mode2_unfolding(core: np.ndarray) -> np.ndarray:
    """(d_e, d_r, d_e) -> (d_r, d_e*d_e) so that row j flattens core[:, j, :]."""
    d_e, d_r, _ = core.shape
    return np.ascontiguousarray(core.transpose(1, 0, 2).reshape(d_r, d_e * d_e))


def score_pairs(
    model: TuckerModel,
    subj_ids,
    rel_ids,
    training: bool = False,
    rng=None,
    freeze_bn_stats: bool = False,
    update_running: bool = False,
    want_cache: bool = False,
):
    """Score every entity as object for each (subject, relation) pair.

    Pipeline: subject row -> input batch norm -> input dropout -> contraction
    with the relation matrix (core contracted with the relation vector, with
    dropout applied to that matrix) -> hidden batch norm -> hidden dropout ->
    product with all entity embeddings.

    Returns (scores, cache); scores has shape (len(subj_ids), n_entities).
    cache is None unless want_cache. In evaluation mode (training=False) the
    result row equals score_triple for every object, exactly.
    """
    subj_ids = np.asarray(subj_ids, dtype=np.intp)
    rel_ids = np.asarray(rel_ids, dtype=np.intp)
    if subj_ids.shape != rel_ids.shape or subj_ids.ndim != 1:
        raise ShapeError(
            f"subject ids {subj_ids.shape} and relation ids {rel_ids.shape} "
            "must be equal-length vectors"
        )
    if subj_ids.size and (subj_ids.min() < 0 or subj_ids.max() >= model.n_entities):
        raise IndexError("subject id out of range")
    if rel_ids.size and (rel_ids.min() < 0 or rel_ids.max() >= model.n_relations_aug):
        raise IndexError("relation id out of range")

    batch = subj_ids.shape[0]
    d_e = model.ent_dim
    use_batch_stats = training and not freeze_bn_stats

    x = model.entity_emb[subj_ids]
    if model.use_bn:
        x, bn_in_cache = model.bn_in.forward(
            x, use_batch_stats, update_running=update_running
        )
    else:
        bn_in_cache = None

    mask_in = _dropout_mask(rng, (batch, d_e), model.dropout_input) if training else None
    x_dropped = x * mask_in if training else x

    rel_vecs = model.relation_emb[rel_ids]
    core_unf = core_mode2_unfolding(model.core)
    relmat = (rel_vecs @ core_unf).reshape(batch, d_e, d_e)
    mask_rel = (
        _dropout_mask(rng, (batch, d_e, d_e), model.dropout_rel_matrix)
        if training
        else None
    )
    relmat_dropped = relmat * mask_rel if training else relmat

    h = np.einsum("bp,bpk->bk", x_dropped, relmat_dropped)
    if model.use_bn:
        h, bn_hidden_cache = model.bn_hidden.forward(
            h, use_batch_stats, update_running=update_running
        )
    else:
        bn_hidden_cache = None

    mask_hidden = (
        _dropout_mask(rng, (batch, d_e), model.dropout_hidden) if training else None
    )
    h_dropped = h * mask_hidden if training else h

    scores = h_dropped @ model.entity_emb.T

    cache = None
    if want_cache:
        cache = ForwardCache(
            subj_ids=subj_ids,
            rel_ids=rel_ids,
            bn_in_cache=bn_in_cache,
            mask_in=mask_in,
            x_dropped=x_dropped,
            rel_vecs=rel_vecs,
            core_unfolded=core_unf,
            relmat_dropped=relmat_dropped,
            mask_rel=mask_rel,
            bn_hidden_cache=bn_hidden_cache,
            mask_hidden=mask_hidden,
            h_dropped=h_dropped,
            scores=scores,
        )
    return scores, cache


def score_all_objects(
    model: TuckerModel, s: int, r: int, training: bool = False, rng=None
) -> np.ndarray:
    """Vector of scores for (s, r, o) over every object o."""
    model.check_entity(s)
    model.check_relation(r)
    scores, _ = score_pairs(model, [s], [r], training=training, rng=rng)
    return scores[0]


def score_triple(model: TuckerModel, s: int, r: int, o: int) -> float:
    """Raw (pre-sigmoid) score of one triple in evaluation mode."""
    model.check_entity(o)
    return float(score_all_objects(model, s, r)[o])


def relation_matrix(model: TuckerModel, r: int) -> np.ndarray:
    """The (ent_dim, ent_dim) matrix for relation r: core contracted with its vector.

    With batch norm and dropout off, the triple score is the bilinear form
    subject_row @ relation_matrix(r) @ object_row.
    """
    model.check_relation(r)
    return mode_n_vec_product(model.core, model.relation_emb[r], 2)


def symmetry_score(w, eps: float = 1e-12) -> float:
    """Frobenius-norm asymmetry of a square matrix: ||W - W^T||_F / max(||W||_F, eps).

    0 for a perfectly symmetric matrix, 2 for a nonzero antisymmetric one.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"symmetry score needs a square matrix, got {w.shape}")
    norm = np.linalg.norm(w)
    return float(np.linalg.norm(w - w.T) / max(norm, eps))


def param_count(
    n_entities: int, n_relations_aug: int, ent_dim: int, rel_dim: int, kind: ModelKind
) -> int:
    """Number of stored embedding/core parameters for a model family.

    Batch-norm scale/shift parameters are excluded; the count covers
    embedding matrices plus (for tucker/rescal) the core.
    """
    tag = kind.tag.lower()
    if tag == "tucker":
        return n_entities * ent_dim + n_relations_aug * rel_dim + ent_dim * ent_dim * rel_dim
    d = kind.base_dim
    if tag in ("complex", "simple"):
        return n_entities * 2 * d + n_relations_aug * 2 * d
    if tag == "distmult":
        return n_entities * d + n_relations_aug * d
    if tag == "rescal":
        return n_entities * d + n_relations_aug * d * d
    raise ValueError(f"unknown model kind {kind.tag!r}")


def init_model(
    n_entities: int,
    n_relations_aug: int,
    ent_dim: int,
    rel_dim: int,
    rng,
    dropout=(0.0, 0.0, 0.0),
    use_bn: bool = True,
    bn_momentum: float = 0.1,
    bn_epsilon: float = 1e-5,
) -> TuckerModel:
    """Fresh model: Gaussian embeddings (std 1/sqrt(dim)), uniform[-1, 1] core.

    Deterministic for a fixed rng state; draw order is entities, relations,
    core.
    """
    for n, label in ((n_entities, "entities"), (n_relations_aug, "relations"),
                     (ent_dim, "ent_dim"), (rel_dim, "rel_dim")):
        if n <= 0:
            raise ValueError(f"{label} must be positive, got {n}")
    entity_emb = rng.normal(0.0, 1.0 / np.sqrt(ent_dim), size=(n_entities, ent_dim))
    relation_emb = rng.normal(
        0.0, 1.0 / np.sqrt(rel_dim), size=(n_relations_aug, rel_dim)
    )
    core = rng.uniform(-1.0, 1.0, size=(ent_dim, rel_dim, ent_dim))
    d1, d2, d3 = dropout
    return TuckerModel(
        entity_emb=entity_emb,
        relation_emb=relation_emb,
        core=core,
        bn_in=BatchNorm(ent_dim, momentum=bn_momentum, epsilon=bn_epsilon),
        bn_hidden=BatchNorm(ent_dim, momentum=bn_momentum, epsilon=bn_epsilon),
        dropout_input=d1,
        dropout_rel_matrix=d2,
        dropout_hidden=d3,
        use_bn=use_bn,
    )
