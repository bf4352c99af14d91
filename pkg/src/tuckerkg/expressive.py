"""Constructive full-expressiveness builder and separation verifier.

For any assignment of truth values over n_e entities and n_r relations
there is an exact model with one-hot embeddings (ent_dim = n_e,
rel_dim = n_r) and a core holding +1 at true cells and -1 at false ones:
every score is then exactly +1 or -1 and the sigmoid threshold at 1/2
reproduces the ground truth with margin sigmoid(1) - 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BatchNorm, TuckerModel, score_pairs, sigmoid

ENUMERATION_GUARD = 10**6  # max n_e * n_e * n_r cells verify_separation will visit


@dataclass
class SeparationReport:
    correct: int
    total: int
    margin: float  # min |sigmoid(score) - 1/2| over all cells

    def as_text(self) -> str:
        return (
            f"correct {self.correct}/{self.total}  "
            f"min margin {self.margin:.6f}"
        )


def construct_full_expressive(world, n_entities: int, n_relations: int) -> TuckerModel:
    """Exact model for a ground truth given as a set of true (s, r, o) ids.

    Identity embedding matrices select core cells directly; the core is +1
    on true cells and -1 elsewhere. Batch norm is disabled and dropout off,
    so scoring is the plain trilinear contraction.
    """
    core = -np.ones((n_entities, n_relations, n_entities))
    for s, r, o in world:
        if not (0 <= s < n_entities and 0 <= o < n_entities):
            raise IndexError(f"entity id out of range in triple {(s, r, o)}")
        if not 0 <= r < n_relations:
            raise IndexError(f"relation id out of range in triple {(s, r, o)}")
        core[s, r, o] = 1.0
    return TuckerModel(
        entity_emb=np.eye(n_entities),
        relation_emb=np.eye(n_relations),
        core=core,
        bn_in=BatchNorm(n_entities),
        bn_hidden=BatchNorm(n_entities),
        use_bn=False,
    )


def verify_separation(
    model: TuckerModel, world, threshold: float = 0.5
) -> SeparationReport:
    """Classify every possible triple by sigmoid(score) > threshold.

    Scores at the threshold exactly classify as false. Worlds larger than
    the enumeration guard are rejected.
    """
    n_e = model.n_entities
    n_r = model.relation_emb.shape[0]
    total = n_e * n_e * n_r
    if total > ENUMERATION_GUARD:
        raise ValueError(
            f"world too large to enumerate: {total} cells > {ENUMERATION_GUARD}"
        )
    world = set(world)
    correct = 0
    margin = np.inf
    for r in range(n_r):
        subj = np.arange(n_e, dtype=np.intp)
        rel = np.full(n_e, r, dtype=np.intp)
        scores, _ = score_pairs(model, subj, rel)
        probs = sigmoid(scores)
        margin = min(margin, float(np.min(np.abs(probs - 0.5))))
        predicted = probs > threshold
        for s in range(n_e):
            for o in range(n_e):
                if predicted[s, o] == ((s, r, o) in world):
                    correct += 1
    return SeparationReport(correct=correct, total=total, margin=float(margin))
