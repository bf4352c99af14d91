"""Filtered ranking evaluation: mean reciprocal rank and hits@k.

Every query scores one (subject, relation) pair against all entities; all
other objects known true for that pair (in any split) are removed from the
candidate list before ranking. Object-side queries arrive as subject-side
queries of the reciprocal relation, so an augmented test split covers both
directions.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import TripleStore
from .model import TuckerModel, score_pairs

HITS_KS = (1, 3, 10)


@dataclass
class EvalReport:
    mrr: float
    hits: dict = field(default_factory=dict)  # k -> fraction of ranks <= k
    ranks: np.ndarray = None                  # per-query ranks, optional
    queries: list = None                      # (s, r, o) per rank, optional
    n_queries: int = 0

    def as_text(self) -> str:
        lines = [f"{'queries':>8}  {self.n_queries}", f"{'MRR':>8}  {self.mrr:.6f}"]
        for k in HITS_KS:
            lines.append(f"{f'hits@{k}':>8}  {self.hits[k]:.6f}")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["queries", self.n_queries])
            writer.writerow(["mrr", repr(self.mrr)])
            for k in HITS_KS:
                writer.writerow([f"hits@{k}", repr(self.hits[k])])

    def write_rank_dump(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject", "relation", "object", "rank"])
            for (s, r, o), rank in zip(self.queries, self.ranks):
                writer.writerow([s, r, o, rank])


def filtered_rank(scores, true_object: int, filter_set) -> int:
    """Rank of the true object once other known-true objects are withdrawn.

    rank = 1 + number of non-filtered candidates scoring strictly higher
    than the true object; ties never worsen the rank.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= true_object < scores.shape[0]:
        raise IndexError(
            f"true object {true_object} out of range [0, {scores.shape[0]})"
        )
    target = scores[true_object]
    higher = int(np.count_nonzero(scores > target))
    for o in filter_set:
        if o != true_object and scores[o] > target:
            higher -= 1
    return 1 + higher


def _rank_chunk(model, triples, filter_index):
    subj = np.fromiter((t[0] for t in triples), dtype=np.intp, count=len(triples))
    rel = np.fromiter((t[1] for t in triples), dtype=np.intp, count=len(triples))
    scores, _ = score_pairs(model, subj, rel)
    ranks = np.empty(len(triples), dtype=np.int64)
    for i, (s, r, o) in enumerate(triples):
        ranks[i] = filtered_rank(scores[i], o, filter_index.get((s, r), {o}))
    return ranks


def evaluate(
    model: TuckerModel,
    store: TripleStore,
    filter_index: dict,
    split: str = "test",
    threads: int = 1,
    chunk_size: int = 512,
    keep_ranks: bool = True,
) -> EvalReport:
    """Rank every triple of the chosen split (model in evaluation mode).

    The store must be reciprocal-augmented so both query directions are
    present. Queries are processed in fixed order; threads only parallelize
    score computation across chunks.
    """
    if not store.augmented:
        raise ValueError("evaluation requires the reciprocal-augmented store")
    triples = store.split(split)
    if not triples:
        raise ValueError(f"cannot evaluate an empty {split} split")
    chunks = [triples[i : i + chunk_size] for i in range(0, len(triples), chunk_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda c: _rank_chunk(model, c, filter_index), chunks)
            )
    else:
        parts = [_rank_chunk(model, c, filter_index) for c in chunks]
    ranks = np.concatenate(parts)

    return EvalReport(
        mrr=float(np.mean(1.0 / ranks)),
        hits={k: float(np.mean(ranks <= k)) for k in HITS_KS},
        ranks=ranks if keep_ranks else None,
        queries=list(triples) if keep_ranks else None,
        n_queries=len(triples),
    )
