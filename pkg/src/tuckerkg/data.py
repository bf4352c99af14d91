"""Triple ingestion, vocabularies, reciprocal augmentation and batching.

Dataset layout on disk: a directory with train.txt / valid.txt / test.txt,
one TAB-separated (subject, relation, object) triple per line. Vocabulary
dumps are "name<TAB>id" text files.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")


@dataclass
class Vocabulary:
    """Dense, first-appearance-ordered name <-> id maps for entities and relations.

    The reciprocal of relation id r is r + n_relations; reciprocal relations
    have no names of their own.
    """

    entity_ids: dict = field(default_factory=dict)
    relation_ids: dict = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def n_relations(self) -> int:
        return len(self.relation_ids)

    @property
    def n_relations_aug(self) -> int:
        return 2 * len(self.relation_ids)

    def entity_id(self, name: str, create: bool) -> int:
        eid = self.entity_ids.get(name)
        if eid is None:
            if not create:
                raise KeyError(f"unknown entity {name!r}")
            eid = len(self.entity_ids)
            self.entity_ids[name] = eid
        return eid

    def relation_id(self, name: str, create: bool) -> int:
        rid = self.relation_ids.get(name)
        if rid is None:
            if not create:
                raise KeyError(f"unknown relation {name!r}")
            rid = len(self.relation_ids)
            self.relation_ids[name] = rid
        return rid

    def entity_names(self) -> list:
        return sorted(self.entity_ids, key=self.entity_ids.get)

    def relation_names(self) -> list:
        return sorted(self.relation_ids, key=self.relation_ids.get)

    def reciprocal(self, r: int) -> int:
        return r + self.n_relations

    def dump(self, entities_path, relations_path):
        for path, names in (
            (entities_path, self.entity_names()),
            (relations_path, self.relation_names()),
        ):
            with open(path, "w", encoding="utf-8") as fh:
                for i, name in enumerate(names):
                    fh.write(f"{name}\t{i}\n")

    @classmethod
    def load(cls, entities_path, relations_path) -> "Vocabulary":
        vocab = cls()
        for path, table in (
            (entities_path, vocab.entity_ids),
            (relations_path, vocab.relation_ids),
        ):
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    parts = line.split("\t")
                    if len(parts) != 2:
                        raise ValueError(f"{path}:{lineno}: expected name<TAB>id")
                    table[parts[0]] = int(parts[1])
        return vocab


@dataclass
class TripleStore:
    """Id-encoded triples per split, plus the augmentation flag."""

    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)
    augmented: bool = False

    def split(self, name: str) -> list:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def splits(self):
        return (("train", self.train), ("valid", self.valid), ("test", self.test))

    def all_triples(self):
        return self.train + self.valid + self.test


def _read_split(path: Path, vocab: Vocabulary, create: bool) -> list:
    triples = []
    seen = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 3 TAB-separated fields, got {len(parts)}"
                )
            s = vocab.entity_id(parts[0], create)
            r = vocab.relation_id(parts[1], create)
            o = vocab.entity_id(parts[2], create)
            if (s, r, o) in seen:
                duplicates += 1
                continue
            seen.add((s, r, o))
            triples.append((s, r, o))
    if duplicates:
        log.warning("%s: dropped %d duplicate triples", path, duplicates)
    return triples


def load_triples(data_dir, vocab: Vocabulary = None):
    """Load train/valid/test splits from a dataset directory.

    With vocab=None a fresh vocabulary is built, ids assigned in first
    appearance order across train, then valid, then test. With a vocabulary
    given, unknown names are an error. Missing valid/test files load as
    empty splits.

    Returns (TripleStore, Vocabulary).
    """
    data_dir = Path(data_dir)
    train_path = data_dir / SPLIT_FILES[0]
    if not train_path.exists():
        raise FileNotFoundError(f"no train split at {train_path}")
    create = vocab is None
    if create:
        vocab = Vocabulary()
    store = TripleStore()
    for split_name, fname in zip(("train", "valid", "test"), SPLIT_FILES):
        path = data_dir / fname
        if path.exists():
            getattr(store, split_name).extend(_read_split(path, vocab, create))
    return store, vocab


def save_triples(store: TripleStore, vocab: Vocabulary, data_dir):
    """Write the store back out in the standard three-file TSV layout."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    entities = vocab.entity_names()
    relations = vocab.relation_names()
    for split_name, fname in zip(("train", "valid", "test"), SPLIT_FILES):
        with open(data_dir / fname, "w", encoding="utf-8") as fh:
            for s, r, o in store.split(split_name):
                fh.write(f"{entities[s]}\t{relations[r]}\t{entities[o]}\n")


def augment_reciprocal(store: TripleStore, vocab: Vocabulary) -> TripleStore:
    """Add the reversed triple (o, r + n_relations, s) for every (s, r, o).

    Every split doubles. Augmenting twice is an error.
    """
    if store.augmented:
        raise ValueError("triple store is already reciprocal-augmented")
    n_r = vocab.n_relations
    out = TripleStore(augmented=True)
    for split_name, triples in store.splits():
        aug = getattr(out, split_name)
        for s, r, o in triples:
            aug.append((s, r, o))
            aug.append((o, r + n_r, s))
    return out


class FilterIndex(dict):
    """(subject, relation) -> set of known-true object ids across all splits.

    Absent pairs look up as the empty set via objects().
    """

    def objects(self, s: int, r: int) -> set:
        return self.get((s, r), frozenset())


def build_filter_index(store: TripleStore) -> FilterIndex:
    """Index every object known true for each (subject, relation) in any split.

    Used to drop known-true competitors from ranking candidate lists.
    """
    if not store.augmented:
        raise ValueError("filter index must be built over the augmented store")
    index = FilterIndex()
    for _, triples in store.splits():
        for s, r, o in triples:
            index.setdefault((s, r), set()).add(o)
    return index


def training_pairs(store: TripleStore):
    """Unique (subject, relation) pairs of the training split with their
    true-object id arrays, in first-appearance order."""
    objects = {}
    order = []
    for s, r, o in store.train:
        key = (s, r)
        if key not in objects:
            objects[key] = []
            order.append(key)
        objects[key].append(o)
    pairs = np.array(order, dtype=np.intp).reshape(len(order), 2)
    object_lists = [np.array(sorted(set(objects[key])), dtype=np.intp) for key in order]
    return pairs, object_lists


def make_1n_batches(store: TripleStore, n_entities: int, batch_size: int, rng):
    """One epoch of 1-N batches over the training split.

    Unique (subject, relation) pairs are shuffled with rng; each batch is
    (pairs, labels) with pairs an (B, 2) id array and labels a dense
    (B, n_entities) 0/1 matrix marking the training-split objects of each
    pair. Truths from valid/test are never marked.
    """
    if not store.augmented:
        raise ValueError("1-N batches require the reciprocal-augmented store")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    pairs, object_lists = training_pairs(store)
    order = rng.permutation(len(object_lists))
    for start in range(0, len(order), batch_size):
        chosen = order[start : start + batch_size]
        batch_pairs = pairs[chosen]
        labels = np.zeros((len(chosen), n_entities))
        for row, idx in enumerate(chosen):
            labels[row, object_lists[idx]] = 1.0
        yield batch_pairs, labels


SYNTH_RELATIONS = ("linked_with", "precedes", "maps_f", "maps_g", "maps_fg")


def generate_synthetic(n_entities: int, seed: int):
    """Small relational world with regularities a bilinear model can learn.

    Relations: one symmetric random graph (both directions always true), one
    strict order sampled under a hidden permutation (antisymmetric), two
    random unary mappings f and g, and their composition g(f(x)). Facts are
    split 80/10/10 with every entity and relation forced into train.

    Returns (TripleStore, Vocabulary), not yet reciprocal-augmented.
    """
    if n_entities < 20:
        raise ValueError("synthetic world needs at least 20 entities")
    rng = np.random.default_rng(seed)
    width = len(str(n_entities - 1))
    vocab = Vocabulary()
    for i in range(n_entities):
        vocab.entity_id(f"e{i:0{width}d}", create=True)
    for name in SYNTH_RELATIONS:
        vocab.relation_id(name, create=True)
    r_sym, r_ord, r_f, r_g, r_fg = range(5)

    facts = []
    # Symmetric graph: undirected random edges, emitted in both directions.
    n_edges = 2 * n_entities
    edges = set()
    while len(edges) < n_edges:
        a, b = rng.integers(0, n_entities, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    for a, b in sorted(edges):
        facts.append((int(a), r_sym, int(b)))
        facts.append((int(b), r_sym, int(a)))

    # Strict order under a hidden permutation: sample pairs, orient low -> high.
    position = rng.permutation(n_entities)
    n_order = 6 * n_entities
    order_pairs = set()
    while len(order_pairs) < n_order:
        a, b = rng.integers(0, n_entities, size=2)
        if a == b:
            continue
        if position[a] > position[b]:
            a, b = b, a
        order_pairs.add((int(a), int(b)))
    for a, b in sorted(order_pairs):
        facts.append((a, r_ord, b))

    # Random mappings and their composition.
    f = rng.integers(0, n_entities, size=n_entities)
    g = rng.integers(0, n_entities, size=n_entities)
    for x in range(n_entities):
        facts.append((x, r_f, int(f[x])))
        facts.append((x, r_g, int(g[x])))
        facts.append((x, r_fg, int(g[f[x]])))

    # 80/10/10 split; repair so train covers every entity and relation.
    order = rng.permutation(len(facts))
    n_valid = len(facts) // 10
    n_test = len(facts) // 10
    n_train = len(facts) - n_valid - n_test
    train = [facts[i] for i in order[:n_train]]
    valid = [facts[i] for i in order[n_train : n_train + n_valid]]
    test = [facts[i] for i in order[n_train + n_valid :]]

    def covered(triples):
        ents, rels = set(), set()
        for s, r, o in triples:
            ents.update((s, o))
            rels.add(r)
        return ents, rels

    train_ents, train_rels = covered(train)
    for pool in (valid, test):
        for i in range(len(pool) - 1, -1, -1):
            s, r, o = pool[i]
            if (
                s not in train_ents
                or o not in train_ents
                or r not in train_rels
            ):
                train.append(pool.pop(i))
                train_ents.update((s, o))
                train_rels.add(r)

    store = TripleStore(train=train, valid=valid, test=test)
    return store, vocab
