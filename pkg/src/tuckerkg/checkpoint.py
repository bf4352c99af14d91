"""Bit-exact model checkpoints.

A checkpoint is a directory holding:
  metadata.json  - format version, dimensions, batch-norm hyper-parameters,
                   dropout rates and the names of the other files
  E.bin, R.bin, W.bin, bn_in.bin, bn_hidden.bin
                 - raw little-endian float64 arrays, each prefixed with a
                   binary header: magic "TKER", uint32 rank, then one uint32
                   per dimension (16 bytes total for matrices)
  entities.tsv, relations.tsv
                 - vocabulary dumps, one "name<TAB>id" per line

Array payloads are row-major with the last index fastest, matching the
in-memory tensor layout, so a load reproduces every byte of the saved
parameters.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .model import BatchNorm, TuckerModel

MAGIC = b"TKER"
FORMAT_VERSION = 1

ARRAY_FILES = {
    "entity_emb": "E.bin",
    "relation_emb": "R.bin",
    "core": "W.bin",
    "bn_in": "bn_in.bin",
    "bn_hidden": "bn_hidden.bin",
}
VOCAB_FILES = {"entities": "entities.tsv", "relations": "relations.tsv"}


def write_array(path, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        if not 1 <= rank <= 3:
            raise ValueError(f"{path}: unsupported rank {rank}")
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        payload = fh.read()
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for shape {shape}"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return np.ascontiguousarray(data.reshape(shape))


def save_checkpoint(directory, model: TuckerModel, vocab: Vocabulary = None):
    """Write the model (and vocabulary, if given) into a checkpoint directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_array(directory / ARRAY_FILES["entity_emb"], model.entity_emb)
    write_array(directory / ARRAY_FILES["relation_emb"], model.relation_emb)
    write_array(directory / ARRAY_FILES["core"], model.core)
    write_array(directory / ARRAY_FILES["bn_in"], model.bn_in.state_matrix())
    write_array(directory / ARRAY_FILES["bn_hidden"], model.bn_hidden.state_matrix())
    if vocab is not None:
        vocab.dump(
            directory / VOCAB_FILES["entities"], directory / VOCAB_FILES["relations"]
        )
    meta = {
        "format_version": FORMAT_VERSION,
        "n_entities": model.n_entities,
        "n_relations_aug": model.n_relations_aug,
        "ent_dim": model.ent_dim,
        "rel_dim": model.rel_dim,
        "bn_momentum": model.bn_in.momentum,
        "bn_epsilon": model.bn_in.epsilon,
        "bn_enabled": model.use_bn,
        "dropout": [
            model.dropout_input,
            model.dropout_rel_matrix,
            model.dropout_hidden,
        ],
        "arrays": dict(ARRAY_FILES),
        "vocab": dict(VOCAB_FILES) if vocab is not None else None,
    }
    with open(directory / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory):
    """Read a checkpoint directory. Returns (TuckerModel, Vocabulary or None)."""
    directory = Path(directory)
    meta_path = directory / "metadata.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no checkpoint metadata at {meta_path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format version {meta.get('format_version')}"
        )
    arrays = meta["arrays"]
    entity_emb = read_array(directory / arrays["entity_emb"])
    relation_emb = read_array(directory / arrays["relation_emb"])
    core = read_array(directory / arrays["core"])
    momentum = meta["bn_momentum"]
    epsilon = meta["bn_epsilon"]
    bn_in = BatchNorm.from_state_matrix(
        read_array(directory / arrays["bn_in"]), momentum, epsilon
    )
    bn_hidden = BatchNorm.from_state_matrix(
        read_array(directory / arrays["bn_hidden"]), momentum, epsilon
    )
    expected = (
        (meta["n_entities"], meta["ent_dim"]),
        (meta["n_relations_aug"], meta["rel_dim"]),
    )
    if entity_emb.shape != expected[0] or relation_emb.shape != expected[1]:
        raise ValueError(
            f"checkpoint arrays {entity_emb.shape}/{relation_emb.shape} disagree "
            f"with metadata {expected}"
        )
    d1, d2, d3 = meta["dropout"]
    model = TuckerModel(
        entity_emb=entity_emb,
        relation_emb=relation_emb,
        core=core,
        bn_in=bn_in,
        bn_hidden=bn_hidden,
        dropout_input=d1,
        dropout_rel_matrix=d2,
        dropout_hidden=d3,
        use_bn=meta["bn_enabled"],
    )
    vocab = None
    if meta.get("vocab"):
        vocab = Vocabulary.load(
            directory / meta["vocab"]["entities"], directory / meta["vocab"]["relations"]
        )
    return model, vocab
