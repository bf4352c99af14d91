"""Self-verification suites: constrained-core equivalences, gradient checks,
ranking oracle and the constructive expressiveness proof.

Each suite compares the engine against an independent computation and
reports the worst deviation found. The `corrupt` flag deliberately damages
the structure under test; a healthy build fails the corrupted run, which
serves as a negative control.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .cores import (
    build_complex_core,
    build_distmult_core,
    build_simple_core,
    rescal_score,
)
from .data import TripleStore, augment_reciprocal, make_1n_batches, Vocabulary
from .evaluate import filtered_rank
from .expressive import construct_full_expressive, verify_separation
from .model import TuckerModel, init_model, score_pairs, sigmoid
from .train import TrainConfig, forward_backward, _param_slots

EQUIV_TOL = 1e-12
GRAD_TOL = 1e-4
FD_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _packed_model_scores(entity_pack, rel_pack, core):
    """Score trial i as (subject row i, relation row i, object row N+i)
    through the full evaluation pipeline with batch norm disabled."""
    n = rel_pack.shape[0]
    model = TuckerModel(
        entity_emb=entity_pack, relation_emb=rel_pack, core=core, use_bn=False
    )
    scores, _ = score_pairs(model, np.arange(n), np.arange(n))
    return scores[np.arange(n), n + np.arange(n)]


def distmult_suite(trials: int = 1000, seed: int = 0, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    d = 8
    core = build_distmult_core(d)
    if corrupt:
        core[0, 1, 0] += 0.5
    subj = rng.normal(size=(trials, d))
    obj = rng.normal(size=(trials, d))
    rel = rng.normal(size=(trials, d))
    got = _packed_model_scores(np.vstack([subj, obj]), rel, core)
    want = np.einsum("bi,bi,bi->b", subj, rel, obj)
    worst = float(np.max(np.abs(got - want)))
    return SuiteResult("distmult", worst < EQUIV_TOL, f"max |diff| {worst:.3e}")


def complex_suite(trials: int = 1000, seed: int = 1, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    d = 6
    core = build_complex_core(d)
    if corrupt:
        core[0, 0, d] += 0.5
    subj = rng.normal(size=(trials, d)) + 1j * rng.normal(size=(trials, d))
    rel = rng.normal(size=(trials, d)) + 1j * rng.normal(size=(trials, d))
    obj = rng.normal(size=(trials, d)) + 1j * rng.normal(size=(trials, d))
    pack = lambda z: np.hstack([z.real, z.imag])
    got = _packed_model_scores(
        np.vstack([pack(subj), pack(obj)]), pack(rel), core
    )
    want = np.einsum("bi,bi,bi->b", subj, rel, obj.conj()).real
    worst = float(np.max(np.abs(got - want)))
    return SuiteResult("complex", worst < EQUIV_TOL, f"max |diff| {worst:.3e}")


def simple_suite(trials: int = 1000, seed: int = 2, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    d = 6
    core = build_simple_core(d)
    if corrupt:
        core[0, 0, d] = 0.25
    head_s, tail_s = rng.normal(size=(trials, d)), rng.normal(size=(trials, d))
    head_o, tail_o = rng.normal(size=(trials, d)), rng.normal(size=(trials, d))
    fwd, inv = rng.normal(size=(trials, d)), rng.normal(size=(trials, d))
    got = _packed_model_scores(
        np.vstack([np.hstack([head_s, tail_s]), np.hstack([head_o, tail_o])]),
        np.hstack([fwd, inv]),
        core,
    )
    want = 0.5 * (
        np.einsum("bi,bi,bi->b", head_s, fwd, tail_o)
        + np.einsum("bi,bi,bi->b", head_o, inv, tail_s)
    )
    worst = float(np.max(np.abs(got - want)))
    return SuiteResult("simple", worst < EQUIV_TOL, f"max |diff| {worst:.3e}")


def rescal_suite(trials: int = 1000, seed: int = 3, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    n_e, n_r, d = 12, 5, 7
    entity_emb = rng.normal(size=(n_e, d))
    core = rng.normal(size=(d, n_r, d))
    model_core = core.copy()
    if corrupt:
        model_core[0, 0, 0] += 0.5
    model = TuckerModel(
        entity_emb=entity_emb,
        relation_emb=np.eye(n_r),
        core=model_core,
        use_bn=False,
    )
    s_ids = rng.integers(0, n_e, size=trials)
    r_ids = rng.integers(0, n_r, size=trials)
    o_ids = rng.integers(0, n_e, size=trials)
    scores, _ = score_pairs(model, s_ids, r_ids)
    got = scores[np.arange(trials), o_ids]
    want = np.array(
        [rescal_score(entity_emb, core, s, r, o) for s, r, o in zip(s_ids, r_ids, o_ids)]
    )
    worst = float(np.max(np.abs(got - want)))
    return SuiteResult("rescal", worst < EQUIV_TOL, f"max |diff| {worst:.3e}")


def tiny_training_setup(seed: int = 0, n_entities: int = 6, n_relations: int = 2):
    """Small augmented store + model + batch for gradient checking.

    Dropout is off and the batch norms carry randomized (then frozen)
    running statistics so the loss is a smooth function of the parameters.
    """
    rng = np.random.default_rng(seed)
    vocab = Vocabulary()
    for i in range(n_entities):
        vocab.entity_id(f"n{i}", create=True)
    for j in range(n_relations):
        vocab.relation_id(f"r{j}", create=True)
    triples = []
    for _ in range(3 * n_entities):
        s, o = rng.integers(0, n_entities, size=2)
        r = int(rng.integers(0, n_relations))
        triples.append((int(s), r, int(o)))
    store = augment_reciprocal(
        TripleStore(train=sorted(set(triples))), vocab
    )
    model = init_model(n_entities, vocab.n_relations_aug, 4, 3, rng)
    model.bn_in.running_mean = rng.normal(0, 0.1, size=model.ent_dim)
    model.bn_in.running_var = rng.uniform(0.5, 1.5, size=model.ent_dim)
    model.bn_in.scale = rng.uniform(0.8, 1.2, size=model.ent_dim)
    model.bn_in.shift = rng.normal(0, 0.1, size=model.ent_dim)
    model.bn_hidden.running_mean = rng.normal(0, 0.1, size=model.ent_dim)
    model.bn_hidden.running_var = rng.uniform(0.5, 1.5, size=model.ent_dim)
    model.bn_hidden.scale = rng.uniform(0.8, 1.2, size=model.ent_dim)
    model.bn_hidden.shift = rng.normal(0, 0.1, size=model.ent_dim)
    cfg = TrainConfig(
        ent_dim=model.ent_dim,
        rel_dim=model.rel_dim,
        dropout_input=0.0,
        dropout_rel_matrix=0.0,
        dropout_hidden=0.0,
        label_smoothing=0.1,
        batch_size=64,
        seed=seed,
    )
    batch = next(iter(make_1n_batches(store, n_entities, cfg.batch_size, rng)))
    return model, batch, cfg


def finite_difference_check(
    seed: int = 0, n_samples: int = 34, h: float = FD_STEP, corrupt: bool = False
):
    """Compare analytic gradients against central finite differences.

    Returns (worst_relative_error, n_checked). Sampled parameters span the
    entity embeddings, the relation embeddings used by the batch, the core
    and the batch-norm scale/shift vectors.
    """
    model, batch, cfg = tiny_training_setup(seed)
    rng = np.random.default_rng(seed + 1)

    def loss_only():
        loss, _ = forward_backward(model, batch, cfg, rng=None, freeze_bn_stats=True)
        return loss

    _, grads = forward_backward(model, batch, cfg, rng=None, freeze_bn_stats=True)

    slots = _param_slots(model)
    batch_rels = np.unique(batch[0][:, 1])
    picks = []
    n_emb = max(6, n_samples - 24)
    for _ in range(n_emb):
        picks.append(("entity_emb", (int(rng.integers(model.n_entities)),
                                     int(rng.integers(model.ent_dim)))))
    for _ in range(8):
        picks.append(("relation_emb", (int(rng.choice(batch_rels)),
                                       int(rng.integers(model.rel_dim)))))
    for _ in range(8):
        picks.append(("core", (int(rng.integers(model.ent_dim)),
                               int(rng.integers(model.rel_dim)),
                               int(rng.integers(model.ent_dim)))))
    for name in ("bn_in_scale", "bn_in_shift", "bn_hidden_scale", "bn_hidden_shift"):
        for _ in range(2):
            picks.append((name, (int(rng.integers(model.ent_dim)),)))

    worst = 0.0
    for name, idx in picks:
        param = slots[name]
        analytic = float(getattr(grads, name)[idx])
        if corrupt:
            analytic *= 1.01
        original = param[idx]
        param[idx] = original + h
        up = loss_only()
        param[idx] = original - h
        down = loss_only()
        param[idx] = original
        fd = (up - down) / (2.0 * h)
        denom = max(abs(analytic), abs(fd))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(analytic - fd) / denom)
    return worst, len(picks)


def gradient_suite(seed: int = 0, repeats: int = 2, corrupt: bool = False):
    worst = 0.0
    checked = 0
    for t in range(max(1, repeats)):
        w, n = finite_difference_check(seed=seed + t, corrupt=corrupt)
        worst = max(worst, w)
        checked += n
    return SuiteResult(
        "gradients",
        worst < GRAD_TOL,
        f"max relative error {worst:.3e} over {checked} parameters",
    )


def sort_rank_oracle(scores, true_object: int, filter_set) -> int:
    """Rank by explicitly sorting the surviving candidates' scores."""
    candidates = [
        o
        for o in range(len(scores))
        if o == true_object or o not in filter_set
    ]
    ordered = sorted(scores[o] for o in candidates)
    n_greater = len(ordered) - bisect_right(ordered, scores[true_object])
    return 1 + n_greater


def ranking_suite(trials: int = 200, seed: int = 4, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    n_e = 50
    mism = 0
    for _ in range(trials):
        scores = rng.normal(size=n_e)
        # duplicated values exercise the tie-handling convention
        ties = rng.integers(0, n_e, size=8)
        scores[ties] = np.round(scores[ties], 1)
        true_o = int(rng.integers(n_e))
        fltr = set(map(int, rng.integers(0, n_e, size=rng.integers(1, 12))))
        fltr.add(true_o)
        got = filtered_rank(scores, true_o, fltr)
        if corrupt:
            got += 1
        if got != sort_rank_oracle(scores, true_o, fltr):
            mism += 1
    return SuiteResult(
        "ranking", mism == 0, f"{mism}/{trials} mismatches vs sort oracle"
    )


def theorem_margin() -> float:
    return float(sigmoid(1.0) - 0.5)


def random_world(rng, n_entities: int, n_relations: int, density: float = 0.3):
    world = set()
    for s in range(n_entities):
        for r in range(n_relations):
            for o in range(n_entities):
                if rng.random() < density:
                    world.add((s, r, o))
    return world


def expressiveness_suite(trials: int = 50, seed: int = 5, corrupt: bool = False):
    rng = np.random.default_rng(seed)
    expected_margin = theorem_margin()
    failures = 0
    for _ in range(trials):
        n_e = int(rng.integers(3, 9))
        n_r = int(rng.integers(1, 5))
        world = random_world(rng, n_e, n_r)
        model = construct_full_expressive(world, n_e, n_r)
        if corrupt:
            model.core[0, 0, 0] = 0.0
        report = verify_separation(model, world)
        ok = report.correct == report.total and abs(
            report.margin - expected_margin
        ) < 1e-12
        if not ok:
            failures += 1
    return SuiteResult(
        "theorem1",
        failures == 0,
        f"{failures}/{trials} worlds misclassified or off-margin",
    )


SUITES = {
    "distmult": distmult_suite,
    "complex": complex_suite,
    "simple": simple_suite,
    "rescal": rescal_suite,
    "gradients": gradient_suite,
    "ranking": ranking_suite,
    "theorem1": expressiveness_suite,
}


def run_suites(names=None, trials: int = None, seed: int = None, corrupt: bool = False):
    """Run the named suites (all by default). Returns a list of SuiteResult.

    trials applies to the sampling suites; the gradient suite has a fixed
    amount of work per run.
    """
    results = []
    for name in names or SUITES:
        fn = SUITES[name]
        kwargs = {"corrupt": corrupt}
        if trials is not None and name != "gradients":
            kwargs["trials"] = trials
        if seed is not None:
            kwargs["seed"] = seed
        results.append(fn(**kwargs))
    return results
