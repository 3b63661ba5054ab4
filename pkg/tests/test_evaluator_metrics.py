import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tara.embeddings import EmbeddingMatrix, l2_normalize
from tara.evaluator import (
    EvalError,
    Query,
    RetrievalTask,
    binary_accuracy,
    mcq_accuracy,
    mean_average_precision,
    modality_gap,
    nearest_centroid_probe,
    negation_eval,
    recall_at_k,
)

from oracles import (
    oracle_binary_accuracy,
    oracle_map,
    oracle_mcq_accuracy,
    oracle_recall_at_k,
)


def _task(n_queries, n_gallery, relevant, candidates=None):
    gallery = tuple(f"g{j}" for j in range(n_gallery))
    queries = tuple(
        Query(
            f"q{i}",
            frozenset(f"g{j}" for j in relevant[i]),
            None if candidates is None else tuple(f"g{j}" for j in candidates[i]),
        )
        for i in range(n_queries)
    )
    return RetrievalTask("t2v", "all", queries, gallery)


def test_recall_best_case():
    task = _task(1, 3, relevant=[[0]])
    sims = np.array([[0.9, 0.2, 0.1]])
    assert recall_at_k(sims, task, 1) == 1.0


def test_recall_boundary_second_of_two():
    task = _task(1, 2, relevant=[[1]])
    sims = np.array([[0.9, 0.2]])
    assert recall_at_k(sims, task, 1) == 0.0
    assert recall_at_k(sims, task, 2) == 1.0


def test_recall_k_range_errors():
    task = _task(1, 2, relevant=[[0]])
    sims = np.array([[0.5, 0.1]])
    with pytest.raises(EvalError):
        recall_at_k(sims, task, 0)
    with pytest.raises(EvalError):
        recall_at_k(sims, task, 3)


def test_map_perfect_ranking():
    task = _task(1, 2, relevant=[[0]])
    assert mean_average_precision(np.array([[0.9, 0.1]]), task) == 1.0


def test_map_hand_example_ranks_1_and_3():
    # Relevant at ranks 1 and 3 of 4: AP = (1 + 2/3) / 2 = 0.83333...
    task = _task(1, 4, relevant=[[0, 2]])
    sims = np.array([[0.9, 0.8, 0.7, 0.1]])
    assert mean_average_precision(sims, task) == pytest.approx(5 / 6, abs=1e-12)


def test_map_two_candidate_random_converges_to_075(rng):
    # Random scores on 2-candidate galleries with 1 relevant: E[AP] = 0.75.
    trials = 4000
    task = _task(trials, 2, relevant=[[0]] * trials)
    sims = rng.standard_normal((trials, 2))
    assert mean_average_precision(sims, task) == pytest.approx(0.75, abs=0.02)


def test_binary_accuracy_cases():
    task = _task(2, 2, relevant=[[0], [1]], candidates=[[0, 1], [0, 1]])
    sims = np.array([[0.9, 0.1], [0.9, 0.1]])
    assert binary_accuracy(sims, task) == 0.5
    tie = np.array([[0.5, 0.5], [0.4, 0.4]])
    assert binary_accuracy(tie, task) == 0.5


def test_binary_accuracy_random_chance(rng):
    trials = 10_000
    task = _task(trials, 2, relevant=[[i % 2] for i in range(trials)])
    sims = rng.standard_normal((trials, 2))
    assert binary_accuracy(sims, task) == pytest.approx(0.5, abs=0.02)


def test_binary_accuracy_requires_two_candidates():
    task = _task(1, 3, relevant=[[0]])
    with pytest.raises(EvalError, match="exactly 2"):
        binary_accuracy(np.array([[0.3, 0.2, 0.1]]), task)


def test_binary_vs_map_rank_pattern_equivalence():
    # Tie-free two-candidate tasks: mean AP = 0.5 + 0.5 * binary accuracy,
    # so acc >= 0.5 exactly when mAP >= 0.75. Enumerate all win/loss patterns.
    for n in (1, 2, 3, 4, 5):
        for pattern in itertools.product([0, 1], repeat=n):
            task = _task(n, 2, relevant=[[0]] * n, candidates=[[0, 1]] * n)
            sims = np.array([[0.8, 0.2] if win else [0.2, 0.8] for win in pattern])
            acc = binary_accuracy(sims, task)
            ap = mean_average_precision(sims, task)
            assert ap == pytest.approx(0.5 + 0.5 * acc, abs=1e-12)
            assert (acc >= 0.5) == (ap >= 0.75 - 1e-12)


def test_deterministic_tie_break_by_gallery_index():
    task = _task(1, 3, relevant=[[1]])
    sims = np.array([[0.5, 0.5, 0.5]])
    # All tied: rank order is gallery order, so relevant g1 sits at rank 2.
    assert recall_at_k(sims, task, 1) == 0.0
    assert recall_at_k(sims, task, 2) == 1.0


def test_metric_oracles_on_random_instances(rng):
    for _ in range(30):
        nq = int(rng.integers(1, 8))
        ng = int(rng.integers(2, 12))
        relevant = [list(rng.choice(ng, size=rng.integers(1, ng), replace=False))
                    for _ in range(nq)]
        task = _task(nq, ng, relevant)
        sims = rng.standard_normal((nq, ng))
        queries = [(list(range(ng)), set(r)) for r in relevant]
        k = int(rng.integers(1, ng + 1))
        assert recall_at_k(sims, task, k) == oracle_recall_at_k(sims, queries, k)
        assert mean_average_precision(sims, task) == pytest.approx(
            oracle_map(sims, queries), abs=1e-12
        )


def test_monotone_transform_invariance(rng):
    nq, ng = 5, 9
    relevant = [[int(rng.integers(0, ng))] for _ in range(nq)]
    task = _task(nq, ng, relevant)
    sims = rng.standard_normal((nq, ng))
    transformed = np.exp(3.0 * sims) + 7.0
    for k in (1, 3, 9):
        assert recall_at_k(sims, task, k) == recall_at_k(transformed, task, k)
    assert mean_average_precision(sims, task) == pytest.approx(
        mean_average_precision(transformed, task), abs=1e-12
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 6))
def test_recall_nondecreasing_in_k(seed, k):
    gen = np.random.default_rng(seed)
    task = _task(4, 6, relevant=[[int(gen.integers(0, 6))] for _ in range(4)])
    sims = gen.standard_normal((4, 6))
    values = [recall_at_k(sims, task, kk) for kk in range(1, 7)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_mcq_self_match():
    q = np.array([[1.0, 0.0]])
    choices = [np.array([[1.0, 0.0], [0.0, 1.0]])]
    assert mcq_accuracy(q, choices, [0]) == 1.0


def test_mcq_random_chance(rng):
    trials = 5000
    qs = rng.standard_normal((trials, 4))
    choices = [rng.standard_normal((2, 4)) for _ in range(trials)]
    answers = list(rng.integers(0, 2, size=trials))
    assert mcq_accuracy(qs, choices, answers) == pytest.approx(0.5, abs=0.02)


def test_mcq_97_way_planted():
    dim = 8
    answer_vec = np.zeros(dim)
    answer_vec[0] = 1.0
    others = np.zeros((96, dim))
    others[:, 1] = 1.0
    q = answer_vec * 0.9 + 0.05
    choices = np.vstack([others[:40], answer_vec[None], others[40:]])
    assert mcq_accuracy(q[None, :], [choices], [40]) == 1.0


def test_mcq_ties_resolve_to_lowest_index():
    q = np.array([[1.0, 0.0]])
    tied = np.array([[0.5, 0.5], [0.5, 0.5]])  # equal cosine to q
    tied = tied / np.linalg.norm(tied, axis=1, keepdims=True)
    assert mcq_accuracy(q, [tied], [0]) == 1.0
    assert mcq_accuracy(q, [tied], [1]) == 0.0


def test_mcq_answer_out_of_range():
    q = np.array([[1.0, 0.0]])
    with pytest.raises(EvalError, match="out of range"):
        mcq_accuracy(q, [np.eye(2)], [2])


def test_mcq_matches_oracle(rng):
    qs = rng.standard_normal((40, 5))
    choices = [rng.standard_normal((int(rng.integers(2, 6)), 5)) for _ in range(40)]
    answers = [int(rng.integers(0, c.shape[0])) for c in choices]
    assert mcq_accuracy(qs, choices, answers) == oracle_mcq_accuracy(qs, choices, answers)


def _unit_matrix(ids, data):
    return l2_normalize(EmbeddingMatrix(ids, data))


def test_negation_degenerate_equality(rng):
    gallery = _unit_matrix([f"g{i}" for i in range(8)], rng.standard_normal((8, 4)))
    queries = _unit_matrix(["q0", "q1"], rng.standard_normal((2, 4)))
    relevance = {"q0": {"g0"}, "q1": {"g3", "g4"}}
    r5, rneg5 = negation_eval(queries, queries, gallery, relevance, k=5)
    assert r5 == rneg5


def test_negation_planted_failure():
    data = np.zeros((6, 4))
    for i in range(6):
        data[i, i % 4] = 1.0
    gallery = EmbeddingMatrix([f"g{i}" for i in range(6)], data, normalized=True)
    orig = EmbeddingMatrix(["q"], data[0:1], normalized=True)
    neg_data = np.zeros((1, 4))
    neg_data[0, 3] = 1.0  # points at the wrong gallery corner
    negated = EmbeddingMatrix(["q"], neg_data, normalized=True)
    relevance = {"q": {"g0"}}
    r1, rneg1 = negation_eval(orig, negated, gallery, relevance, k=1)
    assert r1 == 1.0
    assert rneg1 == 0.0


def test_negation_random_fixture_matches_oracle(rng):
    n_q, n_g, dim = 20, 15, 6
    gallery = _unit_matrix([f"g{i}" for i in range(n_g)], rng.standard_normal((n_g, dim)))
    qids = [f"q{i}" for i in range(n_q)]
    orig = _unit_matrix(qids, rng.standard_normal((n_q, dim)))
    neg = _unit_matrix(qids, rng.standard_normal((n_q, dim)))
    relevance = {
        qid: {f"g{j}" for j in rng.choice(n_g, size=2, replace=False)} for qid in qids
    }
    r5, rneg5 = negation_eval(orig, neg, gallery, relevance, k=5)
    oracle_queries = [
        (list(range(n_g)), {int(g[1:]) for g in relevance[qid]}) for qid in qids
    ]
    from oracles import oracle_recall_at_k

    sims = orig.data.astype(float) @ gallery.data.astype(float).T
    sims_neg = neg.data.astype(float) @ gallery.data.astype(float).T
    assert r5 == oracle_recall_at_k(sims, oracle_queries, 5)
    assert rneg5 == oracle_recall_at_k(sims_neg, oracle_queries, 5)


def test_negation_unpaired_query(rng):
    gallery = _unit_matrix(["g0"], rng.standard_normal((1, 4)))
    orig = _unit_matrix(["q0", "q1"], rng.standard_normal((2, 4)))
    negated = _unit_matrix(["q0"], rng.standard_normal((1, 4)))
    with pytest.raises(EvalError, match="unpaired"):
        negation_eval(orig, negated, gallery, {"q0": {"g0"}, "q1": {"g0"}})


def test_probe_centroid_self_match():
    train = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
    labels = ["a", "a", "b", "b"]
    test = np.array([[1.0, 0.05], [0.05, 1.0]])
    assert nearest_centroid_probe(train, labels, test, ["a", "b"]) == 1.0


def test_probe_two_separated_gaussians(rng):
    n = 50
    a = rng.standard_normal((n, 6)) * 0.05 + np.array([1, 0, 0, 0, 0, 0.0])
    b = rng.standard_normal((n, 6)) * 0.05 + np.array([0, 1, 0, 0, 0, 0.0])
    train = np.vstack([a[:25], b[:25]])
    labels = ["a"] * 25 + ["b"] * 25
    test = np.vstack([a[25:], b[25:]])
    test_labels = ["a"] * 25 + ["b"] * 25
    assert nearest_centroid_probe(train, labels, test, test_labels) >= 0.99


def test_probe_memorizes_single_examples(rng):
    train = rng.standard_normal((4, 5))
    labels = ["w", "x", "y", "z"]
    assert nearest_centroid_probe(train, labels, train, labels) == 1.0


def test_probe_missing_class_rejected(rng):
    with pytest.raises(EvalError, match="zero train"):
        nearest_centroid_probe(rng.standard_normal((2, 3)), ["a", "a"],
                               rng.standard_normal((1, 3)), ["b"])


def test_gap_identical_sets(rng):
    m = _unit_matrix([f"i{k}" for k in range(5)], rng.standard_normal((5, 4)))
    assert modality_gap(m, m) == 0.0


def test_gap_antipodal_centroids():
    e1 = np.zeros((3, 4))
    e1[:, 0] = 1.0
    v = EmbeddingMatrix(["a", "b", "c"], e1, normalized=True)
    t = EmbeddingMatrix(["d", "e", "f"], -e1, normalized=True)
    assert modality_gap(v, t) == pytest.approx(2.0, abs=1e-12)


def test_gap_planted_offset():
    # Exact construction: rows = sqrt(1-r^2) * (+/- v) + r * g with paired
    # +/- v so the mean is exactly r * g; gap = 2r = 0.3.
    r = 0.15
    g = np.zeros(6)
    g[0] = 1.0
    v = np.zeros(6)
    v[1] = 1.0
    s = np.sqrt(1 - r * r)
    video = np.stack([s * v + r * g, -s * v + r * g])
    text = np.stack([s * v - r * g, -s * v - r * g])
    vm = EmbeddingMatrix(["v0", "v1"], video, normalized=True)
    tm = EmbeddingMatrix(["t0", "t1"], text, normalized=True)
    assert modality_gap(vm, tm) == pytest.approx(0.3, abs=1e-6)


def test_gap_symmetry_and_empty(rng):
    a = _unit_matrix(["x", "y"], rng.standard_normal((2, 3)))
    b = _unit_matrix(["u", "w"], rng.standard_normal((2, 3)))
    assert modality_gap(a, b) == modality_gap(b, a)
    with pytest.raises(Exception):
        modality_gap(np.empty((0, 3)), b)
