"""Independent brute-force oracles used to pin expected values.

Everything here is a direct transcription of the definitions, written
without importing the package's computation paths, so tests compare two
independently derived answers.
"""

import math

import numpy as np


def naive_contrastive_loss(anchors, positives, negatives, tau):
    """Direct transcription: batch mean of -log(e^{<a_i,p_i>/t} / sum_j ...)."""
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    n = np.asarray(negatives, dtype=np.float64)
    b = a.shape[0]
    total = 0.0
    for i in range(b):
        numerator = math.exp(float(np.dot(a[i], p[i])) / tau)
        denominator = 0.0
        for j in range(b):
            denominator += math.exp(float(np.dot(a[i], p[j])) / tau)
            denominator += math.exp(float(np.dot(a[i], n[j])) / tau)
        total += -math.log(numerator / denominator)
    return total / b


def double_loop_sims(queries, gallery):
    q = np.asarray(queries, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    out = np.zeros((q.shape[0], g.shape[0]))
    for i in range(q.shape[0]):
        for j in range(g.shape[0]):
            out[i, j] = sum(q[i, d] * g[j, d] for d in range(q.shape[1]))
    return out


def rank_candidates(scores, candidate_indices):
    """Descending score, ascending index on ties - by explicit sort."""
    return sorted(candidate_indices, key=lambda j: (-scores[j], j))


def oracle_recall_at_k(sims, queries, k):
    """queries: list of (candidate_indices, relevant_indices set)."""
    hits = 0
    for qi, (cands, relevant) in enumerate(queries):
        ranked = rank_candidates(sims[qi], cands)
        hits += any(j in relevant for j in ranked[:k])
    return hits / len(queries)


def oracle_average_precision(scores, cands, relevant):
    ranked = rank_candidates(scores, cands)
    found = 0
    total = 0.0
    for rank, j in enumerate(ranked, start=1):
        if j in relevant:
            found += 1
            total += found / rank
    return total / len(relevant)


def oracle_map(sims, queries):
    return float(
        np.mean([
            oracle_average_precision(sims[qi], cands, relevant)
            for qi, (cands, relevant) in enumerate(queries)
        ])
    )


def oracle_binary_accuracy(sims, queries):
    credit = 0.0
    for qi, (cands, relevant) in enumerate(queries):
        assert len(cands) == 2 and len(relevant) == 1
        (rel,) = tuple(relevant)
        other = cands[0] if cands[1] == rel else cands[1]
        if sims[qi][rel] > sims[qi][other]:
            credit += 1.0
        elif sims[qi][rel] == sims[qi][other]:
            credit += 0.5
    return credit / len(queries)


def oracle_mcq_accuracy(query_embs, choice_embs, answers):
    correct = 0
    for q, choices, answer in zip(query_embs, choice_embs, answers):
        q = np.asarray(q, dtype=np.float64)
        best_idx, best_sim = None, None
        for idx, c in enumerate(np.asarray(choices, dtype=np.float64)):
            sim = float(np.dot(q, c) / (np.linalg.norm(q) * np.linalg.norm(c)))
            if best_sim is None or sim > best_sim:
                best_idx, best_sim = idx, sim
        correct += best_idx == answer
    return correct / len(answers)
