"""Retrieval evaluation: chiral/non-chiral/all splits, rank metrics, binary
and multiple-choice accuracy, nearest-centroid probing, and the modality gap.

All rankings sort by descending similarity with ties broken by ascending
gallery index, so every metric is deterministic and invariant under strictly
monotone rescaling of the scores.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from tara.embeddings import EmbeddingMatrix
from tara.ioutils import iter_jsonl, write_text_atomic
from tara.validation import check_matrix, check_unit_rows

log = logging.getLogger("tara.evaluator")

KINDS = ("video", "text")
SIDES = ("a", "b")
DIRECTIONS = ("t2v", "v2t")
SPLITS = ("chiral", "non_chiral", "all")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledItem:
    id: str
    kind: str
    class_label: str
    pair_id: int | None = None
    side: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EvalError(f"item {self.id!r}: kind must be one of {KINDS}")
        if (self.pair_id is None) != (self.side is None):
            raise EvalError(f"item {self.id!r}: pair_id and side must be set together")
        if self.side is not None and self.side not in SIDES:
            raise EvalError(f"item {self.id!r}: side must be 'a' or 'b'")


def load_items(path: str) -> list[LabeledItem]:
    items = []
    for lineno, obj in iter_jsonl(path):
        try:
            items.append(
                LabeledItem(
                    id=obj["id"],
                    kind=obj["kind"],
                    class_label=obj["class_label"],
                    pair_id=obj.get("pair_id"),
                    side=obj.get("side"),
                )
            )
        except KeyError as exc:
            raise EvalError(f"{path}:{lineno}: missing field {exc}") from exc
    return items


@dataclass(frozen=True)
class Query:
    query_id: str
    relevant: frozenset[str]
    # None means the full task gallery; otherwise the candidate subset for
    # this query, in gallery order.
    candidates: tuple[str, ...] | None = None


@dataclass(frozen=True)
class RetrievalTask:
    direction: str
    split: str
    queries: tuple[Query, ...]
    gallery: tuple[str, ...]

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise EvalError(f"direction must be one of {DIRECTIONS}")
        if self.split not in SPLITS:
            raise EvalError(f"split must be one of {SPLITS}")
        if not self.gallery:
            raise EvalError("gallery must be non-empty")
        in_gallery = set(self.gallery)
        for q in self.queries:
            if not q.relevant:
                raise EvalError(f"query {q.query_id!r} has no relevant candidates")
            if not q.relevant <= in_gallery:
                raise EvalError(f"query {q.query_id!r} has relevant ids outside the gallery")
            if q.candidates is not None:
                if not set(q.candidates) <= in_gallery:
                    raise EvalError(f"query {q.query_id!r} has candidates outside the gallery")
                if not q.relevant <= set(q.candidates):
                    raise EvalError(
                        f"query {q.query_id!r} has relevant ids outside its candidate set"
                    )

    def candidate_ids(self, q: Query) -> tuple[str, ...]:
        return self.gallery if q.candidates is None else q.candidates


def _check_consistent_classes(items: list[LabeledItem]) -> None:
    by_class: dict[str, tuple[int | None, str | None]] = {}
    for item in items:
        key = (item.pair_id, item.side)
        prev = by_class.setdefault(item.class_label, key)
        if prev != key:
            raise EvalError(
                f"class {item.class_label!r} has inconsistent pair/side labels"
            )


def build_splits(items: list[LabeledItem], direction: str) -> dict[str, RetrievalTask]:
    """Build the chiral / non_chiral / all retrieval tasks.

    Queries are text items for t2v and video items for v2t; candidates are
    the other kind. Chiral galleries hold the query's class plus the
    opposite side of its pair; non-chiral galleries exclude the opposite
    side; the all split uses the full candidate set. Relevance is by equal
    class label. Queries whose pair has no opposite-side candidates are
    dropped from the chiral task with a diagnostic.
    """
    if direction not in DIRECTIONS:
        raise EvalError(f"direction must be one of {DIRECTIONS}")
    _check_consistent_classes(items)
    query_kind = "text" if direction == "t2v" else "video"
    cand_kind = "video" if direction == "t2v" else "text"
    queries = [it for it in items if it.kind == query_kind]
    candidates = [it for it in items if it.kind == cand_kind]
    if not queries or not candidates:
        raise EvalError(f"need both {query_kind} and {cand_kind} items")
    if not any(it.pair_id is not None for it in items):
        raise EvalError("items contain no chiral pairs")
    gallery = tuple(it.id for it in candidates)

    def same_class(q):
        return [c.id for c in candidates if c.class_label == q.class_label]

    def opposite_side(q):
        if q.pair_id is None:
            return []
        return [
            c.id for c in candidates
            if c.pair_id == q.pair_id and c.side is not None and c.side != q.side
        ]

    tasks: dict[str, RetrievalTask] = {}
    for split in SPLITS:
        built = []
        for q in queries:
            relevant = frozenset(same_class(q))
            if not relevant:
                log.warning("query %r has no relevant candidates; dropped", q.id)
                continue
            if split == "all":
                built.append(Query(q.id, relevant, None))
                continue
            opposite = opposite_side(q)
            if split == "chiral":
                if q.pair_id is None or not opposite:
                    log.warning(
                        "chiral split: query %r (class %r) has no opposite-side "
                        "candidates; dropped", q.id, q.class_label,
                    )
                    continue
                keep = set(relevant) | set(opposite)
                built.append(Query(q.id, relevant, tuple(c for c in gallery if c in keep)))
            else:
                drop = set(opposite)
                built.append(
                    Query(q.id, relevant, tuple(c for c in gallery if c not in drop))
                )
        tasks[split] = RetrievalTask(
            direction=direction, split=split, queries=tuple(built), gallery=gallery
        )
    return tasks


def _check_sims(sims, task: RetrievalTask) -> np.ndarray:
    sims = check_matrix(sims, "sims")
    if sims.shape != (len(task.queries), len(task.gallery)):
        raise EvalError(
            f"sims shape {sims.shape} does not match "
            f"{len(task.queries)} queries x {len(task.gallery)} candidates"
        )
    return sims


def _ranked_candidates(sims_row: np.ndarray, cand_rows: list[int]) -> list[int]:
    # Descending score; ascending gallery index on ties.
    return sorted(cand_rows, key=lambda j: (-sims_row[j], j))


def _gallery_rows(task: RetrievalTask, q: Query) -> list[int]:
    pos = {g: j for j, g in enumerate(task.gallery)}
    return [pos[c] for c in task.candidate_ids(q)]


def recall_at_k(sims, task: RetrievalTask, k: int) -> float:
    """Fraction of queries with a relevant candidate in the top k."""
    sims = _check_sims(sims, task)
    if k < 1 or k > len(task.gallery):
        raise EvalError(f"k must be in [1, {len(task.gallery)}], got {k}")
    pos = {g: j for j, g in enumerate(task.gallery)}
    hits = 0
    for qi, q in enumerate(task.queries):
        cand_rows = [pos[c] for c in task.candidate_ids(q)]
        ranked = _ranked_candidates(sims[qi], cand_rows)
        top = ranked[:k]
        rel_rows = {pos[r] for r in q.relevant}
        hits += bool(rel_rows.intersection(top))
    return hits / len(task.queries) if task.queries else 0.0


def average_precision(sims_row: np.ndarray, task: RetrievalTask, q: Query) -> float:
    pos = {g: j for j, g in enumerate(task.gallery)}
    cand_rows = [pos[c] for c in task.candidate_ids(q)]
    ranked = _ranked_candidates(sims_row, cand_rows)
    rel_rows = {pos[r] for r in q.relevant}
    found = 0
    total = 0.0
    for rank, row in enumerate(ranked, start=1):
        if row in rel_rows:
            found += 1
            total += found / rank
    return total / len(rel_rows)


def mean_average_precision(sims, task: RetrievalTask) -> float:
    """Mean over queries of precision averaged at each relevant rank."""
    sims = _check_sims(sims, task)
    if not task.queries:
        return 0.0
    return float(
        np.mean([average_precision(sims[qi], task, q) for qi, q in enumerate(task.queries)])
    )


def binary_accuracy(sims, task: RetrievalTask) -> float:
    """Two-candidate forced choice; exact ties earn half credit."""
    sims = _check_sims(sims, task)
    pos = {g: j for j, g in enumerate(task.gallery)}
    credit = 0.0
    for qi, q in enumerate(task.queries):
        cands = task.candidate_ids(q)
        if len(cands) != 2:
            raise EvalError(
                f"binary accuracy needs exactly 2 candidates per query, "
                f"query {q.query_id!r} has {len(cands)}"
            )
        if len(q.relevant) != 1:
            raise EvalError(
                f"binary accuracy needs exactly 1 relevant candidate, "
                f"query {q.query_id!r} has {len(q.relevant)}"
            )
        (rel,) = q.relevant
        other = cands[0] if cands[1] == rel else cands[1]
        s_rel, s_other = sims[qi][pos[rel]], sims[qi][pos[other]]
        if s_rel > s_other:
            credit += 1.0
        elif s_rel == s_other:
            credit += 0.5
    return credit / len(task.queries) if task.queries else 0.0


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = np.linalg.norm(a)
    bn = np.linalg.norm(b, axis=1)
    if an == 0 or np.any(bn == 0):
        raise EvalError("zero-norm vector in cosine similarity")
    return (b @ a) / (bn * an)


def mcq_accuracy(query_embs, choice_embs, answers) -> float:
    """Fraction of queries whose highest-similarity choice is the answer.

    Ties resolve to the lowest choice index, so a tie counts as correct
    only when the answer is the first of the tied choices.
    """
    queries = check_matrix(query_embs, "query_embs")
    if len(choice_embs) != queries.shape[0] or len(answers) != queries.shape[0]:
        raise EvalError("query_embs, choice_embs and answers must align")
    correct = 0
    for qi in range(queries.shape[0]):
        choices = check_matrix(choice_embs[qi], "choices", dim=queries.shape[1])
        if choices.shape[0] < 2:
            raise EvalError(f"query {qi} needs at least 2 choices")
        answer = answers[qi]
        if not 0 <= answer < choices.shape[0]:
            raise EvalError(f"query {qi}: answer index {answer} out of range")
        sims = _cosine(queries[qi], choices)
        correct += int(np.argmax(sims)) == answer
    return correct / queries.shape[0]


def negation_eval(
    original_queries: EmbeddingMatrix,
    negated_queries: EmbeddingMatrix,
    gallery: EmbeddingMatrix,
    relevance: dict[str, set[str]],
    k: int = 5,
) -> tuple[float, float]:
    """Recall@k for paired original and negated queries over one gallery."""
    if set(original_queries.ids) != set(negated_queries.ids):
        missing = set(original_queries.ids) ^ set(negated_queries.ids)
        raise EvalError(f"unpaired queries: {sorted(missing)[:5]}")
    for qid in original_queries.ids:
        if qid not in relevance or not relevance[qid]:
            raise EvalError(f"query {qid!r} has no relevance entry")

    queries = tuple(original_queries.ids)
    task = RetrievalTask(
        direction="t2v",
        split="all",
        queries=tuple(Query(qid, frozenset(relevance[qid]), None) for qid in queries),
        gallery=tuple(gallery.ids),
    )
    from tara.embeddings import sim_matrix  # local import avoids cycle at module load

    sims = sim_matrix(original_queries.take(queries), gallery)
    sims_neg = sim_matrix(negated_queries.take(queries), gallery)
    return recall_at_k(sims, task, k), recall_at_k(sims_neg, task, k)


def nearest_centroid_probe(train_embs, train_labels, test_embs, test_labels) -> float:
    """Classify test rows by cosine to normalized per-class train centroids."""
    train = check_matrix(train_embs, "train_embs")
    test = check_matrix(test_embs, "test_embs", dim=train.shape[1])
    train_labels = list(train_labels)
    test_labels = list(test_labels)
    if len(train_labels) != train.shape[0] or len(test_labels) != test.shape[0]:
        raise EvalError("labels must align with embedding rows")
    classes = sorted(set(train_labels))
    missing = sorted(set(test_labels) - set(classes))
    if missing:
        raise EvalError(f"test labels with zero train examples: {missing[:5]}")
    centroids = []
    for cls in classes:
        rows = train[[i for i, lab in enumerate(train_labels) if lab == cls]]
        centroid = rows.mean(axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0:
            raise EvalError(f"class {cls!r} has a zero-norm centroid")
        centroids.append(centroid / norm)
    centroids = np.stack(centroids)
    test_norms = np.linalg.norm(test, axis=1, keepdims=True)
    if np.any(test_norms == 0):
        raise EvalError("zero-norm test embedding")
    sims = (test / test_norms) @ centroids.T
    predicted = [classes[int(np.argmax(row))] for row in sims]
    return float(np.mean([p == t for p, t in zip(predicted, test_labels)]))


def modality_gap(video_embs, text_embs) -> float:
    """Euclidean distance between the video and text embedding centroids.

    Means are taken before any re-normalization; for unit-vector inputs the
    result lies in [0, 2].
    """
    v = video_embs.data if isinstance(video_embs, EmbeddingMatrix) else video_embs
    t = text_embs.data if isinstance(text_embs, EmbeddingMatrix) else text_embs
    v = check_matrix(v, "video_embs")
    t = check_matrix(t, "text_embs", dim=v.shape[1])
    if v.shape[0] == 0 or t.shape[0] == 0:
        raise EvalError("modality_gap requires non-empty inputs")
    check_unit_rows(v, "video_embs")
    check_unit_rows(t, "text_embs")
    return float(np.linalg.norm(v.mean(axis=0) - t.mean(axis=0)))


@dataclass
class EvalReport:
    metrics: dict[str, float]
    task: dict
    per_query: dict[str, dict] = field(default_factory=dict)
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "metrics": self.metrics,
                "per_query": self.per_query,
                "seed": self.seed,
            },
            indent=2,
            sort_keys=True,
        )

    def csv_rows(self) -> list[dict]:
        label = self.task.get("name") or "-".join(
            str(v) for v in self.task.values() if v is not None
        )
        return [
            {"task": label, "metric": name, "value": value}
            for name, value in sorted(self.metrics.items())
        ]


def write_report(report: EvalReport, json_path: str, csv_path: str | None = None) -> None:
    write_text_atomic(json_path, report.to_json() + "\n")
    if csv_path:
        import io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["task", "metric", "value"])
        writer.writeheader()
        writer.writerows(report.csv_rows())
        write_text_atomic(csv_path, buf.getvalue())


def evaluate_retrieval(
    sims, task: RetrievalTask, k_list=(1, 5, 10, 50), seed: int | None = None
) -> EvalReport:
    """Bundle recall@k and mAP (plus per-query APs) into one report."""
    sims = _check_sims(sims, task)
    metrics: dict[str, float] = {}
    for k in k_list:
        if 1 <= k <= len(task.gallery):
            metrics[f"r_at_{k}"] = recall_at_k(sims, task, k)
    metrics["map"] = mean_average_precision(sims, task)
    per_query = {
        q.query_id: {"ap": average_precision(sims[qi], task, q)}
        for qi, q in enumerate(task.queries)
    }
    return EvalReport(
        metrics=metrics,
        task={"direction": task.direction, "split": task.split,
              "queries": len(task.queries), "gallery": len(task.gallery)},
        per_query=per_query,
        seed=seed,
    )
