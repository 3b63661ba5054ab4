"""Command-line pipeline: mine -> compose -> train -> eval -> report.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All randomness
flows through --seed flags, so identical flags and inputs give
byte-identical outputs. File writes are atomic (temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys

import numpy as np

from tara.adapter import (
    AdapterParams,
    TrainConfig,
    forward,
    grad_check,
    load_adapter,
    save_adapter,
    train,
)
from tara.composer import (
    build_positive_index,
    build_temporal_triplets,
    compose,
    read_dataset,
    read_triplet_pool,
    write_dataset,
)
from tara.corpus import load_corpus, load_lexicon
from tara.embeddings import EmbeddingMatrix, l2_normalize, sim_matrix
from tara.embfile import read_embeddings
from tara.evaluator import (
    EvalReport,
    binary_accuracy,
    build_splits,
    evaluate_retrieval,
    load_items,
    mcq_accuracy,
    modality_gap,
    nearest_centroid_probe,
    negation_eval,
    write_report,
)
from tara.ioutils import iter_jsonl, write_text_atomic
from tara.miner import (
    LlmClient,
    load_lemma_table,
    load_subject_pool,
    mine_chiral,
    mined_record,
    read_mined,
    rewrite_antonym_external,
    rewrite_antonym_template,
    write_mined,
)

log = logging.getLogger("tara.cli")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging(flag_level: str | None) -> None:
    level_name = flag_level or os.environ.get("TARA_LOG", "warn").lower()
    level = LOG_LEVELS.get(level_name, logging.WARNING)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    logging.getLogger("tara").setLevel(level)


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _load_matrix(path: str, manifest: str, adapter: AdapterParams | None) -> EmbeddingMatrix:
    m = read_embeddings(path, manifest)
    if adapter is not None:
        return forward(adapter, m)
    if not m.normalized:
        m = l2_normalize(m)
    return m


def cmd_mine(args) -> int:
    corpus = load_corpus(args.corpus)
    lexicon = load_lexicon(args.lexicon)
    lemma_table = load_lemma_table() if args.lemmas is None else json.load(open(args.lemmas))
    mined = mine_chiral(corpus, lexicon, lemma_table)
    client = None
    if args.rewriter == "external":
        client = LlmClient(
            endpoint=args.endpoint,
            timeout=args.timeout,
            retries=args.retries,
            backoff=args.backoff,
        )
    records = []
    antonyms = 0
    for mc in mined:
        if client is None:
            rw = rewrite_antonym_template(mc, lexicon, lemma_table)
        else:
            rw = rewrite_antonym_external(mc, client)
        if rw.antonym is not None:
            antonyms += 1
        records.append(mined_record(mc, rw))
    write_mined(records, args.out)
    print(
        f"mine: corpus={len(corpus)} matched={len(mined)} "
        f"antonyms={antonyms} no_antonym={len(mined) - antonyms} "
        f"unmatched={len(corpus) - len(mined)}"
    )
    return 0


def cmd_compose(args) -> int:
    static_pool = read_triplet_pool(args.static)
    if args.temporal:
        temporal_pool = read_triplet_pool(args.temporal)
    else:
        records = [r for r in read_mined(args.mined) if r.antonym is not None]
        pool_records = read_mined(args.mined)
        index = build_positive_index(pool_records)
        subjects = (
            load_subject_pool() if args.subjects is None
            else json.load(open(args.subjects))
        )
        temporal_pool = build_temporal_triplets(
            records, index, subjects, random.Random(args.seed), pool=pool_records
        )
    dataset = compose(static_pool, temporal_pool, args.n, args.alpha, args.seed)
    write_dataset(dataset, args.out)
    print(
        f"compose: n={len(dataset.triplets)} n_static={dataset.n_static} "
        f"n_temporal={dataset.n_temporal} alpha={dataset.alpha} seed={dataset.seed}"
    )
    return 0


def cmd_train(args) -> int:
    dataset = read_dataset(args.dataset)
    base = read_embeddings(args.base_emb, args.base_manifest)
    config = TrainConfig(
        tau=args.tau, lr=args.lr, batch=args.batch, epochs=args.epochs,
        seed=args.seed, optimizer=args.optimizer, dim_out=args.dim_out,
    )
    params, history = train(dataset, base, config)
    save_adapter(params, args.out, config=config, seed=args.seed)
    if args.history:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["kind", "epoch", "step", "loss", "seconds"])
        step = 0
        steps_per_epoch = -(-len(dataset.triplets) // config.batch)
        for epoch in range(config.epochs):
            for _ in range(steps_per_epoch):
                writer.writerow(
                    ["step", epoch, step, f"{history.step_losses[step]:.10g}", ""]
                )
                step += 1
            writer.writerow(
                ["epoch", epoch, "", f"{history.epoch_mean_losses[epoch]:.10g}",
                 f"{history.epoch_seconds[epoch]:.6f}"]
            )
        write_text_atomic(args.history, buf.getvalue())
    print(
        f"train: triplets={len(dataset.triplets)} epochs={config.epochs} "
        f"final_epoch_loss={history.epoch_mean_losses[-1]:.6f} -> {args.out}"
    )
    return 0


def _eval_retrieval(args, adapter_params) -> EvalReport:
    items = load_items(args.items)
    tasks = build_splits(items, args.direction)
    task = tasks[args.task]
    videos = _load_matrix(args.video_emb, args.video_manifest, adapter_params)
    texts = _load_matrix(args.text_emb, args.text_manifest, adapter_params)
    query_matrix = texts if args.direction == "t2v" else videos
    gallery_matrix = videos if args.direction == "t2v" else texts
    queries = query_matrix.take([q.query_id for q in task.queries])
    gallery = gallery_matrix.take(list(task.gallery))
    sims = sim_matrix(queries, gallery)
    if args.mode == "binary":
        report = EvalReport(
            metrics={"binary_acc": binary_accuracy(sims, task)},
            task={"mode": "binary", "direction": task.direction, "split": task.split,
                  "queries": len(task.queries), "gallery": len(task.gallery)},
            seed=args.seed,
        )
    else:
        report = evaluate_retrieval(sims, task, k_list=args.k, seed=args.seed)
        report.task["mode"] = "retrieval"
    return report


def _eval_negation(args, adapter_params) -> EvalReport:
    gallery = _load_matrix(args.gallery_emb, args.gallery_manifest, adapter_params)
    original = _load_matrix(args.query_emb, args.query_manifest, adapter_params)
    negated = _load_matrix(args.neg_query_emb, args.neg_query_manifest, adapter_params)
    relevance: dict[str, set[str]] = {}
    for _lineno, obj in iter_jsonl(args.relevance):
        relevance[obj["query_id"]] = set(obj["relevant"])
    r_at_k, r_neg_at_k = negation_eval(original, negated, gallery, relevance, k=args.k[0])
    return EvalReport(
        metrics={f"r_at_{args.k[0]}": r_at_k, f"r_neg_at_{args.k[0]}": r_neg_at_k},
        task={"mode": "negation", "queries": original.rows, "gallery": gallery.rows},
        seed=args.seed,
    )


def _eval_mcq(args, adapter_params) -> EvalReport:
    queries = _load_matrix(args.query_emb, args.query_manifest, adapter_params)
    choices = _load_matrix(args.choice_emb, args.choice_manifest, adapter_params)
    query_rows, choice_rows, answers = [], [], []
    for _lineno, obj in iter_jsonl(args.questions):
        query_rows.append(queries.row(obj["query_id"]))
        choice_rows.append(np.stack([choices.row(cid) for cid in obj["choice_ids"]]))
        answers.append(obj["answer"])
    acc = mcq_accuracy(np.stack(query_rows), choice_rows, answers)
    return EvalReport(
        metrics={"mcq_acc": acc},
        task={"mode": "mcq", "queries": len(answers)},
        seed=args.seed,
    )


def _eval_probe(args, adapter_params) -> EvalReport:
    train_m = _load_matrix(args.train_emb, args.train_manifest, adapter_params)
    test_m = _load_matrix(args.test_emb, args.test_manifest, adapter_params)

    def labels_for(path, matrix):
        table = {obj["id"]: obj["label"] for _ln, obj in iter_jsonl(path)}
        return [table[i] for i in matrix.ids]

    acc = nearest_centroid_probe(
        train_m.data, labels_for(args.train_labels, train_m),
        test_m.data, labels_for(args.test_labels, test_m),
    )
    return EvalReport(
        metrics={"probe_acc": acc},
        task={"mode": "probe", "train": train_m.rows, "test": test_m.rows},
        seed=args.seed,
    )


def cmd_eval(args) -> int:
    adapter_params = None
    if args.adapter:
        adapter_params, _meta = load_adapter(args.adapter)
    if args.mode in ("retrieval", "binary"):
        report = _eval_retrieval(args, adapter_params)
    elif args.mode == "negation":
        report = _eval_negation(args, adapter_params)
    elif args.mode == "mcq":
        report = _eval_mcq(args, adapter_params)
    else:
        report = _eval_probe(args, adapter_params)
    write_report(report, args.out, args.csv)
    summary = " ".join(f"{k}={v:.4f}" for k, v in sorted(report.metrics.items()))
    print(f"eval: {summary} -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    dim = args.dim
    weight = np.eye(dim) + 0.1 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
    bias = 0.01 * rng.standard_normal(dim)
    params = AdapterParams(weight=weight, bias=bias)
    batch = tuple(rng.standard_normal((args.batch, dim)) for _ in range(3))
    err = grad_check(params, batch, tau=args.tau, h=args.h)
    print(f"max_rel_err={err:.3e}")
    return 0 if err < 1e-3 else 1


def cmd_gap(args) -> int:
    videos = _load_matrix(args.video, args.video_manifest, None)
    texts = _load_matrix(args.text, args.text_manifest, None)
    print(f"{modality_gap(videos, texts):.6f}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.runs:
        if not os.path.isdir(run_dir):
            raise FileNotFoundError(f"run directory not found: {run_dir}")
        for name in sorted(os.listdir(run_dir)):
            if not name.endswith(".json"):
                continue
            path = os.path.join(run_dir, name)
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
            except (json.JSONDecodeError, UnicodeDecodeError):
                continue
            if not isinstance(doc, dict) or not isinstance(doc.get("metrics"), dict):
                continue
            task = doc.get("task", {})
            label = task.get("name") or "-".join(
                str(v) for k, v in sorted(task.items()) if v is not None
            )
            for metric, value in sorted(doc["metrics"].items()):
                rows.append(
                    {"run": os.path.basename(os.path.normpath(run_dir)),
                     "file": name, "task": label, "metric": metric, "value": value}
                )
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["run", "file", "task", "metric", "value"])
    writer.writeheader()
    writer.writerows(rows)
    write_text_atomic(args.out, buf.getvalue())
    print(f"report: {len(rows)} metric rows -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tara",
        description="Mine chiral triplets, train an embedding adapter, and "
        "evaluate time-aware retrieval.",
    )
    parser.add_argument("--log-level", choices=sorted(LOG_LEVELS), default=None,
                        help="overrides the TARA_LOG environment variable")
    parser.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                        help="cap on internal parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="extract chiral verb captions and antonyms")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lemmas", default=None, help="lemma table JSON (default: shipped)")
    p.add_argument("--rewriter", choices=("template", "external"), default="template")
    p.add_argument("--endpoint", default=None, help="rewriter URL for --rewriter external")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=_positive_int, default=3)
    p.add_argument("--backoff", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("compose", help="build a triplet training dataset")
    p.add_argument("--static", required=True, help="static triplet pool file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mined", help="mined captions file (temporal pool is built)")
    group.add_argument("--temporal", help="pre-built temporal triplet pool file")
    p.add_argument("--subjects", default=None, help="subject pool JSON (default: shipped)")
    p.add_argument("--n", type=_positive_int, default=10000)
    p.add_argument("--alpha", type=_fraction, default=0.1)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("train", help="train the projection adapter")
    p.add_argument("--dataset", required=True)
    p.add_argument("--base-emb", required=True)
    p.add_argument("--base-manifest", required=True)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=_positive_int, default=256)
    p.add_argument("--epochs", type=_positive_int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--dim-out", type=_positive_int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="per-step loss CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--mode", choices=("retrieval", "binary", "negation", "mcq", "probe"),
                   default="retrieval")
    p.add_argument("--items", help="labeled items file (retrieval/binary)")
    p.add_argument("--direction", choices=("t2v", "v2t"), default="t2v")
    p.add_argument("--task", choices=("chiral", "non_chiral", "all"), default="chiral")
    p.add_argument("--video-emb")
    p.add_argument("--video-manifest")
    p.add_argument("--text-emb")
    p.add_argument("--text-manifest")
    p.add_argument("--gallery-emb")
    p.add_argument("--gallery-manifest")
    p.add_argument("--query-emb")
    p.add_argument("--query-manifest")
    p.add_argument("--neg-query-emb")
    p.add_argument("--neg-query-manifest")
    p.add_argument("--choice-emb")
    p.add_argument("--choice-manifest")
    p.add_argument("--questions")
    p.add_argument("--relevance")
    p.add_argument("--train-emb")
    p.add_argument("--train-manifest")
    p.add_argument("--train-labels")
    p.add_argument("--test-emb")
    p.add_argument("--test-manifest")
    p.add_argument("--test-labels")
    p.add_argument("--adapter", default=None)
    p.add_argument("--k", type=_positive_int, nargs="+", default=[1, 5, 10, 50])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradient")
    p.add_argument("--dim", type=_positive_int, default=8)
    p.add_argument("--batch", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--h", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gap", help="modality gap between two embedding files")
    p.add_argument("--video", required=True)
    p.add_argument("--video-manifest", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--text-manifest", required=True)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("report", help="aggregate run directories into one CSV")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


_EVAL_REQUIRED = {
    "retrieval": ("items", "video_emb", "video_manifest", "text_emb", "text_manifest"),
    "binary": ("items", "video_emb", "video_manifest", "text_emb", "text_manifest"),
    "negation": ("gallery_emb", "gallery_manifest", "query_emb", "query_manifest",
                 "neg_query_emb", "neg_query_manifest", "relevance"),
    "mcq": ("query_emb", "query_manifest", "choice_emb", "choice_manifest", "questions"),
    "probe": ("train_emb", "train_manifest", "train_labels",
              "test_emb", "test_manifest", "test_labels"),
}


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "mine" and args.rewriter == "external" and not args.endpoint:
        parser.error("--rewriter external requires --endpoint")
    if args.command == "eval":
        missing = [
            "--" + name.replace("_", "-")
            for name in _EVAL_REQUIRED[args.mode]
            if getattr(args, name) is None
        ]
        if missing:
            parser.error(f"eval --mode {args.mode} requires {' '.join(missing)}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log_level)
    log.debug("parallelism cap: %d threads", args.threads)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
