"""Training-set construction: positives by shared verb-object, negatives by
temporal antonym, mixed with static triplets at a configurable fraction."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from tara.ioutils import dumps_record, iter_jsonl, write_text_atomic
from tara.miner import MinedCaption, MinedRecord, replace_subjects

log = logging.getLogger("tara.composer")

KINDS = ("static", "temporal")


class ComposerError(ValueError):
    pass


@dataclass(frozen=True)
class Triplet:
    anchor: str
    positive: str
    negative: str
    kind: str
    pair_id: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ComposerError(f"unknown triplet kind {self.kind!r}")
        texts = (self.anchor, self.positive, self.negative)
        if any(not t or not t.strip() for t in texts):
            raise ComposerError("triplet sentences must be non-empty")
        if len(set(texts)) != 3:
            raise ComposerError(f"triplet sentences must be pairwise distinct: {texts!r}")
        if (self.kind == "temporal") != (self.pair_id is not None):
            raise ComposerError("pair_id must be present exactly for temporal triplets")

    def to_record(self) -> dict:
        return {
            "anchor": self.anchor,
            "positive": self.positive,
            "negative": self.negative,
            "kind": self.kind,
            "pair_id": self.pair_id,
        }


@dataclass(frozen=True)
class TripletDataset:
    triplets: tuple[Triplet, ...]
    n_static: int
    n_temporal: int
    alpha: float
    seed: int

    def __post_init__(self):
        if self.n_static + self.n_temporal != len(self.triplets):
            raise ComposerError(
                f"counts {self.n_static}+{self.n_temporal} do not sum to "
                f"{len(self.triplets)} triplets"
            )
        expected = round(self.alpha * len(self.triplets))
        if self.n_temporal != expected:
            raise ComposerError(
                f"n_temporal={self.n_temporal} but alpha={self.alpha} over "
                f"{len(self.triplets)} triplets implies {expected}"
            )

    def header(self) -> dict:
        return {
            "n_static": self.n_static,
            "n_temporal": self.n_temporal,
            "alpha": self.alpha,
            "seed": self.seed,
        }

    def sentences(self) -> list[str]:
        """Unique sentences across all triplets, in first-appearance order."""
        seen: dict[str, None] = {}
        for t in self.triplets:
            for s in (t.anchor, t.positive, t.negative):
                seen.setdefault(s)
        return list(seen)


def build_positive_index(
    records: list[MinedRecord] | list[MinedCaption],
) -> dict[tuple[int, str, str], list[str]]:
    """Index mined captions by (pair_id, side, object), preserving order."""
    index: dict[tuple[int, str, str], list[str]] = {}
    for rec in records:
        index.setdefault(rec.key, []).append(rec.id)
    return index


def find_positives(
    target: MinedRecord | MinedCaption,
    index: dict[tuple[int, str, str], list[str]],
) -> list[str]:
    """All other caption ids sharing the target's (pair, side, object)."""
    return [cid for cid in index.get(target.key, []) if cid != target.id]


def _sample_without_replacement(items: list, k: int, rng: random.Random) -> list:
    # Partial Fisher-Yates on an index array; stable across platforms because
    # only rng.randrange is consumed.
    idx = list(range(len(items)))
    for i in range(k):
        j = rng.randrange(i, len(idx))
        idx[i], idx[j] = idx[j], idx[i]
    return [items[idx[i]] for i in range(k)]


def _shuffle(items: list, rng: random.Random) -> list:
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.randrange(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def build_temporal_triplets(
    records: list[MinedRecord],
    index: dict[tuple[int, str, str], list[str]],
    subject_pool: list[str],
    rng: random.Random,
    pool: list[MinedRecord] | None = None,
) -> list[Triplet]:
    """One triplet per mined anchor that has an antonym and >=1 positive.

    The positive is sampled uniformly from the anchor's verb-object bucket;
    the negative is the anchor's antonym caption. Anonymized subjects are
    replaced jointly so all three sentences share one subject. Anchors
    without positives are skipped (counted in a log diagnostic).

    ``pool`` resolves positive ids to texts when the index was built over a
    larger mined pool than the anchors; it defaults to the anchors.
    """
    by_id = {rec.id: rec for rec in (pool if pool is not None else records)}
    triplets = []
    skipped = 0
    for rec in records:
        if rec.antonym is None:
            raise ComposerError(f"mined record {rec.id!r} has no antonym")
        positives = find_positives(rec, index)
        if not positives:
            skipped += 1
            continue
        pos_id = positives[rng.randrange(len(positives))]
        if pos_id not in by_id:
            raise ComposerError(f"positive id {pos_id!r} not found in the mined pool")
        pos_text = by_id[pos_id].text
        anchor, positive, negative = replace_subjects(
            (rec.text, pos_text, rec.antonym), subject_pool, rng
        )
        try:
            triplets.append(
                Triplet(
                    anchor=anchor,
                    positive=positive,
                    negative=negative,
                    kind="temporal",
                    pair_id=rec.pair_id,
                )
            )
        except ComposerError as exc:
            # Degenerate rewrites (e.g. positive identical to anchor) are
            # dropped rather than poisoning the pool.
            log.debug("dropping degenerate triplet for %r: %s", rec.id, exc)
            skipped += 1
    if skipped:
        log.info("build_temporal_triplets: skipped %d anchors without usable positives", skipped)
    return triplets


def compose(
    static_pool: list[Triplet],
    temporal_pool: list[Triplet],
    n: int,
    alpha: float,
    seed: int,
) -> TripletDataset:
    """Sample a dataset of n triplets with a temporal fraction of alpha.

    round(alpha * n) uses round-half-to-even. Sampling is uniform without
    replacement from each pool and the union is shuffled, all driven by the
    seed, so equal inputs give byte-identical serialized datasets.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ComposerError(f"alpha must be in [0, 1], got {alpha}")
    if n < 0:
        raise ComposerError(f"n must be non-negative, got {n}")
    n_temporal = round(alpha * n)
    n_static = n - n_temporal
    if len(static_pool) < n_static:
        raise ComposerError(
            f"static pool too small: need {n_static}, have {len(static_pool)}"
        )
    if len(temporal_pool) < n_temporal:
        raise ComposerError(
            f"temporal pool too small: need {n_temporal}, have {len(temporal_pool)}"
        )
    rng = random.Random(seed)
    chosen_static = _sample_without_replacement(static_pool, n_static, rng)
    chosen_temporal = _sample_without_replacement(temporal_pool, n_temporal, rng)
    combined = _shuffle(chosen_static + chosen_temporal, rng)
    return TripletDataset(
        triplets=tuple(combined),
        n_static=n_static,
        n_temporal=n_temporal,
        alpha=alpha,
        seed=seed,
    )


def write_dataset(dataset: TripletDataset, path: str) -> None:
    """Header line first, then one triplet per line."""
    lines = [dumps_record(dataset.header())]
    lines.extend(dumps_record(t.to_record()) for t in dataset.triplets)
    write_text_atomic(path, "".join(line + "\n" for line in lines))


def _triplet_from_record(obj: dict, where: str) -> Triplet:
    try:
        return Triplet(
            anchor=obj["anchor"],
            positive=obj["positive"],
            negative=obj["negative"],
            kind=obj["kind"],
            pair_id=obj.get("pair_id"),
        )
    except KeyError as exc:
        raise ComposerError(f"{where}: missing field {exc}") from exc


def read_dataset(path: str) -> TripletDataset:
    header = None
    triplets = []
    for lineno, obj in iter_jsonl(path):
        if header is None:
            if "n_static" not in obj:
                raise ComposerError(f"{path}:1: missing dataset header line")
            header = obj
            continue
        triplets.append(_triplet_from_record(obj, f"{path}:{lineno}"))
    if header is None:
        raise ComposerError(f"{path}: empty dataset file")
    return TripletDataset(
        triplets=tuple(triplets),
        n_static=header["n_static"],
        n_temporal=header["n_temporal"],
        alpha=header["alpha"],
        seed=header["seed"],
    )


def read_triplet_pool(path: str) -> list[Triplet]:
    """Read triplets from any file in the dataset line format.

    A leading dataset header line, if present, is skipped, so both bare
    pools and full dataset files are accepted.
    """
    triplets = []
    for lineno, obj in iter_jsonl(path):
        if "n_static" in obj and "anchor" not in obj:
            continue
        triplets.append(_triplet_from_record(obj, f"{path}:{lineno}"))
    return triplets
