"""Caption corpora and chiral verb lexicons: loading, validation, lookup.

A corpus is a line-delimited JSON file of ``{"id", "text", "source"}``
records. A lexicon is a line-delimited JSON file of
``{"pair_id", "side_a", "side_b"}`` records where each side lists the
surface forms of one verb of a temporally-opposite verb pair.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from tara.ioutils import dumps_record, iter_jsonl, write_jsonl_atomic

SOURCES = ("nli", "ego4d", "other")

# Anonymized-subject tokens used by egocentric caption corpora: "#C C" is the
# camera wearer, "#O" another person. Detection is exact substring, no fuzzing.
PLACEHOLDER_TOKENS = ("#C C", "#O")


class CorpusError(ValueError):
    """Raised for malformed corpus or lexicon files."""


def has_placeholder(text: str) -> bool:
    return any(tok in text for tok in PLACEHOLDER_TOKENS)


@dataclass(frozen=True)
class Caption:
    id: str
    text: str
    source: str
    has_placeholder: bool

    def to_record(self) -> dict:
        return {"id": self.id, "text": self.text, "source": self.source}


class CaptionCorpus:
    """Immutable, id-indexed caption collection preserving file order."""

    def __init__(self, captions: list[Caption]):
        seen: dict[str, Caption] = {}
        for cap in captions:
            if cap.id in seen:
                raise CorpusError(f"duplicate caption id {cap.id!r}")
            seen[cap.id] = cap
        self._captions = tuple(captions)
        self._by_id = seen

    def __len__(self) -> int:
        return len(self._captions)

    def __iter__(self):
        return iter(self._captions)

    def __getitem__(self, caption_id: str) -> Caption:
        return self._by_id[caption_id]

    def __contains__(self, caption_id: str) -> bool:
        return caption_id in self._by_id

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self._captions)


def _caption_from_record(obj: dict, where: str) -> Caption:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: expected an object, got {type(obj).__name__}")
    for field in ("id", "text", "source"):
        if field not in obj:
            raise CorpusError(f"{where}: missing field {field!r}")
    cid, text, source = obj["id"], obj["text"], obj["source"]
    if not isinstance(cid, str) or not cid:
        raise CorpusError(f"{where}: id must be a non-empty string")
    if not isinstance(text, str) or not text.strip():
        raise CorpusError(f"{where}: empty text for id {cid!r}")
    if source not in SOURCES:
        raise CorpusError(f"{where}: unknown source {source!r} (expected one of {SOURCES})")
    return Caption(id=cid, text=text, source=source, has_placeholder=has_placeholder(text))


def load_corpus(path: str) -> CaptionCorpus:
    """Load a caption corpus, enforcing id uniqueness and non-empty text."""
    captions = []
    for lineno, obj in iter_jsonl(path):
        captions.append(_caption_from_record(obj, f"{path}:{lineno}"))
    try:
        return CaptionCorpus(captions)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from exc


def save_corpus(corpus: CaptionCorpus, path: str) -> None:
    write_jsonl_atomic(path, (c.to_record() for c in corpus))


def corpus_to_lines(corpus: CaptionCorpus) -> list[str]:
    return [dumps_record(c.to_record()) for c in corpus]


_FORM_RE = re.compile(r"^[a-z][a-z' -]*[a-z]$|^[a-z]$")


def _normalize_form(form: str) -> str:
    return " ".join(form.lower().split())


@dataclass(frozen=True)
class ChiralPair:
    pair_id: int
    side_a: tuple[str, ...]
    side_b: tuple[str, ...]

    def side(self, which: str) -> tuple[str, ...]:
        if which == "a":
            return self.side_a
        if which == "b":
            return self.side_b
        raise ValueError(f"side must be 'a' or 'b', got {which!r}")


class ChiralLexicon:
    """Verb-pair lexicon with an injective surface-form -> (pair, side) map."""

    def __init__(self, pairs: list[ChiralPair]):
        lookup: dict[str, tuple[int, str]] = {}
        ids = set()
        for pair in pairs:
            if pair.pair_id in ids:
                raise CorpusError(f"duplicate pair_id {pair.pair_id}")
            ids.add(pair.pair_id)
            if not pair.side_a or not pair.side_b:
                raise CorpusError(f"pair {pair.pair_id}: both sides need at least one form")
            for side_name, forms in (("a", pair.side_a), ("b", pair.side_b)):
                for form in forms:
                    if form in lookup:
                        prev = lookup[form]
                        raise CorpusError(
                            f"form {form!r} appears in pair {prev[0]} side {prev[1]} "
                            f"and pair {pair.pair_id} side {side_name}"
                        )
                    lookup[form] = (pair.pair_id, side_name)
        self._pairs = tuple(pairs)
        self._by_id = {p.pair_id: p for p in pairs}
        self._lookup = lookup

    @property
    def pairs(self) -> tuple[ChiralPair, ...]:
        return self._pairs

    def __len__(self) -> int:
        return len(self._pairs)

    def pair(self, pair_id: int) -> ChiralPair:
        return self._by_id[pair_id]

    def lookup(self, form: str) -> tuple[int, str] | None:
        """Map a surface form to (pair_id, side), or None if unknown."""
        return self._lookup.get(form)

    def forms(self) -> tuple[str, ...]:
        return tuple(self._lookup)

    def opposite(self, pair_id: int, side: str) -> tuple[str, ...]:
        return self._by_id[pair_id].side("b" if side == "a" else "a")


def _pair_from_record(obj: dict, where: str) -> ChiralPair:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: expected an object")
    for field in ("pair_id", "side_a", "side_b"):
        if field not in obj:
            raise CorpusError(f"{where}: missing field {field!r}")
    pair_id = obj["pair_id"]
    if not isinstance(pair_id, int) or isinstance(pair_id, bool):
        raise CorpusError(f"{where}: pair_id must be an integer")
    sides = []
    for name in ("side_a", "side_b"):
        raw = obj[name]
        if not isinstance(raw, list) or not raw:
            raise CorpusError(f"{where}: pair {pair_id}: {name} must be a non-empty list")
        forms = []
        for form in raw:
            if not isinstance(form, str) or not form.strip():
                raise CorpusError(f"{where}: pair {pair_id}: blank form in {name}")
            forms.append(_normalize_form(form))
        sides.append(tuple(forms))
    return ChiralPair(pair_id=pair_id, side_a=sides[0], side_b=sides[1])


def load_lexicon(path: str) -> ChiralLexicon:
    """Load a chiral pair lexicon; forms are lowercased and space-normalized."""
    pairs = []
    for lineno, obj in iter_jsonl(path):
        pairs.append(_pair_from_record(obj, f"{path}:{lineno}"))
    try:
        return ChiralLexicon(pairs)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from exc


def default_lexicon() -> ChiralLexicon:
    """The lexicon shipped with the package (40+ curated chiral verb pairs)."""
    ref = resources.files("tara.data").joinpath("lexicon.jsonl")
    with resources.as_file(ref) as path:
        return load_lexicon(str(path))
