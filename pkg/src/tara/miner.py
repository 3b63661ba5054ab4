"""Chiral verb mining and temporal-antonym rewriting.

Three stages: find lexicon verb phrases in captions (with the object they
act on), rewrite the verb phrase to its temporal opposite (either with a
deterministic template or through an external LLM endpoint), and replace
anonymized subjects with a realistic one shared across a triple.
"""

from __future__ import annotations

import json
import logging
import random
import re
import time
from dataclasses import dataclass
from importlib import resources

import requests

from tara.corpus import Caption, CaptionCorpus, ChiralLexicon, PLACEHOLDER_TOKENS
from tara.ioutils import iter_jsonl, write_jsonl_atomic

log = logging.getLogger("tara.miner")


class MinerError(ValueError):
    pass


class LlmClientError(RuntimeError):
    pass


# Tokens skipped when looking for the object of a verb phrase: determiners,
# pronouns, particles, prepositions and other function words. Adverbs are
# skipped by the trailing "-ly" rule in _object_after.
STOPWORDS = frozenset(
    """
    the a an his her its their my your our this that these those some any
    each every all both another other one two three few several many much
    more most of up down off on in out to from with at by for and or but
    back again then there here into onto over under near it them him us me
    you she he they we i something someone anything everything nothing
    is are was were be been being has have had do does did not no
    """.split()
)

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z'-]*")


def load_lemma_table() -> dict[str, str]:
    """The shipped surface-form -> lemma table for verbs and common nouns."""
    ref = resources.files("tara.data").joinpath("lemmas.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def load_subject_pool() -> list[str]:
    ref = resources.files("tara.data").joinpath("subjects.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def lemma_of(token: str, table: dict[str, str]) -> str:
    """Table lookup with regular-inflection fallback for unlisted tokens."""
    tok = token.lower()
    if tok in table:
        return table[tok]
    if tok.endswith("ies") and len(tok) > 4:
        return tok[:-3] + "y"
    if tok.endswith(("ches", "shes", "sses", "xes", "zes")) and len(tok) > 4:
        return tok[:-2]
    if tok.endswith("s") and not tok.endswith(("ss", "us", "is")) and len(tok) > 3:
        return tok[:-1]
    return tok


def inflection_tag(form: str, table: dict[str, str]) -> str:
    """Classify a verb form as base / 3rd-person-singular / gerund."""
    head = form.split()[0]
    lemma = lemma_of(head, table)
    if head == lemma:
        return "base"
    if head.endswith("ing"):
        return "ger"
    if head.endswith("s"):
        return "3sg"
    return "other"


@dataclass(frozen=True)
class VerbObject:
    verb_form: str
    pair_id: int
    side: str
    object: str
    # One (start, end) character range per fixed segment of the matched form;
    # gapped forms like "puts * down" have two segments.
    span: tuple[tuple[int, int], ...]

    @property
    def start(self) -> int:
        return self.span[0][0]

    @property
    def end(self) -> int:
        return self.span[-1][1]


@dataclass(frozen=True)
class MinedCaption:
    caption: Caption
    vo: VerbObject

    @property
    def id(self) -> str:
        return self.caption.id

    @property
    def key(self) -> tuple[int, str, str]:
        return (self.vo.pair_id, self.vo.side, self.vo.object)


@dataclass(frozen=True)
class RewriteResult:
    original: str
    antonym: str | None
    rewriter: str  # "template" or "external"


def has_gap(form: str) -> bool:
    return " * " in form


def is_template_only(form: str) -> bool:
    """Forms with a leading/trailing object slot are rewrite templates only."""
    return form.startswith("* ") or form.endswith(" *")


def _form_pattern(form: str) -> re.Pattern:
    def seg_pattern(seg: str) -> str:
        tokens = [re.escape(t) for t in seg.split()]
        return r"(?<![a-z0-9])" + r"\s+".join(tokens) + r"(?![a-z0-9])"

    if has_gap(form):
        left, right = form.split(" * ", 1)
        # Lazy gap of at least one token, not crossing clause punctuation.
        return re.compile(
            seg_pattern(left) + r"\s+(?P<gap>[^.!?;,]+?)\s+" + seg_pattern(right)
        )
    return re.compile(seg_pattern(form))


_PATTERN_CACHE: dict[str, re.Pattern] = {}


def _pattern(form: str) -> re.Pattern:
    pat = _PATTERN_CACHE.get(form)
    if pat is None:
        pat = _PATTERN_CACHE[form] = _form_pattern(form)
    return pat


@dataclass(frozen=True)
class _Match:
    form: str
    pair_id: int
    side: str
    span: tuple[tuple[int, int], ...]
    gap: tuple[int, int] | None  # char range of the object slot, if gapped

    @property
    def fixed_len(self) -> int:
        return sum(end - start for start, end in self.span)

    @property
    def gap_len(self) -> int:
        return 0 if self.gap is None else self.gap[1] - self.gap[0]

    def sort_key(self):
        # Longest fixed text wins; ties broken by earliest offset, then the
        # tightest object slot, then the form string. Independent of the
        # order pairs appear in the lexicon.
        return (-self.fixed_len, self.span[0][0], self.gap_len, self.form)


def _find_matches(text_lower: str, lexicon: ChiralLexicon) -> list[_Match]:
    matches = []
    for form in lexicon.forms():
        if is_template_only(form):
            continue
        pair_id, side = lexicon.lookup(form)
        for m in _pattern(form).finditer(text_lower):
            if has_gap(form):
                gap = m.span("gap")
                # Segment spans exclude the whitespace around the object slot.
                left_end = m.start() + len(text_lower[m.start():gap[0]].rstrip())
                right_chunk = text_lower[gap[1]:m.end()]
                right_start = gap[1] + (len(right_chunk) - len(right_chunk.lstrip()))
                span = ((m.start(), left_end), (right_start, m.end()))
                matches.append(_Match(form, pair_id, side, span, gap))
            else:
                matches.append(_Match(form, pair_id, side, ((m.start(), m.end()),), None))
    return matches


def _object_after(text: str, start: int, end: int | None, table: dict[str, str]) -> str:
    """Head of the first noun run in text[start:end], lemmatized.

    Skips stopwords and -ly adverbs, then collects consecutive content
    tokens and returns the last one (the head of compounds like "tool box").
    """
    window = text[start:end] if end is not None else text[start:]
    run: list[str] = []
    for tok_match in _WORD_RE.finditer(window):
        tok = tok_match.group().lower()
        if tok in STOPWORDS or (tok.endswith("ly") and len(tok) > 3):
            if run:
                break
            continue
        run.append(tok)
    if not run:
        return ""
    return lemma_of(run[-1], table)


def extract_verb_object(
    text: str, lexicon: ChiralLexicon, lemma_table: dict[str, str] | None = None
) -> VerbObject | None:
    """Find the longest-matching chiral verb phrase and its object.

    Total function: returns None when no lexicon form matches. Matching is
    case-insensitive; spans index the original text.
    """
    if lemma_table is None:
        lemma_table = load_lemma_table()
    matches = _find_matches(text.lower(), lexicon)
    if not matches:
        return None
    best = min(matches, key=_Match.sort_key)
    if best.gap is not None:
        obj = _object_after(text, best.gap[0], best.gap[1], lemma_table)
    else:
        obj = _object_after(text, best.span[-1][1], None, lemma_table)
    return VerbObject(
        verb_form=best.form,
        pair_id=best.pair_id,
        side=best.side,
        object=obj,
        span=best.span,
    )


def mine_chiral(
    corpus: CaptionCorpus,
    lexicon: ChiralLexicon,
    lemma_table: dict[str, str] | None = None,
) -> list[MinedCaption]:
    """One MinedCaption per caption with a lexicon match, in corpus order."""
    if lemma_table is None:
        lemma_table = load_lemma_table()
    mined = []
    for caption in corpus:
        vo = extract_verb_object(caption.text, lexicon, lemma_table)
        if vo is not None:
            mined.append(MinedCaption(caption=caption, vo=vo))
    return mined


def _fill_template(form: str, gap_text: str) -> str:
    if " * " in form:
        left, right = form.split(" * ", 1)
        return f"{left} {gap_text} {right}"
    if form.endswith(" *"):
        return f"{form[:-2]} {gap_text}"
    if form.startswith("* "):
        return f"{gap_text} {form[2:]}"
    return form


def rewrite_antonym_template(
    mined: MinedCaption,
    lexicon: ChiralLexicon,
    lemma_table: dict[str, str] | None = None,
) -> RewriteResult:
    """Swap the matched verb phrase for the opposite side's canonical form.

    The replacement is the first-listed opposite form whose inflection
    matches the mined form and whose shape (plain vs object-slot template)
    matches; everything outside the replaced span is preserved verbatim.
    """
    if lemma_table is None:
        lemma_table = load_lemma_table()
    text = mined.caption.text
    vo = mined.vo
    if lexicon.lookup(vo.verb_form) != (vo.pair_id, vo.side):
        raise MinerError(
            f"verb form {vo.verb_form!r} is not on side {vo.side!r} of pair {vo.pair_id}"
        )
    tag = inflection_tag(vo.verb_form, lemma_table)
    gapped = has_gap(vo.verb_form)
    replacement = None
    for cand in lexicon.opposite(vo.pair_id, vo.side):
        if ("*" in cand) != gapped:
            continue
        if inflection_tag(cand, lemma_table) != tag:
            continue
        replacement = cand
        break
    if replacement is None:
        log.debug(
            "no inflection-compatible antonym form for %r (pair %d, tag %s)",
            vo.verb_form, vo.pair_id, tag,
        )
        return RewriteResult(original=text, antonym=None, rewriter="template")

    start, end = vo.start, vo.end
    if gapped:
        gap_text = text[vo.span[0][1]:vo.span[1][0]].strip()
        new_phrase = _fill_template(replacement, gap_text)
    else:
        new_phrase = replacement
    if text[start].isupper():
        new_phrase = new_phrase[0].upper() + new_phrase[1:]
    antonym = text[:start] + new_phrase + text[end:]
    return RewriteResult(original=text, antonym=antonym, rewriter="template")


# Instruction sent to the external rewriter endpoint, verbatim. The in-context
# examples pin both the output format and the None convention for verbs
# without a temporal opposite.
ANTONYM_PROMPT = """\
You are a helpful assistant expert at natural language understanding and grammatical nuance.

You are given a caption.

Your task is to generate a temporally antonymous version of the caption.
You should retain the broader context of the caption but only change the action described in the caption as if the video is temporally reversed.

In case where the verb phrase in the caption may not have a temporal antonym, you should return the None as the output. Never return the same caption as the output.

Here are some examples:

(1) Caption: #C C unrolls the yarn from her left index finger
    Output: #C C rolls the yarn onto her left index finger

(2) Caption: #C C folds the cloth
    Output: #C C unfolds the cloth

(3) Caption: #C C puts the pan on the stove
    Output: #C C takes the pan off the stove

(4) Caption: Someone is walking on the street
    Output: None

(5) Caption: #C C checks the cloth
    Output: None

Output in a JSON format {'caption_forward': ..., 'caption_reverse': ...} where caption_forward is the original caption and caption_reverse is the temporally reversed caption.
"""


class LlmClient:
    """HTTP client for the external antonym rewriter.

    Wire contract: POST {"prompt": str, "caption": str} to the endpoint;
    the reply is {"caption_forward": str, "caption_reverse": str|null}.
    Transport failures are retried with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()

    def rewrite(self, caption: str, prompt: str = ANTONYM_PROMPT) -> dict:
        body = {"prompt": prompt, "caption": caption}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(self.endpoint, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                log.warning("rewrite attempt %d failed: %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last_error = LlmClientError(f"server error {resp.status_code}")
                log.warning("rewrite attempt %d failed: HTTP %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code != 200:
                raise LlmClientError(f"rewrite request rejected: HTTP {resp.status_code}")
            try:
                reply = resp.json()
            except ValueError as exc:
                raise LlmClientError(f"unparseable reply: {exc}") from exc
            if not isinstance(reply, dict) or "caption_reverse" not in reply:
                raise LlmClientError(f"reply missing caption_reverse: {reply!r}")
            return reply
        raise LlmClientError(
            f"transport failure after {self.retries} attempts: {last_error}"
        )


def rewrite_antonym_external(mined: MinedCaption, client: LlmClient) -> RewriteResult:
    """Ask the configured LLM endpoint for the temporally reversed caption."""
    text = mined.caption.text
    reply = client.rewrite(text)
    reverse = reply.get("caption_reverse")
    if reverse is None or (isinstance(reverse, str) and reverse.strip() == "None"):
        return RewriteResult(original=text, antonym=None, rewriter="external")
    if not isinstance(reverse, str):
        raise LlmClientError(f"caption_reverse has wrong type: {reverse!r}")
    if reverse.strip() == text.strip():
        raise LlmClientError(f"echo rejected: rewriter returned the input caption {text!r}")
    return RewriteResult(original=text, antonym=reverse, rewriter="external")


def _replace_one(text: str, subject: str) -> str:
    out = text
    for token in PLACEHOLDER_TOKENS:
        while True:
            pos = out.find(token)
            if pos < 0:
                break
            sub = subject
            after = pos + len(token)
            if pos == 0:
                # The subject now starts the sentence, so the word that used
                # to follow the placeholder loses its capital.
                rest = out[after:]
                stripped = rest.lstrip()
                if stripped and stripped[0].isupper():
                    k = len(rest) - len(stripped)
                    rest = rest[:k] + stripped[0].lower() + stripped[1:]
                out = sub + rest
            else:
                sub = sub[0].lower() + sub[1:]
                out = out[:pos] + sub + out[after:]
    if out != text and out and out[0].isalpha():
        out = out[0].upper() + out[1:]
    return out


def replace_subjects(
    texts: tuple[str, str, str],
    pool: list[str],
    rng: random.Random,
) -> tuple[str, str, str]:
    """Replace anonymized subjects in a triple with one shared subject.

    One subject is drawn uniformly from the pool and substituted for every
    placeholder occurrence in all three sentences; sentences without a
    placeholder pass through unchanged.
    """
    if len(texts) != 3:
        raise MinerError(f"expected exactly three sentences, got {len(texts)}")
    if not pool:
        raise MinerError("subject pool is empty")
    subject = pool[rng.randrange(len(pool))]
    return tuple(_replace_one(t, subject) for t in texts)  # type: ignore[return-value]


@dataclass(frozen=True)
class MinedRecord:
    """One row of the mined output file."""

    id: str
    text: str
    pair_id: int
    side: str
    verb_form: str
    object: str
    antonym: str | None
    rewriter: str

    @property
    def key(self) -> tuple[int, str, str]:
        return (self.pair_id, self.side, self.object)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "pair_id": self.pair_id,
            "side": self.side,
            "verb_form": self.verb_form,
            "object": self.object,
            "antonym": self.antonym,
            "rewriter": self.rewriter,
        }


def mined_record(mined: MinedCaption, rewrite: RewriteResult) -> MinedRecord:
    return MinedRecord(
        id=mined.caption.id,
        text=mined.caption.text,
        pair_id=mined.vo.pair_id,
        side=mined.vo.side,
        verb_form=mined.vo.verb_form,
        object=mined.vo.object,
        antonym=rewrite.antonym,
        rewriter=rewrite.rewriter,
    )


def write_mined(records: list[MinedRecord], path: str) -> None:
    write_jsonl_atomic(path, (r.to_record() for r in records))


def read_mined(path: str) -> list[MinedRecord]:
    records = []
    for lineno, obj in iter_jsonl(path):
        try:
            records.append(
                MinedRecord(
                    id=obj["id"],
                    text=obj["text"],
                    pair_id=obj["pair_id"],
                    side=obj["side"],
                    verb_form=obj["verb_form"],
                    object=obj["object"],
                    antonym=obj["antonym"],
                    rewriter=obj["rewriter"],
                )
            )
        except KeyError as exc:
            raise MinerError(f"{path}:{lineno}: missing field {exc}") from exc
    return records
