"""Sentence corpus ingestion.

Corpus files are newline-delimited JSON records, one sentence per line:

    {"id": "s1", "text": "...", "techniques": [...], "parse": "(S ...)", "split": "train"}

``techniques`` entries may be plain labels or fragment-span objects
(``{"technique": ..., "start": ..., "end": ...}``); spans are discarded
at ingestion and labels rolled up to the sentence level. Tokenization
authority lives in the parse tree; a leaf/text mismatch is a validation
warning, not an error.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Union

from .errors import CorpusError, TreeParseError
from .trees import ParseTree, parse_bracketed

SPLITS = ("train", "sample", "heldout")


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    techniques: frozenset[str] = frozenset()
    split: str = "train"
    parse: ParseTree | None = None


@dataclass
class Corpus:
    sentences: tuple[Sentence, ...]
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.sentences}

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._by_id

    def sentence(self, sentence_id: str) -> Sentence:
        try:
            return self._by_id[sentence_id]
        except KeyError:
            raise CorpusError(f"unknown sentence id {sentence_id!r}") from None


def _roll_up_techniques(raw) -> frozenset[str]:
    labels: set[str] = set()
    for entry in raw or []:
        if isinstance(entry, str):
            labels.add(entry)
        elif isinstance(entry, dict) and "technique" in entry:
            labels.add(str(entry["technique"]))  # fragment span discarded
        else:
            raise CorpusError(f"unreadable technique entry: {entry!r}")
    return frozenset(labels)


def _parse_record(raw: dict, line_no: int) -> Sentence:
    for key in ("id", "text"):
        if key not in raw:
            raise CorpusError(f"line {line_no}: missing field {key!r}")
    sid = str(raw["id"])
    text = str(raw["text"])
    if not text:
        raise CorpusError(f"line {line_no}: sentence {sid!r} has empty text")
    split = str(raw.get("split", "train"))
    if split not in SPLITS:
        raise CorpusError(f"line {line_no}: sentence {sid!r} has unknown split {split!r}")

    parse = None
    if raw.get("parse"):
        try:
            parse = parse_bracketed(str(raw["parse"]), sentence_id=sid)
        except TreeParseError as exc:
            raise CorpusError(f"line {line_no}: sentence {sid!r}: {exc}") from exc
    return Sentence(id=sid, text=text, techniques=_roll_up_techniques(raw.get("techniques")),
                    split=split, parse=parse)


def load_corpus(source: Union[str, IO[str]]) -> Corpus:
    """Load a corpus from JSONL text or a readable stream."""
    text = source if isinstance(source, str) else source.read()
    sentences: list[Sentence] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: invalid JSON: {exc}") from exc
        sentence = _parse_record(raw, line_no)
        if sentence.id in seen:
            raise CorpusError(f"line {line_no}: duplicate sentence id {sentence.id!r}")
        seen.add(sentence.id)
        sentences.append(sentence)
    return Corpus(sentences=tuple(sentences))


def load_corpus_file(path) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        return load_corpus(handle)


def validate_corpus_lines(lines: Iterable[str]) -> tuple[list[str], list[str]]:
    """Per-line validation for the ``corpus validate`` subcommand.

    Returns (errors, warnings), each message prefixed with its line
    number. Leaf/text drift is reported as a warning only.
    """
    errors: list[str] = []
    warnings: list[str] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {line_no}: invalid JSON: {exc}")
            continue
        try:
            sentence = _parse_record(raw, line_no)
        except CorpusError as exc:
            errors.append(str(exc))
            continue
        if sentence.id in seen:
            errors.append(f"line {line_no}: duplicate sentence id {sentence.id!r}")
            continue
        seen.add(sentence.id)
        if sentence.parse is not None:
            joined = " ".join(sentence.parse.root.tokens())
            if joined != sentence.text:
                warnings.append(
                    f"line {line_no}: sentence {sentence.id!r}: "
                    f"parse-tree leaves do not match text ({joined!r} vs {sentence.text!r})"
                )
    return errors, warnings


def dump_corpus(corpus: Corpus) -> str:
    """Serialize back to the JSONL corpus format."""
    from .trees import serialize_tree

    lines = []
    for s in corpus:
        record = {
            "id": s.id,
            "text": s.text,
            "techniques": sorted(s.techniques),
            "parse": serialize_tree(s.parse) if s.parse else None,
            "split": s.split,
        }
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
