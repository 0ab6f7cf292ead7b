"""Append-only store of annotations, assistant exchanges, and evaluation
records.

Persistence is one JSONL log per store: crash-safe, diff-friendly, and
replayable. Every append gets a monotonically increasing ``seq`` which
doubles as the revision id. Reads work against in-memory views rebuilt
deterministically from the log; writes are serialized through a single
lock.

``ABSENT`` (an annotator never touched a (sentence, feature)) is distinct
from an empty property set (the annotator said none apply) everywhere.
"""
from __future__ import annotations

import datetime as dt
import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .corpus import Corpus
from .errors import StoreError
from .taxonomy import FeatureTaxonomy
from .trees import path_resolves


class _Absent:
    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _Absent()

ERROR_CATEGORIES = (
    "confounding",
    "over_generalizing",
    "hallucinating",
    "greedy_answering",
    "other",
)


def utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class AnnotatorId:
    id: str
    kind: str  # "human" | "llm"

    def __post_init__(self):
        if not self.id:
            raise StoreError("annotator id must be non-empty")
        if self.kind not in ("human", "llm"):
            raise StoreError(f"annotator kind must be human or llm, got {self.kind!r}")


def llm_annotator(model: str, version: str, temperature: float) -> AnnotatorId:
    """Structured id so agreement tooling can treat LLM variants as annotators."""
    return AnnotatorId(id=f"llm:{model}:{version}:{temperature}", kind="llm")


@dataclass(frozen=True)
class AnnotationRecord:
    sentence_id: str
    annotator: AnnotatorId
    feature_id: str
    properties: frozenset[str]
    node_path: tuple[int, ...] | None = None
    timestamp: str = ""
    session_id: str = ""

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "annotator": {"id": self.annotator.id, "kind": self.annotator.kind},
            "feature_id": self.feature_id,
            "properties": sorted(self.properties),
            "node_path": list(self.node_path) if self.node_path is not None else None,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "AnnotationRecord":
        return cls(
            sentence_id=raw["sentence_id"],
            annotator=AnnotatorId(**raw["annotator"]),
            feature_id=raw["feature_id"],
            properties=frozenset(raw["properties"]),
            node_path=tuple(raw["node_path"]) if raw.get("node_path") is not None else None,
            timestamp=raw.get("timestamp", ""),
            session_id=raw.get("session_id", ""),
        )


@dataclass(frozen=True)
class AssistantExchange:
    sentence_id: str
    feature_id: str
    prompt_version: str  # "V1" | "V2"
    request: dict  # prompt reference: ids + digest, reproducible via the prompt engine
    responses: tuple[dict, ...]  # verbatim, incl. raw text
    model: str
    temperature: float
    timestamp: str = ""
    property_id: str | None = None  # V2 only

    def __post_init__(self):
        if len(self.responses) < 1:
            raise StoreError("exchange must carry at least one response")
        if self.prompt_version not in ("V1", "V2"):
            raise StoreError(f"prompt_version must be V1 or V2, got {self.prompt_version!r}")

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "feature_id": self.feature_id,
            "property_id": self.property_id,
            "prompt_version": self.prompt_version,
            "request": self.request,
            "responses": list(self.responses),
            "model": self.model,
            "temperature": self.temperature,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "AssistantExchange":
        return cls(
            sentence_id=raw["sentence_id"],
            feature_id=raw["feature_id"],
            property_id=raw.get("property_id"),
            prompt_version=raw["prompt_version"],
            request=raw.get("request", {}),
            responses=tuple(raw["responses"]),
            model=raw["model"],
            temperature=raw["temperature"],
            timestamp=raw.get("timestamp", ""),
        )

    def key(self) -> tuple:
        return (self.sentence_id, self.feature_id, self.property_id,
                self.prompt_version, self.model, self.temperature)


@dataclass(frozen=True)
class GroundTruthLabel:
    sentence_id: str
    feature_id: str
    properties: frozenset[str]
    author: str = ""
    notes: str = ""
    timestamp: str = ""

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "feature_id": self.feature_id,
            "properties": sorted(self.properties),
            "author": self.author,
            "notes": self.notes,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "GroundTruthLabel":
        return cls(
            sentence_id=raw["sentence_id"],
            feature_id=raw["feature_id"],
            properties=frozenset(raw["properties"]),
            author=raw.get("author", ""),
            notes=raw.get("notes", ""),
            timestamp=raw.get("timestamp", ""),
        )


@dataclass(frozen=True)
class ErrorTag:
    exchange_seq: int
    category: str
    rationale: str
    tagger: str
    timestamp: str = ""

    def __post_init__(self):
        if self.category not in ERROR_CATEGORIES:
            raise StoreError(
                f"unknown error category {self.category!r}; expected one of {ERROR_CATEGORIES}"
            )

    def to_json(self) -> dict:
        return {
            "exchange_seq": self.exchange_seq,
            "category": self.category,
            "rationale": self.rationale,
            "tagger": self.tagger,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "ErrorTag":
        return cls(
            exchange_seq=raw["exchange_seq"],
            category=raw["category"],
            rationale=raw.get("rationale", ""),
            tagger=raw.get("tagger", ""),
            timestamp=raw.get("timestamp", ""),
        )


@dataclass(frozen=True)
class Session:
    session_id: str
    annotator: AnnotatorId
    cursor: tuple[int, int] = (0, 0)  # (sentence index, feature index)
    started_at: str = ""

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "annotator": {"id": self.annotator.id, "kind": self.annotator.kind},
            "cursor": list(self.cursor),
            "started_at": self.started_at,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Session":
        return cls(
            session_id=raw["session_id"],
            annotator=AnnotatorId(**raw["annotator"]),
            cursor=tuple(raw.get("cursor", (0, 0))),
            started_at=raw.get("started_at", ""),
        )


_KINDS = {
    "annotation": AnnotationRecord,
    "exchange": AssistantExchange,
    "ground_truth": GroundTruthLabel,
    "error_tag": ErrorTag,
    "session": Session,
}


class Store:
    """Durable annotation store backed by a single append log."""

    def __init__(self, path: str | Path | None = None,
                 taxonomy: FeatureTaxonomy | None = None,
                 corpus: Corpus | None = None):
        self.path = Path(path) if path is not None else None
        self.taxonomy = taxonomy
        self.corpus = corpus
        self._lock = threading.Lock()
        self._reset_views()
        if self.path is not None and self.path.exists():
            self._replay(self.path.read_text(encoding="utf-8"))

    # -- replay / views -------------------------------------------------

    def _reset_views(self):
        self._seq = 0
        self._annotations: dict[tuple[str, str, str], tuple[int, AnnotationRecord]] = {}
        self._annotation_log: list[tuple[int, AnnotationRecord]] = []
        self._exchanges: dict[int, AssistantExchange] = {}
        self._exchange_by_key: dict[tuple, int] = {}
        self._ground_truth: dict[tuple[str, str], GroundTruthLabel] = {}
        self._error_tags: list[ErrorTag] = []
        self._sessions: dict[str, Session] = {}

    def _replay(self, text: str):
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"corrupt store line {line_no}: {exc}") from exc
            kind = raw.get("kind")
            if kind not in _KINDS:
                raise StoreError(f"corrupt store line {line_no}: unknown kind {kind!r}")
            seq = raw.get("seq")
            if not isinstance(seq, int):
                raise StoreError(f"corrupt store line {line_no}: missing seq")
            record = _KINDS[kind].from_json(raw)
            self._apply(kind, seq, record)

    def _apply(self, kind: str, seq: int, record):
        self._seq = max(self._seq, seq)
        if kind == "annotation":
            self._annotation_log.append((seq, record))
            key = (record.sentence_id, record.annotator.id, record.feature_id)
            current = self._annotations.get(key)
            # last writer wins by timestamp; append order breaks ties
            if current is None or record.timestamp >= current[1].timestamp:
                self._annotations[key] = (seq, record)
        elif kind == "exchange":
            self._exchanges[seq] = record
            self._exchange_by_key[record.key()] = seq
        elif kind == "ground_truth":
            self._ground_truth[(record.sentence_id, record.feature_id)] = record
        elif kind == "error_tag":
            self._error_tags.append(record)
        elif kind == "session":
            self._sessions[record.session_id] = record

    # -- appends ---------------------------------------------------------

    def _append(self, kind: str, record) -> int:
        with self._lock:
            self._seq += 1
            seq = self._seq
            payload = {"kind": kind, "seq": seq, **record.to_json()}
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(_canonical(payload) + "\n")
                    handle.flush()
                    os.fsync(handle.fileno())
            self._apply(kind, seq, record)
            return seq

    def _validate_record(self, record: AnnotationRecord):
        if self.taxonomy is not None:
            feature = self.taxonomy.feature(record.feature_id)
            extra = record.properties - feature.property_ids()
            if extra:
                raise StoreError(
                    f"properties {sorted(extra)} are not properties of feature "
                    f"{record.feature_id!r}"
                )
        if self.corpus is not None:
            if record.sentence_id not in self.corpus:
                raise StoreError(f"unknown sentence id {record.sentence_id!r}")
            sentence = self.corpus.sentence(record.sentence_id)
            if record.node_path is not None and sentence.parse is not None:
                if not path_resolves(sentence.parse, record.node_path):
                    raise StoreError(
                        f"node path {list(record.node_path)} does not resolve in the "
                        f"parse tree of sentence {record.sentence_id!r}"
                    )

    def submit(self, record: AnnotationRecord) -> int:
        """Append an annotation; returns its revision id (seq)."""
        self._validate_record(record)
        if not record.timestamp:
            record = replace(record, timestamp=utcnow())
        return self._append("annotation", record)

    def record_exchange(self, exchange: AssistantExchange) -> int:
        if not exchange.timestamp:
            exchange = replace(exchange, timestamp=utcnow())
        return self._append("exchange", exchange)

    def set_ground_truth(self, label: GroundTruthLabel) -> int:
        if self.taxonomy is not None:
            feature = self.taxonomy.feature(label.feature_id)
            extra = label.properties - feature.property_ids()
            if extra:
                raise StoreError(
                    f"ground truth properties {sorted(extra)} are not properties of "
                    f"feature {label.feature_id!r}"
                )
        if not label.timestamp:
            label = replace(label, timestamp=utcnow())
        return self._append("ground_truth", label)

    def tag_error(self, tag: ErrorTag) -> int:
        if tag.exchange_seq not in self._exchanges:
            raise StoreError(f"unknown exchange seq {tag.exchange_seq}")
        if not tag.timestamp:
            tag = replace(tag, timestamp=utcnow())
        return self._append("error_tag", tag)

    def save_session(self, session: Session) -> int:
        if not session.started_at:
            session = replace(session, started_at=utcnow())
        return self._append("session", session)

    # -- reads -----------------------------------------------------------

    def latest(self, sentence_id: str, annotator_id: str, feature_id: str) -> AnnotationRecord | None:
        entry = self._annotations.get((sentence_id, annotator_id, feature_id))
        return entry[1] if entry else None

    def annotations(self) -> list[AnnotationRecord]:
        """Latest record per (sentence, annotator, feature)."""
        return [rec for _, rec in self._annotations.values()]

    def annotation_history(self) -> list[AnnotationRecord]:
        return [rec for _, rec in self._annotation_log]

    def annotators(self, kind: str | None = None) -> list[str]:
        seen: dict[str, str] = {}
        for _, rec in self._annotation_log:
            seen.setdefault(rec.annotator.id, rec.annotator.kind)
        return sorted(a for a, k in seen.items() if kind is None or k == kind)

    def features_with_records(self) -> list[str]:
        return sorted({rec.feature_id for rec in self.annotations()})

    def matrix(self, feature_id: str, annotators: Iterable[str]) -> dict[str, dict[str, object]]:
        """Per-sentence map annotator -> property set or ABSENT.

        Only sentences where at least one listed annotator has a record
        appear. ABSENT marks a missing annotator, distinct from an empty set.
        """
        if self.taxonomy is not None:
            self.taxonomy.feature(feature_id)  # raises on unknown feature
        annotators = list(annotators)
        rows: dict[str, dict[str, object]] = {}
        for (sid, aid, fid), (_, rec) in self._annotations.items():
            if fid != feature_id or aid not in annotators:
                continue
            rows.setdefault(sid, {a: ABSENT for a in annotators})[aid] = rec.properties
        return dict(sorted(rows.items()))

    def exchanges(self, feature_id: str | None = None, model: str | None = None,
                  temperature: float | None = None,
                  prompt_version: str | None = None) -> list[tuple[int, AssistantExchange]]:
        out = []
        for seq in sorted(self._exchanges):
            ex = self._exchanges[seq]
            if feature_id is not None and ex.feature_id != feature_id:
                continue
            if model is not None and ex.model != model:
                continue
            if temperature is not None and ex.temperature != temperature:
                continue
            if prompt_version is not None and ex.prompt_version != prompt_version:
                continue
            out.append((seq, ex))
        return out

    def get_exchange(self, seq: int) -> AssistantExchange | None:
        return self._exchanges.get(seq)

    def find_exchange(self, key: tuple) -> AssistantExchange | None:
        seq = self._exchange_by_key.get(key)
        return self._exchanges.get(seq) if seq is not None else None

    def ground_truth(self, feature_id: str | None = None) -> dict[tuple[str, str], GroundTruthLabel]:
        if feature_id is None:
            return dict(self._ground_truth)
        return {k: v for k, v in self._ground_truth.items() if k[1] == feature_id}

    def error_tags(self) -> list[ErrorTag]:
        return list(self._error_tags)

    def session(self, session_id: str) -> Session | None:
        return self._sessions.get(session_id)

    def sessions(self) -> list[Session]:
        return list(self._sessions.values())

    # -- maintenance -----------------------------------------------------

    def export(self) -> str:
        """Canonical byte-stable dump of the full log."""
        if self.path is not None and self.path.exists():
            # normalize: reserialize each line canonically
            lines = []
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    lines.append(_canonical(json.loads(line)))
            return "\n".join(lines) + ("\n" if lines else "")
        return self._dump_views()

    def _dump_views(self) -> str:
        lines = []
        for seq, rec in self._annotation_log:
            lines.append((seq, _canonical({"kind": "annotation", "seq": seq, **rec.to_json()})))
        for seq, ex in self._exchanges.items():
            lines.append((seq, _canonical({"kind": "exchange", "seq": seq, **ex.to_json()})))
        out = [text for _, text in sorted(lines)]
        return "\n".join(out) + ("\n" if out else "")

    @classmethod
    def import_log(cls, text: str, path: str | Path | None = None,
                   taxonomy: FeatureTaxonomy | None = None,
                   corpus: Corpus | None = None) -> "Store":
        store = cls(path=None, taxonomy=taxonomy, corpus=corpus)
        store._replay(text)
        if path is not None:
            store.path = Path(path)
            with open(store.path, "w", encoding="utf-8") as handle:
                for line in text.splitlines():
                    if line.strip():
                        handle.write(_canonical(json.loads(line)) + "\n")
        return store

    def compact(self) -> int:
        """Rewrite the log keeping only latest-per-key annotation revisions.

        Exchanges, error tags, ground truths, and sessions are retained
        (latest per key where a key exists). Returns lines dropped.
        """
        if self.path is None:
            raise StoreError("compact requires a file-backed store")
        kept: list[tuple[int, str]] = []
        for seq, rec in self._annotations.values():
            kept.append((seq, _canonical({"kind": "annotation", "seq": seq, **rec.to_json()})))
        for seq, ex in self._exchanges.items():
            kept.append((seq, _canonical({"kind": "exchange", "seq": seq, **ex.to_json()})))
        next_seq = max((s for s, _ in kept), default=0)
        extra: list[str] = []
        for label in self._ground_truth.values():
            next_seq += 1
            extra.append(_canonical({"kind": "ground_truth", "seq": next_seq, **label.to_json()}))
        for tag in self._error_tags:
            next_seq += 1
            extra.append(_canonical({"kind": "error_tag", "seq": next_seq, **tag.to_json()}))
        for session in self._sessions.values():
            next_seq += 1
            extra.append(_canonical({"kind": "session", "seq": next_seq, **session.to_json()}))

        dropped = len(self._annotation_log) - len(self._annotations)
        lines = [text for _, text in sorted(kept)] + extra
        with open(self.path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + ("\n" if lines else ""))
        taxonomy, corpus = self.taxonomy, self.corpus
        self._reset_views()
        self.taxonomy, self.corpus = taxonomy, corpus
        self._replay(self.path.read_text(encoding="utf-8"))
        return dropped
