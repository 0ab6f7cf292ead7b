"""Construction of fine-tuning datasets from the annotation store.

Three builds, trading label quality against labour:

* small — per property, one verified positive and one verified negative
  from ground-truth labels; assistant replies carry Answer and Explanation.
* medium — per property, up to 25 positives and 25 negatives from human
  annotations (majority rule), seeded sampling, Answer only.
* large — every usable human-annotated sentence: positive on strict
  majority, negative only when no annotator applied the property,
  single-opinion sentences dropped, ground-truth sentences excluded.

Emitted files are provider-ready chat-format JSONL (messages array of
system/user/assistant) with a manifest whose counts are checked against
the file.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .errors import FinetuneError
from .prompts import build_v2
from .store import ABSENT, Store
from .taxonomy import FeatureTaxonomy

POLARITIES = ("positive", "negative")
PROVENANCES = ("ground_truth", "majority_vote", "absence")


@dataclass(frozen=True)
class TrainingExample:
    system_text: str
    user_text: str
    assistant_text: str  # JSON object string under the V2 schema
    feature_id: str
    property_id: str
    sentence_id: str
    polarity: str
    provenance: str

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
            {"role": "assistant", "content": self.assistant_text},
        ]


@dataclass(frozen=True)
class Dataset:
    kind: str  # "small" | "medium" | "large"
    feature_id: str
    examples: tuple[TrainingExample, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetManifest:
    kind: str
    feature_id: str
    n_examples: int
    counts: dict  # property id -> {"positive": n, "negative": n, "total": n}
    store_snapshot: str
    file_digest: str
    seed: int
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "feature_id": self.feature_id,
            "n_examples": self.n_examples,
            "counts": self.counts,
            "store_snapshot": self.store_snapshot,
            "file_digest": self.file_digest,
            "seed": self.seed,
            "warnings": list(self.warnings),
        }


def _assistant_text(positive: bool, explanation: str | None = None) -> str:
    body: dict = {"Answer": "yes" if positive else "no"}
    if explanation is not None:
        body["Explanation"] = explanation
    return json.dumps(body)


def _example(taxonomy: FeatureTaxonomy, corpus: Corpus, feature_id: str,
             property_id: str, sentence_id: str, polarity: str,
             provenance: str, explanation: str | None = None) -> TrainingExample:
    sentence = corpus.sentence(sentence_id)
    spec = build_v2(taxonomy, feature_id, property_id, sentence.text,
                    sentence_id=sentence_id)
    return TrainingExample(
        system_text=spec.system_text,
        user_text=spec.user_text,
        assistant_text=_assistant_text(polarity == "positive", explanation),
        feature_id=feature_id,
        property_id=property_id,
        sentence_id=sentence_id,
        polarity=polarity,
        provenance=provenance,
    )


def store_snapshot_id(store: Store) -> str:
    return hashlib.sha256(store.export().encode("utf-8")).hexdigest()


def build_small(taxonomy: FeatureTaxonomy, corpus: Corpus, store: Store,
                feature_id: str) -> Dataset:
    """2 examples per property (1 pos, 1 neg) from ground-truth labels."""
    feature = taxonomy.feature(feature_id)
    labels = sorted(store.ground_truth(feature_id).values(),
                    key=lambda l: l.sentence_id)
    if not labels:
        raise FinetuneError(f"no ground-truth labels for feature {feature_id!r}")
    examples = []
    for prop in feature.properties:
        positive = next((l for l in labels if prop.id in l.properties), None)
        negative = next((l for l in labels if prop.id not in l.properties), None)
        missing = [p for p, l in (("positive", positive), ("negative", negative))
                   if l is None]
        if missing:
            raise FinetuneError(
                f"property {prop.id!r} has no {' or '.join(missing)} "
                "ground-truth instance")
        for label, polarity in ((positive, "positive"), (negative, "negative")):
            applied = polarity == "positive"
            explanation = label.notes or (
                f"The property '{prop.name}' "
                f"{'is used' if applied else 'is not used'} in the example text.")
            examples.append(_example(taxonomy, corpus, feature_id, prop.id,
                                     label.sentence_id, polarity,
                                     "ground_truth", explanation))
    return Dataset(kind="small", feature_id=feature_id, examples=tuple(examples))


def _majority_pools(taxonomy: FeatureTaxonomy, store: Store, feature_id: str,
                    exclude: frozenset[str] = frozenset()) -> dict[str, dict[str, list[str]]]:
    feature = taxonomy.feature(feature_id)
    annotators = store.annotators(kind="human")
    matrix = store.matrix(feature_id, annotators)
    pools = {p.id: {"positive": [], "negative": []} for p in feature.properties}
    for sentence_id in sorted(matrix):
        if sentence_id in exclude:
            continue
        sets = [v for v in matrix[sentence_id].values() if v is not ABSENT]
        k = len(sets)
        if k < 2:
            continue
        majority = (k // 2) + 1  # strict majority of non-absent annotators
        for prop in feature.properties:
            applied = sum(1 for s in sets if prop.id in s)
            if applied >= majority:
                pools[prop.id]["positive"].append(sentence_id)
            elif applied == 0:
                pools[prop.id]["negative"].append(sentence_id)
            # applied by a minority: dropped from both polarities
    return pools


def build_medium(taxonomy: FeatureTaxonomy, corpus: Corpus, store: Store,
                 feature_id: str, seed: int = 0, per_polarity: int = 25) -> Dataset:
    """Up to 25/25 per property from human labels; Answer only."""
    feature = taxonomy.feature(feature_id)
    pools = _majority_pools(taxonomy, store, feature_id)
    rng = random.Random(seed)
    examples = []
    warnings = []
    for prop in feature.properties:
        pool = pools[prop.id]
        if not pool["positive"] and not pool["negative"]:
            raise FinetuneError(
                f"no usable human-labeled sentences for property {prop.id!r}")
        for polarity in POLARITIES:
            candidates = pool[polarity]
            take = min(per_polarity, len(candidates))
            if take < per_polarity:
                warnings.append(
                    f"{prop.id}: only {take}/{per_polarity} {polarity} candidates")
            chosen = sorted(rng.sample(candidates, take))
            provenance = "majority_vote" if polarity == "positive" else "absence"
            for sentence_id in chosen:
                examples.append(_example(taxonomy, corpus, feature_id, prop.id,
                                         sentence_id, polarity, provenance))
    return Dataset(kind="medium", feature_id=feature_id,
                   examples=tuple(examples), warnings=tuple(warnings))


def build_large(taxonomy: FeatureTaxonomy, corpus: Corpus, store: Store,
                feature_id: str, exclusions: frozenset[str] | None = None) -> Dataset:
    """All usable human-annotated sentences, ground-truth ids excluded."""
    if exclusions is None:
        exclusions = frozenset(sid for sid, _ in store.ground_truth())
    feature = taxonomy.feature(feature_id)
    pools = _majority_pools(taxonomy, store, feature_id, exclude=exclusions)
    examples = []
    for prop in feature.properties:
        for polarity in POLARITIES:
            provenance = "majority_vote" if polarity == "positive" else "absence"
            for sentence_id in pools[prop.id][polarity]:
                examples.append(_example(taxonomy, corpus, feature_id, prop.id,
                                         sentence_id, polarity, provenance))
    if not examples:
        raise FinetuneError(
            f"store holds no usable human annotations for feature {feature_id!r}")
    return Dataset(kind="large", feature_id=feature_id, examples=tuple(examples))


def emit(dataset: Dataset, store: Store, out_dir: str | Path,
         seed: int = 0) -> tuple[Path, DatasetManifest]:
    """Write a shuffled JSONL training file plus its manifest."""
    if not dataset.examples:
        raise FinetuneError("refusing to emit an empty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = list(dataset.examples)
    random.Random(seed).shuffle(rows)
    lines = [json.dumps({"messages": ex.messages()}, ensure_ascii=False,
                        separators=(",", ":"))
             for ex in rows]
    text = "\n".join(lines) + "\n"
    path = out_dir / f"{dataset.feature_id}.{dataset.kind}.jsonl"
    path.write_text(text, encoding="utf-8")

    counts: dict[str, dict[str, int]] = {}
    for ex in dataset.examples:
        slot = counts.setdefault(ex.property_id, {"positive": 0, "negative": 0, "total": 0})
        slot[ex.polarity] += 1
        slot["total"] += 1
    manifest = DatasetManifest(
        kind=dataset.kind,
        feature_id=dataset.feature_id,
        n_examples=len(dataset.examples),
        counts=counts,
        store_snapshot=store_snapshot_id(store),
        file_digest=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        seed=seed,
        warnings=dataset.warnings,
    )
    manifest_path = out_dir / f"{dataset.feature_id}.{dataset.kind}.manifest.json"
    manifest_path.write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True)
                             + "\n", encoding="utf-8")
    return path, manifest


def parse_training_line(line: str) -> dict:
    """Round-trip helper: one emitted line back into its message triple."""
    record = json.loads(line)
    messages = record["messages"]
    if [m["role"] for m in messages] != ["system", "user", "assistant"]:
        raise FinetuneError("training line must hold system/user/assistant roles")
    json.loads(messages[2]["content"])  # assistant text must be a JSON object
    return record
