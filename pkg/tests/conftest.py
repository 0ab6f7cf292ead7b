from __future__ import annotations

import json
import random

import pytest

from rhetann.corpus import Corpus, load_corpus
from rhetann.store import AnnotationRecord, AnnotatorId, Store
from rhetann.taxonomy import load_default

WORDS = ("the quick brown fox jumps over a lazy dog while reporters watch "
         "events unfold near the old town square every single day").split()


@pytest.fixture(scope="session")
def taxonomy():
    return load_default()


def make_tree_text(words: list[str]) -> str:
    if len(words) == 1:
        return f"(S (W {words[0]}))"
    head, *rest = words
    rest_leaves = " ".join(f"(W {w})" for w in rest)
    return f"(S (NP (W {head})) (VP {rest_leaves}))"


def make_corpus(n: int, seed: int = 0, with_parse: bool = True) -> Corpus:
    rng = random.Random(seed)
    lines = []
    for i in range(n):
        words = [rng.choice(WORDS) for _ in range(rng.randint(3, 8))]
        record = {
            "id": f"s{i:04d}",
            "text": " ".join(words),
            "techniques": rng.sample(["loaded_language", "doubt", "smears"],
                                     rng.randint(0, 2)),
            "split": rng.choice(["train", "sample", "heldout"]),
        }
        if with_parse:
            record["parse"] = make_tree_text(words)
        lines.append(json.dumps(record))
    return load_corpus("\n".join(lines))


@pytest.fixture
def small_corpus():
    return make_corpus(12, seed=7)


@pytest.fixture
def store(tmp_path, taxonomy, small_corpus):
    return Store(tmp_path / "store.jsonl", taxonomy=taxonomy, corpus=small_corpus)


HUMANS = [AnnotatorId(id=f"a{i}", kind="human") for i in (1, 2, 3)]


def seed_annotations(store: Store, corpus: Corpus, feature_id: str,
                     assignments: dict[str, dict[str, set[str]]]):
    """assignments: sentence_id -> annotator_id -> property set."""
    by_id = {a.id: a for a in HUMANS}
    for sentence_id, per_annotator in assignments.items():
        for annotator_id, props in per_annotator.items():
            annotator = by_id.get(annotator_id,
                                  AnnotatorId(id=annotator_id, kind="human"))
            store.submit(AnnotationRecord(
                sentence_id=sentence_id, annotator=annotator,
                feature_id=feature_id, properties=frozenset(props)))
