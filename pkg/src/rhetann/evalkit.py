"""Consensus selection, accuracy scoring against ground truth, and the
error-taxonomy ledger.

The evaluation protocol: pick sentences where every human annotator
assigned the identical property set for a feature, hand-verify ground
truth for those, then score each system (the humans' consensus set, each
LLM variant) against the verified labels.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import EvalError
from .store import ABSENT, ErrorTag, Store

SCORE_MODES = ("exact_set", "per_property")
AGGREGATE_MODES = ("macro", "micro")


@dataclass(frozen=True)
class AccuracyCell:
    feature_id: str
    system: str  # e.g. "human", "llm:gpt-4:V1:1.0"
    correct: int
    n: int

    @property
    def accuracy(self) -> float:
        if self.n == 0:
            raise EvalError(f"empty accuracy cell for {self.feature_id}/{self.system}")
        return self.correct / self.n


@dataclass(frozen=True)
class AccuracyReport:
    cells: tuple[AccuracyCell, ...]

    def systems(self) -> list[str]:
        return sorted({c.system for c in self.cells})

    def features(self) -> list[str]:
        return sorted({c.feature_id for c in self.cells})

    def cell(self, feature_id: str, system: str) -> AccuracyCell | None:
        for c in self.cells:
            if c.feature_id == feature_id and c.system == system:
                return c
        return None


def select_consensus(store: Store, feature_id: str, k: int, seed: int = 0,
                     annotators: list[str] | None = None) -> tuple[list[str], str | None]:
    """Up to k sentences where all annotators hold identical sets.

    Requires every listed annotator present (not merely the non-absent
    subset agreeing). Returns (ids, shortfall note or None).
    """
    if annotators is None:
        annotators = store.annotators(kind="human")
    if len(annotators) < 2:
        raise EvalError("consensus needs at least two annotators")
    matrix = store.matrix(feature_id, annotators)
    consensus = []
    for sentence_id in sorted(matrix):
        values = [matrix[sentence_id][a] for a in annotators]
        if any(v is ABSENT for v in values):
            continue
        if all(v == values[0] for v in values[1:]):
            consensus.append(sentence_id)
    note = None
    if len(consensus) < k:
        note = (f"only {len(consensus)} consensus sentences available for "
                f"{feature_id} (wanted {k})")
        chosen = consensus
    else:
        chosen = sorted(random.Random(seed).sample(consensus, k))
    return chosen, note


def score(predictions: dict[str, frozenset[str]],
          gold: dict[str, frozenset[str]],
          feature_id: str, system: str,
          mode: str = "exact_set",
          property_ids: list[str] | None = None) -> AccuracyCell:
    """Score predicted property sets against gold labels.

    exact_set: one decision per sentence, correct iff sets are equal.
    per_property: one yes/no decision per (sentence, property) — the unit
    the V2/FT systems actually answer — so n = sentences × properties.
    """
    if mode not in SCORE_MODES:
        raise EvalError(f"unknown scoring mode {mode!r}")
    missing = set(gold) - set(predictions)
    extra = set(predictions) - set(gold)
    if missing or extra:
        raise EvalError(
            f"prediction/gold coverage mismatch: missing {sorted(missing)}, "
            f"unexpected {sorted(extra)}")
    if mode == "per_property" and not property_ids:
        raise EvalError("per_property scoring needs the feature's property ids")
    correct = 0
    n = 0
    for sentence_id in sorted(gold):
        predicted, actual = predictions[sentence_id], gold[sentence_id]
        if mode == "exact_set":
            n += 1
            correct += int(predicted == actual)
        else:
            for prop in property_ids:
                n += 1
                correct += int((prop in predicted) == (prop in actual))
    return AccuracyCell(feature_id=feature_id, system=system, correct=correct, n=n)


def aggregate(cells: list[AccuracyCell], mode: str = "micro") -> float:
    """All-features roll-up: macro = mean of accuracies, micro = pooled."""
    if mode not in AGGREGATE_MODES:
        raise EvalError(f"unknown aggregation mode {mode!r}")
    if not cells:
        raise EvalError("nothing to aggregate")
    if mode == "macro":
        return sum(c.accuracy for c in cells) / len(cells)
    total_n = sum(c.n for c in cells)
    if total_n == 0:
        raise EvalError("all cells empty")
    return sum(c.correct for c in cells) / total_n


def tag_error(store: Store, exchange_seq: int, category: str,
              rationale: str, tagger: str) -> int:
    """Record one manual error-taxonomy judgement against an exchange."""
    tag = ErrorTag(exchange_seq=exchange_seq, category=category,
                   rationale=rationale, tagger=tagger)
    return store.tag_error(tag)


def summarize_errors(store: Store, feature_id: str | None = None) -> dict[str, int]:
    """Counts per category, recomputed from the tag ledger every time."""
    counts: dict[str, int] = {}
    for tag in store.error_tags():
        if feature_id is not None:
            exchange = store.get_exchange(tag.exchange_seq)
            if exchange is None or exchange.feature_id != feature_id:
                continue
        counts[tag.category] = counts.get(tag.category, 0) + 1
    return dict(sorted(counts.items()))


def accuracy_table(report: AccuracyReport, aggregates: dict[str, dict[str, float]],
                   names: dict[str, str] | None = None) -> str:
    """Tabular rendering, one row per feature, one column per system.

    ``aggregates`` maps mode -> system -> value; both macro and micro rows
    are printed and labeled, since either could be the intended roll-up.
    """
    names = names or {}
    systems = report.systems()
    header = ["Feature"] + systems
    rows = []
    for feature_id in sorted(report.features(), key=lambda f: names.get(f, f).lower()):
        row = [names.get(feature_id, feature_id)]
        for system in systems:
            cell = report.cell(feature_id, system)
            row.append(f"{cell.accuracy:.3f}" if cell and cell.n else "--")
        rows.append(row)
    for mode in ("micro", "macro"):
        if mode in aggregates:
            row = [f"All features ({mode})"]
            for system in systems:
                value = aggregates[mode].get(system)
                row.append(f"{value:.3f}" if value is not None else "--")
            rows.append(row)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
             "  ".join("-" * w for w in widths).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"
