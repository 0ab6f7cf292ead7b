"""Inter-annotator agreement and intra-LLM consistency metrics.

Three agreement measures per feature, computed over units of one sentence
each:

* Krippendorff's alpha, nominal metric, after canonicalizing each
  annotator's property set into a single label (multi-label sets count as
  full disagreement unless identical);
* Jaccard agreement, averaged pairwise per unit by default;
* joint probability of exact agreement.

Plus exact consistency of repeated LLM responses to one prompt. All
functions here are pure; reports are rendered deterministically so that
regenerating from the same store is byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .errors import AgreementError
from .prompts import LlmResponse, effective_property_set
from .store import ABSENT, AssistantExchange, Store


@dataclass(frozen=True)
class AgreementUnit:
    sentence_id: str
    values: Mapping[str, object]  # annotator -> frozenset of property ids, or ABSENT

    def present(self) -> list[frozenset]:
        return [v for v in self.values.values() if v is not ABSENT]


@dataclass(frozen=True)
class AgreementReport:
    feature_id: str
    krippendorff: float | None
    jaccard: float | None
    exact: float | None
    n_units: int
    n_pairable: int  # units with >=2 non-absent values; jaccard/exact denominator


@dataclass(frozen=True)
class ConsistencyReport:
    feature_id: str
    model: str
    temperature: float
    exact_consistency: float
    n_prompts: int
    n_flagged: int = 0  # prompts with at least one unparseable response


def canonical_label(properties: Iterable[str]) -> str:
    """One nominal label per property set: sorted ids, '|'-joined."""
    return "|".join(sorted(properties))


def units_from_matrix(matrix: Mapping[str, Mapping[str, object]]) -> list[AgreementUnit]:
    units = []
    for sentence_id in sorted(matrix):
        values = dict(matrix[sentence_id])
        if any(v is not ABSENT for v in values.values()):
            units.append(AgreementUnit(sentence_id=sentence_id, values=values))
    return units


def units_from_store(store: Store, feature_id: str, annotators: Iterable[str]) -> list[AgreementUnit]:
    return units_from_matrix(store.matrix(feature_id, annotators))


def krippendorff_alpha(units: list[AgreementUnit]) -> float | None:
    """Nominal-metric alpha over canonicalized labels.

    Uses the coincidence-matrix formulation: within each unit holding m >= 2
    labels, every ordered pair of labels contributes 1/(m-1). Returns None
    (undefined) when expected disagreement degenerates, i.e. every label in
    the pairable data is the same value.
    """
    if not units:
        raise AgreementError("no units to compute alpha over")
    coincidence: dict[tuple[str, str], float] = {}
    totals: dict[str, float] = {}
    for unit in units:
        labels = [canonical_label(v) for v in unit.present()]
        m = len(labels)
        if m < 2:
            continue  # lone labels carry no pairing information
        weight = 1.0 / (m - 1)
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i == j:
                    continue
                coincidence[(a, b)] = coincidence.get((a, b), 0.0) + weight
                totals[a] = totals.get(a, 0.0) + weight
    n = sum(totals.values())
    if n < 2 or len(totals) == 0:
        return None
    observed_off = sum(v for (a, b), v in coincidence.items() if a != b)
    expected_off = sum(totals[a] * totals[b]
                       for a in totals for b in totals if a != b)
    if expected_off == 0:
        return None  # all pairable labels identical: alpha undefined
    return 1.0 - (n - 1) * observed_off / expected_off


def _pair_jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0  # both say "none apply" - that is agreement
    union = a | b
    return len(a & b) / len(union)


def jaccard_agreement(units: list[AgreementUnit],
                      normalization: str = "per_unit") -> float | None:
    """Mean pairwise Jaccard.

    ``per_unit`` (default) averages the pairwise scores within each unit,
    then averages across units. ``global`` pools every pair across all
    units and normalizes once. Units with fewer than two non-absent values
    are excluded either way.
    """
    if not units:
        raise AgreementError("no units to compute jaccard over")
    if normalization not in ("per_unit", "global"):
        raise AgreementError(f"unknown normalization {normalization!r}")
    unit_means = []
    pooled_sum = 0.0
    pooled_pairs = 0
    for unit in units:
        present = unit.present()
        if len(present) < 2:
            continue
        scores = [_pair_jaccard(a, b) for a, b in combinations(present, 2)]
        unit_means.append(sum(scores) / len(scores))
        pooled_sum += sum(scores)
        pooled_pairs += len(scores)
    if not unit_means:
        return None
    if normalization == "global":
        return pooled_sum / pooled_pairs
    return sum(unit_means) / len(unit_means)


def exact_agreement(units: list[AgreementUnit]) -> float | None:
    """Fraction of pairable units where every non-absent set is identical."""
    if not units:
        raise AgreementError("no units to compute exact agreement over")
    pairable = 0
    hits = 0
    for unit in units:
        present = unit.present()
        if len(present) < 2:
            continue
        pairable += 1
        if all(s == present[0] for s in present[1:]):
            hits += 1
    if pairable == 0:
        return None
    return hits / pairable


def compute_report(store: Store, feature_id: str, annotators: Iterable[str],
                   jaccard_normalization: str = "per_unit") -> AgreementReport:
    units = units_from_store(store, feature_id, annotators)
    pairable = sum(1 for u in units if len(u.present()) >= 2)
    if not units:
        return AgreementReport(feature_id=feature_id, krippendorff=None,
                               jaccard=None, exact=None, n_units=0, n_pairable=0)
    return AgreementReport(
        feature_id=feature_id,
        krippendorff=krippendorff_alpha(units),
        jaccard=jaccard_agreement(units, jaccard_normalization),
        exact=exact_agreement(units),
        n_units=len(units),
        n_pairable=pairable,
    )


def _response_sets(exchange: AssistantExchange) -> list[frozenset | None]:
    out = []
    for raw in exchange.responses:
        response = LlmResponse.from_json(raw)
        out.append(effective_property_set(exchange.prompt_version,
                                          exchange.property_id, response))
    return out


def intra_llm_consistency(exchanges: list[AssistantExchange],
                          feature_id: str) -> ConsistencyReport:
    """Exact consistency of repeated responses for one feature.

    A prompt counts as consistent when all of its responses parse and
    imply the same property set; any unparseable response makes the prompt
    inconsistent and flags it.
    """
    relevant = [ex for ex in exchanges if ex.feature_id == feature_id]
    if not relevant:
        raise AgreementError(f"no exchanges for feature {feature_id!r}")
    groups = {(ex.model, ex.temperature) for ex in relevant}
    if len(groups) > 1:
        raise AgreementError(
            f"exchanges mix (model, temperature) groups {sorted(groups)}; "
            "filter before computing consistency"
        )
    model, temperature = groups.pop()
    consistent = 0
    flagged = 0
    for ex in relevant:
        sets = _response_sets(ex)
        if any(s is None for s in sets):
            flagged += 1
            continue
        if all(s == sets[0] for s in sets[1:]):
            consistent += 1
    return ConsistencyReport(
        feature_id=feature_id,
        model=model,
        temperature=temperature,
        exact_consistency=consistent / len(relevant),
        n_prompts=len(relevant),
        n_flagged=flagged,
    )


def consistency_by_group(exchanges: list[AssistantExchange]) -> list[ConsistencyReport]:
    """One ConsistencyReport per (feature, model, temperature) present."""
    keys = sorted({(ex.feature_id, ex.model, ex.temperature) for ex in exchanges})
    out = []
    for feature_id, model, temperature in keys:
        subset = [ex for ex in exchanges
                  if (ex.feature_id, ex.model, ex.temperature) == (feature_id, model, temperature)]
        out.append(intra_llm_consistency(subset, feature_id))
    return out


# -- rendering ------------------------------------------------------------

def _cell(value: float | None) -> str:
    return "--" if value is None else f"{value:.3f}"


def report_table(reports: list[AgreementReport],
                 consistency: list[ConsistencyReport] | None = None,
                 names: Mapping[str, str] | None = None) -> str:
    """Fixed-width table, one row per feature: K, J, E, then one column
    per (model, temperature) consistency group."""
    names = names or {}
    consistency = consistency or []
    groups = sorted({(c.model, c.temperature) for c in consistency})
    by_cell = {(c.feature_id, c.model, c.temperature): c for c in consistency}

    def display(feature_id: str) -> str:
        return names.get(feature_id, feature_id)

    header = ["Feature", "K", "J", "E"] + [f"{m}@{t}" for m, t in groups]
    rows = []
    for report in sorted(reports, key=lambda r: display(r.feature_id).lower()):
        row = [display(report.feature_id), _cell(report.krippendorff),
               _cell(report.jaccard), _cell(report.exact)]
        for model, temperature in groups:
            c = by_cell.get((report.feature_id, model, temperature))
            row.append(_cell(c.exact_consistency if c else None))
        rows.append(row)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip()]
    lines.append("  ".join("-" * w for w in widths).rstrip())
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def render_records(reports: list[AgreementReport],
                   consistency: list[ConsistencyReport] | None = None) -> str:
    """Machine-readable mirror of the table: one JSON record per line."""
    lines = []
    for report in sorted(reports, key=lambda r: r.feature_id):
        lines.append(json.dumps({
            "kind": "agreement",
            "feature_id": report.feature_id,
            "krippendorff": report.krippendorff,
            "jaccard": report.jaccard,
            "exact": report.exact,
            "n_units": report.n_units,
            "n_pairable": report.n_pairable,
        }, sort_keys=True, separators=(",", ":")))
    for c in sorted(consistency or [], key=lambda c: (c.feature_id, c.model, c.temperature)):
        lines.append(json.dumps({
            "kind": "consistency",
            "feature_id": c.feature_id,
            "model": c.model,
            "temperature": c.temperature,
            "exact_consistency": c.exact_consistency,
            "n_prompts": c.n_prompts,
            "n_flagged": c.n_flagged,
        }, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def render_figure(reports: list[AgreementReport],
                  consistency: list[ConsistencyReport] | None = None,
                  path: str = "agreement.png") -> str:
    """Box plots of per-feature score distributions, written to ``path``.

    One box per metric (K, J, E) plus one per (model, temperature)
    consistency group, mirroring the tabular report.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: list[tuple[str, list[float]]] = [
        ("K", [r.krippendorff for r in reports if r.krippendorff is not None]),
        ("J", [r.jaccard for r in reports if r.jaccard is not None]),
        ("E", [r.exact for r in reports if r.exact is not None]),
    ]
    groups = sorted({(c.model, c.temperature) for c in consistency or []})
    for model, temperature in groups:
        values = [c.exact_consistency for c in consistency
                  if (c.model, c.temperature) == (model, temperature)]
        series.append((f"{model}\n@{temperature}", values))
    series = [(label, values) for label, values in series if values]
    if not series:
        raise AgreementError("nothing to plot: all scores undefined")

    fig, ax = plt.subplots(figsize=(2 + 1.2 * len(series), 4))
    ax.boxplot([values for _, values in series],
               tick_labels=[label for label, _ in series])
    ax.set_ylabel("score")
    ax.set_title("Agreement and consistency across features")
    ax.grid(axis="y", linewidth=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
