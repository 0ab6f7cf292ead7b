"""Independent brute-force reference implementations for the metric tests.

Deliberately naive and structurally different from the library code:
alpha is evaluated from an explicit dense coincidence matrix with separate
D_o/D_e computation; jaccard/exact are plain nested loops. Nothing here
imports the package's agreement module.
"""
from __future__ import annotations

from itertools import combinations

ABSENT = object()  # local sentinel; oracle inputs use plain dicts


def oracle_label(value) -> str:
    return "|".join(sorted(value))


def oracle_alpha(units: list[dict]) -> float | None:
    """units: list of {annotator: set-of-properties} (absent = missing key)."""
    # collect pairable labels
    label_lists = []
    for unit in units:
        labels = [oracle_label(v) for v in unit.values()]
        if len(labels) >= 2:
            label_lists.append(labels)
    values = sorted({label for labels in label_lists for label in labels})
    if not values:
        return None
    index = {v: i for i, v in enumerate(values)}
    size = len(values)
    matrix = [[0.0] * size for _ in range(size)]
    for labels in label_lists:
        m = len(labels)
        for a, b in ((x, y) for x in range(m) for y in range(m) if x != y):
            matrix[index[labels[a]]][index[labels[b]]] += 1.0 / (m - 1)
    n_c = [sum(matrix[i]) for i in range(size)]
    n = sum(n_c)
    if n < 2:
        return None
    d_o = sum(matrix[i][j] for i in range(size) for j in range(size) if i != j) / n
    d_e = sum(n_c[i] * n_c[j] for i in range(size) for j in range(size) if i != j) \
        / (n * (n - 1))
    if d_e == 0:
        return None
    return 1.0 - d_o / d_e


def oracle_jaccard(units: list[dict]) -> float | None:
    scores = []
    for unit in units:
        sets = list(unit.values())
        if len(sets) < 2:
            continue
        pair_scores = []
        for a, b in combinations(sets, 2):
            if not a and not b:
                pair_scores.append(1.0)
            else:
                pair_scores.append(len(set(a) & set(b)) / len(set(a) | set(b)))
        scores.append(sum(pair_scores) / len(pair_scores))
    if not scores:
        return None
    return sum(scores) / len(scores)


def oracle_exact(units: list[dict]) -> float | None:
    total = 0
    hits = 0
    for unit in units:
        sets = [frozenset(v) for v in unit.values()]
        if len(sets) < 2:
            continue
        total += 1
        if len(set(sets)) == 1:
            hits += 1
    if total == 0:
        return None
    return hits / total
