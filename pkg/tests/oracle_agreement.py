"""Independent brute-force agreement oracle.

Deliberately naive: explicit contingency-table loops, no shared code
with the package. Degenerate chance agreement is returned as None.
"""

from __future__ import annotations


def oracle_confusion(labels_a: list[str], labels_b: list[str], categories: list[str]) -> list[list[int]]:
    table = [[0 for _ in categories] for _ in categories]
    for a, b in zip(labels_a, labels_b):
        table[categories.index(a)][categories.index(b)] += 1
    return table


def oracle_cohen(labels_a: list[str], labels_b: list[str], categories: list[str]):
    """(p_o, p_e, kappa) by direct tally, or None when p_e == 1."""
    n = len(labels_a)
    table = oracle_confusion(labels_a, labels_b, categories)
    agree = 0
    for i in range(len(categories)):
        agree += table[i][i]
    p_o = agree / n

    p_e = 0.0
    degenerate = True
    for i, cat in enumerate(categories):
        row_total = 0
        col_total = 0
        for j in range(len(categories)):
            row_total += table[i][j]
            col_total += table[j][i]
        p_e += (row_total / n) * (col_total / n)
        # p_e hits exactly 1 only when one category holds every rating on both sides.
        if not (row_total == n and col_total == n) and (row_total or col_total):
            degenerate = False
    if degenerate:
        return None
    if agree == n:
        return (1.0, p_e, 1.0)
    return (p_o, p_e, (p_o - p_e) / (1.0 - p_e))


def oracle_fleiss(rows: list[list[str]], categories: list[str]):
    """(p_bar, p_e_bar, kappa) from per-item label lists, or None when degenerate."""
    n_items = len(rows)
    n_raters = len(rows[0])
    counts = []
    for labels in rows:
        row = [0 for _ in categories]
        for label in labels:
            row[categories.index(label)] += 1
        counts.append(row)

    totals = [0 for _ in categories]
    for row in counts:
        for j, c in enumerate(row):
            totals[j] += c
    grand = n_items * n_raters
    if any(t == grand for t in totals):
        return None

    p_item = []
    for row in counts:
        s = 0
        for c in row:
            s += c * c
        p_item.append((s - n_raters) / (n_raters * (n_raters - 1)))
    p_bar = sum(p_item) / n_items
    p_e_bar = sum((t / grand) ** 2 for t in totals)
    if all(abs(p - 1.0) < 1e-15 for p in p_item):
        return (1.0, p_e_bar, 1.0)
    return (p_bar, p_e_bar, (p_bar - p_e_bar) / (1.0 - p_e_bar))
