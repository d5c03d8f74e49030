"""Inter-rater agreement statistics and disagreement mining.

Implements chance-corrected agreement for two raters (Cohen) and for a
fixed panel of n raters (Fleiss), plus confusion matrices, Landis-Koch
interpretation bands, per-criterion comparison of analyzer output
against human verdicts, and refinement hints mined from disagreements.

All math is plain double precision; degenerate chance agreement (p_e = 1)
is reported as DegenerateMarginalsError, never as NaN.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .quality_rules import CRITERIA, Criterion, QualityReport, Verdict
from .textmatch import tokens

AXIS_FNF = "FnF"

#: Fixed axis order: FnF first, then the seven criteria in canonical order.
AXES: tuple[str, ...] = (AXIS_FNF,) + tuple(c.value for c in CRITERIA)

_AXIS_INDEX = {axis: i for i, axis in enumerate(AXES)}

FNF_CATEGORIES = ("Functional", "NonFunctional")
VERDICT_CATEGORIES = ("Pass", "Fail")


def axis_sort_key(axis: str) -> tuple[int, str]:
    return (_AXIS_INDEX.get(axis, len(AXES)), axis)


def axis_categories(axis: str) -> tuple[str, ...]:
    return FNF_CATEGORIES if axis == AXIS_FNF else VERDICT_CATEGORIES


class AgreementError(Exception):
    pass


class WrongRaterCountError(AgreementError):
    def __init__(self, expected: str, got: int):
        super().__init__(f"expected {expected} raters, got {got}")


class DegenerateMarginalsError(AgreementError):
    def __init__(self):
        super().__init__("chance agreement is 1 (all ratings in a single category); kappa is undefined")


class NoOverlapError(AgreementError):
    def __init__(self, criterion: Criterion):
        super().__init__(f"no jointly assessable items for criterion {criterion.value}")
        self.criterion = criterion


class Band(str, Enum):
    POOR = "Poor"
    SLIGHT = "Slight"
    FAIR = "Fair"
    MODERATE = "Moderate"
    SUBSTANTIAL = "Substantial"
    ALMOST_PERFECT = "AlmostPerfect"


def interpretation_band(kappa: float) -> Band:
    """Landis-Koch thresholds: <0, 0-0.20, 0.21-0.40, 0.41-0.60, 0.61-0.80, 0.81-1.00."""
    if kappa < 0:
        return Band.POOR
    if kappa <= 0.20:
        return Band.SLIGHT
    if kappa <= 0.40:
        return Band.FAIR
    if kappa <= 0.60:
        return Band.MODERATE
    if kappa <= 0.80:
        return Band.SUBSTANTIAL
    return Band.ALMOST_PERFECT


@dataclass(frozen=True)
class AgreementStats:
    p_o: float
    p_e: float
    kappa: float
    n_items: int
    interpretation_band: Band


@dataclass(frozen=True)
class RaterMatrix:
    """Complete design: every (item, rater) cell labeled from category_set."""

    items: tuple[str, ...]
    raters: tuple[str, ...]
    category_set: tuple[str, ...]
    labels: dict[tuple[str, str], str]  # (item, rater) -> label

    def __post_init__(self):
        if not self.category_set:
            raise ValueError("category_set must be non-empty")
        if len(set(self.category_set)) != len(self.category_set):
            raise ValueError("category_set contains duplicates")
        if len(set(self.raters)) != len(self.raters):
            raise ValueError("raters contains duplicates")
        if len(set(self.items)) != len(self.items):
            raise ValueError("items contains duplicates")
        categories = set(self.category_set)
        for item in self.items:
            for rater in self.raters:
                label = self.labels.get((item, rater))
                if label is None:
                    raise ValueError(f"missing label for item {item!r}, rater {rater!r}")
                if label not in categories:
                    raise ValueError(f"label {label!r} not in category_set")

    def column(self, rater: str) -> list[str]:
        return [self.labels[(item, rater)] for item in self.items]


def matrix_from_columns(
    items: list[str], rater_a: str, labels_a: list[str], rater_b: str, labels_b: list[str],
    category_set: tuple[str, ...],
) -> RaterMatrix:
    labels = {}
    for item, la, lb in zip(items, labels_a, labels_b):
        labels[(item, rater_a)] = la
        labels[(item, rater_b)] = lb
    return RaterMatrix(
        items=tuple(items),
        raters=(rater_a, rater_b),
        category_set=category_set,
        labels=labels,
    )


def cohen_kappa(matrix: RaterMatrix) -> AgreementStats:
    """Two-rater chance-corrected agreement over nominal categories."""
    if len(matrix.raters) != 2:
        raise WrongRaterCountError("exactly 2", len(matrix.raters))
    n = len(matrix.items)
    if n < 1:
        raise AgreementError("need at least one item")
    col_a = matrix.column(matrix.raters[0])
    col_b = matrix.column(matrix.raters[1])
    agree = sum(1 for a, b in zip(col_a, col_b) if a == b)
    count_a = Counter(col_a)
    count_b = Counter(col_b)
    # p_e = 1 exactly iff both raters are constant on the same category.
    if len(count_a) == 1 and count_a == count_b:
        raise DegenerateMarginalsError()
    p_o = agree / n
    p_e = sum((count_a[c] / n) * (count_b[c] / n) for c in matrix.category_set)
    kappa = 1.0 if agree == n else (p_o - p_e) / (1.0 - p_e)
    return AgreementStats(p_o=p_o, p_e=p_e, kappa=kappa, n_items=n,
                          interpretation_band=interpretation_band(kappa))


def fleiss_kappa(matrix: RaterMatrix) -> AgreementStats:
    """Fleiss' kappa for n >= 2 raters, each rating every item."""
    n_raters = len(matrix.raters)
    if n_raters < 2:
        raise WrongRaterCountError("at least 2", n_raters)
    n_items = len(matrix.items)
    if n_items < 1:
        raise AgreementError("need at least one item")

    counts = []  # per item: Counter of category assignments
    for item in matrix.items:
        counts.append(Counter(matrix.labels[(item, rater)] for rater in matrix.raters))

    total = n_items * n_raters
    pooled = Counter()
    for c in counts:
        pooled.update(c)
    # Degenerate: every assignment in one category.
    if any(pooled[cat] == total for cat in matrix.category_set):
        raise DegenerateMarginalsError()

    per_item = [
        (sum(v * v for v in c.values()) - n_raters) / (n_raters * (n_raters - 1))
        for c in counts
    ]
    p_bar = sum(per_item) / n_items
    p_e = sum((pooled[cat] / total) ** 2 for cat in matrix.category_set)
    all_unanimous = all(len(c) == 1 for c in counts)
    kappa = 1.0 if all_unanimous else (p_bar - p_e) / (1.0 - p_e)
    return AgreementStats(p_o=p_bar, p_e=p_e, kappa=kappa, n_items=n_items,
                          interpretation_band=interpretation_band(kappa))


@dataclass(frozen=True)
class ConfusionMatrix:
    categories: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # counts[i][j]: rater1 said cat i, rater2 said cat j

    def get(self, cat_a: str, cat_b: str) -> int:
        return self.counts[self.categories.index(cat_a)][self.categories.index(cat_b)]

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "counts": [list(row) for row in self.counts],
        }


def confusion_matrix(matrix: RaterMatrix) -> ConfusionMatrix:
    if len(matrix.raters) != 2:
        raise WrongRaterCountError("exactly 2", len(matrix.raters))
    index = {c: i for i, c in enumerate(matrix.category_set)}
    size = len(matrix.category_set)
    grid = [[0] * size for _ in range(size)]
    rater_a, rater_b = matrix.raters
    for item in matrix.items:
        grid[index[matrix.labels[(item, rater_a)]]][index[matrix.labels[(item, rater_b)]]] += 1
    return ConfusionMatrix(categories=matrix.category_set, counts=tuple(tuple(row) for row in grid))


@dataclass(frozen=True)
class CriterionAgreement:
    criterion: Criterion
    stats: AgreementStats | None
    n_excluded: int
    error: str | None = None  # "NoOverlap" when nothing was jointly assessable


def per_criterion_agreement(
    ai_report: QualityReport,
    human: dict[tuple[str, Criterion], Verdict],
) -> dict[Criterion, CriterionAgreement]:
    """Cohen's kappa per criterion over Pass/Fail; NotAssessable items excluded."""
    results = {}
    for criterion in CRITERIA:
        ai_labels = {
            req_id: verdict
            for (req_id, c), verdict in ai_report.criterion_verdicts.items()
            if c == criterion
        }
        human_labels = {
            req_id: verdict for (req_id, c), verdict in human.items() if c == criterion
        }
        shared = sorted(set(ai_labels) & set(human_labels))
        usable = [
            req_id for req_id in shared
            if ai_labels[req_id] != Verdict.NOT_ASSESSABLE
            and human_labels[req_id] != Verdict.NOT_ASSESSABLE
        ]
        n_excluded = len(shared) - len(usable)
        if not usable:
            results[criterion] = CriterionAgreement(criterion, None, n_excluded, error="NoOverlap")
            continue
        matrix = matrix_from_columns(
            usable,
            "ai", [ai_labels[r].value for r in usable],
            "human", [human_labels[r].value for r in usable],
            VERDICT_CATEGORIES,
        )
        try:
            results[criterion] = CriterionAgreement(criterion, cohen_kappa(matrix), n_excluded)
        except DegenerateMarginalsError:
            results[criterion] = CriterionAgreement(criterion, None, n_excluded, error="DegenerateMarginals")
    return results


@dataclass(frozen=True)
class DisagreementCase:
    requirement_id: str
    axis: str  # "FnF" or a criterion name
    labels_by_rater: dict[str, str]
    rationale_excerpts: dict[str, str] = field(default_factory=dict)
    requirement_text: str = ""  # carried so hint mining can run from a cases file alone

    @property
    def case_id(self) -> str:
        return f"{self.axis}:{self.requirement_id}"


def mine_disagreements(
    matrices: dict[str, RaterMatrix],
    rationales: dict[tuple[str, str, str], str] | None = None,
    requirement_texts: dict[str, str] | None = None,
) -> list[DisagreementCase]:
    """One case per (axis, item) with non-unanimous labels, sorted by (axis, id).

    `matrices` maps axis name to a RaterMatrix; `rationales` maps
    (axis, item, rater) to that rater's stored justification.
    """
    rationales = rationales or {}
    requirement_texts = requirement_texts or {}
    cases = []
    for axis, matrix in matrices.items():
        for item in matrix.items:
            labels = {rater: matrix.labels[(item, rater)] for rater in matrix.raters}
            if len(set(labels.values())) < 2:
                continue
            excerpts = {
                rater: rationales[(axis, item, rater)]
                for rater in matrix.raters
                if (axis, item, rater) in rationales
            }
            cases.append(DisagreementCase(
                requirement_id=item,
                axis=axis,
                labels_by_rater=labels,
                rationale_excerpts=excerpts,
                requirement_text=requirement_texts.get(item, ""),
            ))
    cases.sort(key=lambda c: (axis_sort_key(c.axis), c.requirement_id))
    return cases


class HintKind(str, Enum):
    ADD_LEXICON_TERM = "AddLexiconTerm"
    PROMPT_CLARIFICATION = "PromptClarification"
    TAXONOMY_KEYWORD = "TaxonomyKeyword"


@dataclass(frozen=True)
class Hint:
    kind: HintKind
    payload: dict
    supporting_case_ids: tuple[str, ...]


_HINT_STOPWORDS = frozenset(
    "the a an of to and or in on at for with by shall must will should be is are was were "
    "system device data user staff that this it its from as not when if each".split()
)


def refinement_hints(
    cases: list[DisagreementCase],
    rules_config,
    taxonomy_config=None,
) -> list[Hint]:
    """Suggestions only; never auto-applied.

    - AddLexiconTerm: a token shared by >= k criterion-axis cases and absent
      from every configured lexicon.
    - TaxonomyKeyword: same mining over FnF-axis cases, against the keyword
      tables when a taxonomy config is supplied.
    - PromptClarification: a criterion axis accumulating >= k cases.
    """
    k = getattr(rules_config, "hint_min_support", 3)
    lexicon_terms = {
        term for name in ("vague", "unverifiable", "implementation", "absolutes")
        for term in rules_config.lexicon(name)
    }
    taxonomy_terms = taxonomy_config.all_keywords() if taxonomy_config is not None else set()

    criterion_cases = [c for c in cases if c.axis != AXIS_FNF]
    fnf_cases = [c for c in cases if c.axis == AXIS_FNF]

    hints: list[Hint] = []

    def shared_tokens(case_group: list[DisagreementCase], known: set[str]) -> dict[str, list[str]]:
        support: dict[str, list[str]] = {}
        for case in case_group:
            if not case.requirement_text:
                continue
            for token in set(tokens(case.requirement_text)):
                if len(token) < 2 or token in _HINT_STOPWORDS or token in known:
                    continue
                support.setdefault(token, []).append(case.case_id)
        return {t: ids for t, ids in support.items() if len(ids) >= k}

    for token, case_ids in sorted(shared_tokens(criterion_cases, lexicon_terms).items()):
        hints.append(Hint(
            kind=HintKind.ADD_LEXICON_TERM,
            payload={"term": token, "lexicon": "vague"},
            supporting_case_ids=tuple(sorted(case_ids)),
        ))
    for token, case_ids in sorted(shared_tokens(fnf_cases, taxonomy_terms).items()):
        hints.append(Hint(
            kind=HintKind.TAXONOMY_KEYWORD,
            payload={"keyword": token},
            supporting_case_ids=tuple(sorted(case_ids)),
        ))
    by_axis: dict[str, list[str]] = {}
    for case in criterion_cases:
        by_axis.setdefault(case.axis, []).append(case.case_id)
    for axis in sorted(by_axis, key=axis_sort_key):
        case_ids = by_axis[axis]
        if len(case_ids) >= k:
            hints.append(Hint(
                kind=HintKind.PROMPT_CLARIFICATION,
                payload={"criterion": axis, "n_cases": len(case_ids)},
                supporting_case_ids=tuple(sorted(case_ids)),
            ))
    return hints


# --- reports and files --------------------------------------------------------

@dataclass(frozen=True)
class AgreementReport:
    raters: tuple[str, ...]
    axis: str
    category_set: tuple[str, ...]
    stats: AgreementStats
    confusion: ConfusionMatrix | None  # 2-rater comparisons only
    disagreements: tuple[DisagreementCase, ...]
    n_excluded: int = 0


def build_agreement_report(
    matrix: RaterMatrix, axis: str = AXIS_FNF, n_excluded: int = 0,
    rationales: dict[tuple[str, str, str], str] | None = None,
) -> AgreementReport:
    two_raters = len(matrix.raters) == 2
    stats = cohen_kappa(matrix) if two_raters else fleiss_kappa(matrix)
    confusion = confusion_matrix(matrix) if two_raters else None
    disagreements = mine_disagreements({axis: matrix}, rationales)
    return AgreementReport(
        raters=matrix.raters,
        axis=axis,
        category_set=matrix.category_set,
        stats=stats,
        confusion=confusion,
        disagreements=tuple(disagreements),
        n_excluded=n_excluded,
    )


def stats_to_dict(stats: AgreementStats) -> dict:
    return {
        "p_o": stats.p_o,
        "p_e": stats.p_e,
        "kappa": stats.kappa,
        "n_items": stats.n_items,
        "interpretation_band": stats.interpretation_band.value,
    }


def case_to_dict(case: DisagreementCase) -> dict:
    return {
        "requirement_id": case.requirement_id,
        "axis": case.axis,
        "labels_by_rater": dict(sorted(case.labels_by_rater.items())),
        "rationale_excerpts": dict(sorted(case.rationale_excerpts.items())),
        "requirement_text": case.requirement_text,
    }


def case_from_dict(data: dict) -> DisagreementCase:
    return DisagreementCase(
        requirement_id=data["requirement_id"],
        axis=data["axis"],
        labels_by_rater=dict(data["labels_by_rater"]),
        rationale_excerpts=dict(data.get("rationale_excerpts", {})),
        requirement_text=data.get("requirement_text", ""),
    )


def report_to_dict(report: AgreementReport) -> dict:
    return {
        "raters": list(report.raters),
        "axis": report.axis,
        "category_set": list(report.category_set),
        "stats": stats_to_dict(report.stats),
        "confusion": report.confusion.to_dict() if report.confusion else None,
        "n_excluded": report.n_excluded,
        "disagreements": [case_to_dict(c) for c in report.disagreements],
    }


def report_to_json(report: AgreementReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_report_text(report: AgreementReport) -> str:
    """Human-readable table for terminal output."""
    lines = [
        f"raters: {report.raters[0]} vs {report.raters[1] if len(report.raters) == 2 else f'{len(report.raters)} raters'}",
        f"axis: {report.axis}",
        f"n_items: {report.stats.n_items}    n_excluded: {report.n_excluded}",
        f"observed agreement (p_o): {report.stats.p_o:.6f}",
        f"chance agreement  (p_e): {report.stats.p_e:.6f}",
        f"kappa: {report.stats.kappa:.6f}    band: {report.stats.interpretation_band.value}",
    ]
    if report.confusion is not None:
        cats = report.confusion.categories
        width = max(len(c) for c in cats) + 2
        header = " " * width + "".join(c.rjust(width) for c in cats)
        lines.append("confusion (rows: first rater, cols: second rater):")
        lines.append(header)
        for i, cat in enumerate(cats):
            row = cat.rjust(width) + "".join(str(n).rjust(width) for n in report.confusion.counts[i])
            lines.append(row)
    if report.disagreements:
        lines.append(f"disagreements: {len(report.disagreements)}")
        for case in report.disagreements:
            labels = ", ".join(f"{r}={l}" for r, l in sorted(case.labels_by_rater.items()))
            lines.append(f"  {case.requirement_id}: {labels}")
    else:
        lines.append("disagreements: none")
    return "\n".join(lines) + "\n"


# --- rater export files -------------------------------------------------------

RATER_EXPORT_SCHEMA = "rater-export.v1"


def rater_export_to_dict(
    rater_id: str, corpus: str, axes: dict[str, dict[str, str]], complete: bool = True,
    rationales: dict[str, dict[str, str]] | None = None,
) -> dict:
    """Single-rater labels, grouped by axis; loadable by `load_rater_export`."""
    payload_axes = {}
    for axis in sorted(axes, key=axis_sort_key):
        payload_axes[axis] = {
            "category_set": list(axis_categories(axis)),
            "labels": dict(sorted(axes[axis].items())),
        }
        if rationales and axis in rationales:
            payload_axes[axis]["rationales"] = dict(sorted(rationales[axis].items()))
    n_labeled = sum(len(v) for v in axes.values())
    return {
        "schema": RATER_EXPORT_SCHEMA,
        "rater_id": rater_id,
        "corpus": corpus,
        "complete": complete,
        "n_labeled": n_labeled,
        "axes": payload_axes,
    }


@dataclass(frozen=True)
class RaterExport:
    rater_id: str
    corpus: str
    complete: bool
    axes: dict[str, dict[str, str]]  # axis -> item -> label
    rationales: dict[str, dict[str, str]]  # axis -> item -> rationale


def load_rater_export(path: str | Path) -> RaterExport:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema") != RATER_EXPORT_SCHEMA:
        raise ValueError(f"not a {RATER_EXPORT_SCHEMA} file: {path}")
    axes = {axis: dict(body["labels"]) for axis, body in data["axes"].items()}
    rationales = {
        axis: dict(body.get("rationales", {})) for axis, body in data["axes"].items()
    }
    return RaterExport(
        rater_id=data["rater_id"],
        corpus=data.get("corpus", ""),
        complete=bool(data.get("complete", True)),
        axes=axes,
        rationales=rationales,
    )


def matrix_from_exports(
    export_a: RaterExport, export_b: RaterExport, axis: str
) -> tuple[RaterMatrix, int, dict[tuple[str, str, str], str]]:
    """Two-rater matrix over the shared item set; returns n_excluded too."""
    labels_a = export_a.axes.get(axis)
    labels_b = export_b.axes.get(axis)
    if labels_a is None or labels_b is None:
        missing = export_a.rater_id if labels_a is None else export_b.rater_id
        raise ValueError(f"rater {missing!r} has no labels for axis {axis!r}")
    shared = sorted(set(labels_a) & set(labels_b))
    n_excluded = len(set(labels_a) | set(labels_b)) - len(shared)
    if not shared:
        raise AgreementError(f"no shared items between raters on axis {axis!r}")
    rater_a, rater_b = export_a.rater_id, export_b.rater_id
    if rater_a == rater_b:
        rater_b = rater_b + " (b)"
    matrix = matrix_from_columns(
        shared,
        rater_a, [labels_a[i] for i in shared],
        rater_b, [labels_b[i] for i in shared],
        axis_categories(axis),
    )
    rationales = {}
    for export, rater in ((export_a, rater_a), (export_b, rater_b)):
        for item, text in export.rationales.get(axis, {}).items():
            rationales[(axis, item, rater)] = text
    return matrix, n_excluded, rationales
