"""Experiment protocol: splits, query formation, quality metrics, reports.

``run_experiment`` reproduces the offline protocol: split the corpus,
form k-input queries from the test transactions, build the configured
source database(s), mine what the method needs, answer every query, and
average precision/success/reciprocal-rank over all queries of all folds.
Wall time covers the recommendation phase (source building, mining and
query answering); corpus loading and query formation are excluded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .corpus import GroupIndex, Query, SocialGraph, TagDatabase, Transaction
from .errors import ConfigError, EmptyDatabaseError
from .miner import MiningParams
from .recommend import Recommendation, RecommenderConfig, fit_recommender
from .social import (
    Batch,
    BatchPolicy,
    SourceSelection,
    form_batches,
    route_community,
    select_batched,
    select_community,
    select_personomy,
    select_social_personomy,
    select_uk,
)

__all__ = [
    "EvalConfig",
    "MetricsReport",
    "split",
    "make_query",
    "score",
    "run_experiment",
    "emit_report",
    "parse_report",
]

SPLITS = ("cv5", "holdout40")


@dataclass(frozen=True)
class EvalConfig:
    k: int
    method: RecommenderConfig
    source: SourceSelection
    split: str = "cv5"
    seed: int = 0
    at_ranks: Tuple[int, ...] = (1, 3, 5)
    folds: int = 5
    input_tag_strategy: str = "random"  # or "most-frequent-first"
    min_transactions: int = 0            # fall back to ck at or below this size
    min_group_transactions: int = 1
    batch_policy: Optional[BatchPolicy] = None  # None: the whole test set is one batch

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        if self.input_tag_strategy not in ("random", "most-frequent-first"):
            raise ConfigError(f"unknown input tag strategy {self.input_tag_strategy!r}")


def split(db: TagDatabase, mode: str, seed: int, folds: int = 5) -> List[Tuple[TagDatabase, TagDatabase]]:
    """Train/test splits: disjoint folds for cv5 (every transaction tested
    exactly once), five independent seeded 40/60 splits for holdout40."""
    n = len(db)
    if n < folds:
        raise EmptyDatabaseError(f"cannot split {n} transactions into {folds} folds")
    out = []
    if mode == "cv5":
        perm = np.random.default_rng([seed, 0]).permutation(n)
        bounds = np.linspace(0, n, folds + 1).astype(int)
        for f in range(folds):
            test_idx = sorted(int(i) for i in perm[bounds[f]:bounds[f + 1]])
            test_set = set(test_idx)
            train_idx = [i for i in range(n) if i not in test_set]
            out.append((db.sub(train_idx), db.sub(test_idx)))
    elif mode == "holdout40":
        n_test = int(round(0.4 * n))
        for f in range(folds):
            perm = np.random.default_rng([seed, f]).permutation(n)
            test_idx = sorted(int(i) for i in perm[:n_test])
            test_set = set(test_idx)
            train_idx = [i for i in range(n) if i not in test_set]
            out.append((db.sub(train_idx), db.sub(test_idx)))
    else:
        raise ConfigError(f"unknown split {mode!r}")
    return out


def make_query(
    transaction: Transaction,
    k: int,
    seed: Optional[int] = None,
    rng=None,
    strategy: str = "random",
    tag_support=None,
):
    """Turn a test transaction into (query, ground_truth), or None when the
    transaction has no tags left to predict (fewer than k+1 tags)."""
    tags = sorted(transaction.tags)
    if len(tags) < k + 1:
        return None
    if strategy == "most-frequent-first":
        if tag_support is None:
            raise ConfigError("most-frequent-first needs tag supports")
        chosen = sorted(tags, key=lambda t: (-tag_support[t], t))[:k]
    else:
        if rng is None:
            rng = np.random.default_rng(seed)
        picked = rng.choice(len(tags), size=k, replace=False)
        chosen = [tags[int(i)] for i in picked]
    input_tags = frozenset(chosen)
    truth = frozenset(tags) - input_tags
    query = Query(user=transaction.user, input=input_tags, interest=transaction.interest)
    return query, truth


def score(recommendation: Recommendation, truth: frozenset, at_ranks=(1, 3, 5)) -> dict:
    """Per-query metrics: P@r, S@r over the emitted list, reciprocal rank."""
    if not truth:
        raise ConfigError("ground truth is empty")
    ranked = recommendation.tags()
    p_at = {}
    s_at = {}
    for r in at_ranks:
        top = ranked[:r]
        hits = sum(1 for t in top if t in truth)
        p_at[r] = hits / r
        s_at[r] = 1.0 if hits else 0.0
    rr = 0.0
    for pos, t in enumerate(ranked):
        if t in truth:
            rr = 1.0 / (pos + 1)
            break
    return {"p_at": p_at, "s_at": s_at, "rr": rr}


@dataclass
class MetricsReport:
    k: int
    method: str
    source: str
    degree: Optional[int]
    split: str
    seed: int
    n_folds: int
    n_queries: int
    n_skipped: int
    tagsets_mined: float        # mean per fold
    p_at: dict
    s_at: dict
    mrr: float
    time_ms_total: float
    time_ms_per_query: float
    frac_uk: float              # mean |D| / |same-interest training data|, percent
    frac_ck: float              # mean |D| / |training data|, percent
    mining_invocations: int
    n_batches: int


class _Unit:
    """One (source database, queries) mining unit."""

    __slots__ = ("db", "items")

    def __init__(self, db: TagDatabase, items):
        self.db = db
        self.items = items  # list of (query, truth)


def _plan_units(config: EvalConfig, train: TagDatabase, graph, groups, items) -> Tuple[List[_Unit], int]:
    """Group (query, truth) pairs into mining units per the source kind.

    Returns (units, batch_count).  Batched kinds get one unit per batch;
    uk deduplicates identical selections; personomy-style kinds and the
    grouped side of community-batched stay one unit per query.
    """
    sel = config.source
    kind = sel.kind
    if kind == "ck":
        return [_Unit(train, items)], 0

    def fallback(indices):
        return None if len(indices) <= config.min_transactions else indices

    if kind == "uk":
        if graph is None:
            raise ConfigError("source 'uk' requires a social graph")
        by_selection: dict = {}
        for q, truth in items:
            indices = fallback(select_uk(train, graph, q, sel.degree, sel.interest_filter))
            key = indices if indices is not None else "ck"
            by_selection.setdefault(key, []).append((q, truth))
        units = []
        for key, qs in by_selection.items():
            units.append(_Unit(train if key == "ck" else train.sub(key), qs))
        return units, 0

    if kind in ("personomy", "social-personomy"):
        if kind == "social-personomy" and graph is None:
            raise ConfigError("source 'social-personomy' requires a social graph")
        units = []
        for q, truth in items:
            if kind == "personomy":
                indices = select_personomy(train, q.user)
            else:
                indices = select_social_personomy(train, graph, q.user, sel.degree)
            indices = fallback(indices)
            units.append(_Unit(train if indices is None else train.sub(indices), [(q, truth)]))
        return units, 0

    if kind in ("batched", "social-batched"):
        if kind == "social-batched" and graph is None:
            raise ConfigError("source 'social-batched' requires a social graph")
        policy = config.batch_policy or BatchPolicy(max_queries=max(1, len(items)))
        truth_of = {id(q): t for q, t in items}
        units = []
        n_batches = 0
        for batch in form_batches([q for q, _ in items], policy):
            n_batches += 1
            degree = sel.degree if kind == "social-batched" else None
            indices = select_batched(train, batch.users(), graph, degree)
            indices = fallback(indices)
            units.append(
                _Unit(
                    train if indices is None else train.sub(indices),
                    [(q, truth_of[id(q)]) for q in batch.queries],
                )
            )
        return units, n_batches

    if kind == "community-batched":
        if groups is None:
            raise ConfigError("source 'community-batched' requires a groups file")
        truth_of = {id(q): t for q, t in items}
        grouped, ungrouped = route_community(
            [q for q, _ in items], groups, config.min_group_transactions
        )
        units = []
        for q in grouped:
            indices = fallback(select_community(train, groups, q.user))
            units.append(_Unit(train if indices is None else train.sub(indices), [(q, truth_of[id(q)])]))
        n_batches = 0
        if ungrouped:
            policy = config.batch_policy or BatchPolicy(max_queries=max(1, len(ungrouped)))
            for batch in form_batches(ungrouped, policy):
                n_batches += 1
                units.append(_Unit(train, [(q, truth_of[id(q)]) for q in batch.queries]))
        return units, n_batches

    raise ConfigError(f"unknown source kind {kind!r}")


def run_experiment(
    db: TagDatabase,
    config: EvalConfig,
    graph: Optional[SocialGraph] = None,
    groups: Optional[GroupIndex] = None,
) -> MetricsReport:
    """Run the full protocol and aggregate means over all queries of all folds."""
    folds = split(db, config.split, config.seed, config.folds)
    sums = {r: 0.0 for r in config.at_ranks}
    sums_s = {r: 0.0 for r in config.at_ranks}
    sum_rr = 0.0
    sum_frac_uk = 0.0
    sum_frac_ck = 0.0
    n_queries = 0
    n_skipped = 0
    tagsets_total = 0
    mining_invocations = 0
    n_batches = 0
    total_seconds = 0.0

    for fold_i, (train, test) in enumerate(folds):
        if len(train) == 0:
            raise EmptyDatabaseError(f"fold {fold_i}: empty training partition")
        train_groups = groups.for_database(train) if groups is not None else None
        rng = np.random.default_rng([config.seed, fold_i, 977])
        tag_support = None
        if config.input_tag_strategy == "most-frequent-first":
            tag_support = [m.bit_count() for m in train.tag_masks]
        items = []
        for tx in test.transactions:
            made = make_query(
                tx, config.k, rng=rng,
                strategy=config.input_tag_strategy, tag_support=tag_support,
            )
            if made is None:
                n_skipped += 1
            else:
                items.append(made)

        t0 = time.perf_counter()
        try:
            units, fold_batches = _plan_units(config, train, graph, train_groups, items)
            n_batches += fold_batches
            for unit in units:
                fitted = fit_recommender(unit.db, config.method)
                mining_invocations += 1
                tagsets_total += fitted.tagsets_mined
                size = len(unit.db)
                for q, truth in unit.items:
                    rec = fitted.recommend(q)
                    qs = score(rec, truth, config.at_ranks)
                    for r in config.at_ranks:
                        sums[r] += qs["p_at"][r]
                        sums_s[r] += qs["s_at"][r]
                    sum_rr += qs["rr"]
                    den_uk = train.interest_counts.get(q.interest, 0) if q.interest else 0
                    if den_uk <= 0:
                        den_uk = len(train)
                    sum_frac_uk += 100.0 * size / den_uk
                    sum_frac_ck += 100.0 * size / len(train)
                    n_queries += 1
        except Exception as exc:
            raise type(exc)(f"fold {fold_i}: {exc}") from exc
        total_seconds += time.perf_counter() - t0

    nq = max(1, n_queries)
    return MetricsReport(
        k=config.k,
        method=config.method.method,
        source=config.source.kind,
        degree=config.source.degree,
        split=config.split,
        seed=config.seed,
        n_folds=len(folds),
        n_queries=n_queries,
        n_skipped=n_skipped,
        tagsets_mined=tagsets_total / len(folds),
        p_at={r: sums[r] / nq for r in config.at_ranks},
        s_at={r: sums_s[r] / nq for r in config.at_ranks},
        mrr=sum_rr / nq,
        time_ms_total=total_seconds * 1000.0,
        time_ms_per_query=total_seconds * 1000.0 / nq,
        frac_uk=sum_frac_uk / nq,
        frac_ck=sum_frac_ck / nq,
        mining_invocations=mining_invocations,
        n_batches=n_batches,
    )


# ---------------------------------------------------------------------------
# report emission


def _report_columns(report: MetricsReport) -> List[str]:
    ranks = sorted(report.p_at)
    cols = ["k", "method", "source", "n_tagsets"]
    cols += [f"p{r}" for r in ranks]
    cols += [f"s{r}" for r in ranks if r != 1]
    cols += ["mrr", "time_ms", "frac_uk", "frac_ck"]
    cols += [
        "degree", "split", "seed", "n_folds", "n_queries", "n_skipped",
        "per_query_ms", "mining_invocations", "n_batches",
    ]
    return cols


def _report_values(report: MetricsReport, markdown: bool) -> List[str]:
    ranks = sorted(report.p_at)

    def pct(x):  # metric fractions as percentages, table style
        return f"{100.0 * x:.2f}" if markdown else repr(x)

    def frac(x):
        return f"{x:.1f}" if markdown else repr(x)

    vals = [str(report.k), report.method, report.source]
    vals.append(str(int(round(report.tagsets_mined))) if markdown else repr(report.tagsets_mined))
    vals += [pct(report.p_at[r]) for r in ranks]
    vals += [pct(report.s_at[r]) for r in ranks if r != 1]
    vals.append(pct(report.mrr))
    vals.append(str(int(round(report.time_ms_total))) if markdown else repr(report.time_ms_total))
    vals += [frac(report.frac_uk), frac(report.frac_ck)]
    vals += [
        "" if report.degree is None else str(report.degree),
        report.split,
        str(report.seed),
        str(report.n_folds),
        str(report.n_queries),
        str(report.n_skipped),
        f"{report.time_ms_per_query:.2f}" if markdown else repr(report.time_ms_per_query),
        str(report.mining_invocations),
        str(report.n_batches),
    ]
    return vals


def emit_report(reports, format: str = "tsv") -> str:
    """Render one report or a list of reports; tsv is lossless (see
    ``parse_report``), markdown renders percentages in table style."""
    if isinstance(reports, MetricsReport):
        reports = [reports]
    if not reports:
        return ""
    if format not in ("tsv", "markdown"):
        raise ConfigError(f"unknown format {format!r}")
    cols = _report_columns(reports[0])
    for r in reports[1:]:
        if _report_columns(r) != cols:
            raise ConfigError("reports in one table must share their rank columns")
    if format == "tsv":
        lines = ["\t".join(cols)]
        lines += ["\t".join(_report_values(r, markdown=False)) for r in reports]
        return "\n".join(lines) + "\n"
    header = "| " + " | ".join(cols) + " |"
    sep = "|" + "|".join(["---"] * len(cols)) + "|"
    rows = ["| " + " | ".join(_report_values(r, markdown=True)) + " |" for r in reports]
    return "\n".join([header, sep] + rows) + "\n"


def parse_report(text: str) -> List[MetricsReport]:
    """Parse the tsv emitted by emit_report back into equal reports."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        return []
    cols = lines[0].split("\t")
    ranks = sorted(int(c[1:]) for c in cols if c.startswith("p") and c[1:].isdigit())
    out = []
    for line in lines[1:]:
        row = dict(zip(cols, line.split("\t")))
        p_at = {r: float(row[f"p{r}"]) for r in ranks}
        s_at = {r: float(row[f"s{r}"]) for r in ranks if r != 1}
        if 1 in ranks:
            s_at[1] = p_at[1]  # success and precision coincide at rank 1
        out.append(
            MetricsReport(
                k=int(row["k"]),
                method=row["method"],
                source=row["source"],
                degree=None if row["degree"] == "" else int(row["degree"]),
                split=row["split"],
                seed=int(row["seed"]),
                n_folds=int(row["n_folds"]),
                n_queries=int(row["n_queries"]),
                n_skipped=int(row["n_skipped"]),
                tagsets_mined=float(row["n_tagsets"]),
                p_at=p_at,
                s_at=s_at,
                mrr=float(row["mrr"]),
                time_ms_total=float(row["time_ms"]),
                time_ms_per_query=float(row["per_query_ms"]),
                frac_uk=float(row["frac_uk"]),
                frac_ck=float(row["frac_ck"]),
                mining_invocations=int(row["mining_invocations"]),
                n_batches=int(row["n_batches"]),
            )
        )
    return out
