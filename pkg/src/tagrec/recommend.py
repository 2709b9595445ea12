"""The three association recommenders: pairwise, any-length exact, estimated.

All three share candidate generation (union of the input tags' top-m
co-occurrence lists, minus the input) and the pairwise scoring term, so
quality differences isolate the probability source:

* ``recommend_par``  — pairwise conditionals from the top-m lists only.
* ``recommend_nar``  — adds exact conditionals P(c|X) for subsets X of the
  input with 2 <= |X|, supports read from the closed tagset collection.
* ``recommend_far``  — same structure, but those conditionals come from
  code-table support estimates.

For single-tag queries only the pairwise term exists, so the three methods
return identical rankings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

from .codetable import CodeTable, estimate_support, induce
from .corpus import Query, TagDatabase
from .errors import InvalidQueryError
from .miner import (
    CooccurrenceIndex,
    FrequentTagsetCollection,
    MiningParams,
    build_cooccurrence,
    mine_closed,
)

__all__ = [
    "Recommendation",
    "RecommenderConfig",
    "recommend_par",
    "recommend_nar",
    "recommend_far",
    "FittedRecommender",
    "fit_recommender",
]

METHODS = ("par", "nar", "far")


@dataclass(frozen=True)
class RecommenderConfig:
    """Which method to run and with which mining parameters.

    ``ct_mining`` configures the candidate pool for code-table induction
    (used by far only); when absent, ``mining`` is reused.
    """

    method: str
    mining: MiningParams
    ct_mining: Optional[MiningParams] = None
    max_recommendations: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidQueryError(f"unknown method {self.method!r}; expected one of {METHODS}")

    @property
    def ct_params(self) -> MiningParams:
        return self.ct_mining or self.mining


@dataclass
class Recommendation:
    """Ranked (tag, score) items; never contains an input tag."""

    items: List[Tuple[int, float]]
    query: Query

    def tags(self) -> List[int]:
        return [t for t, _ in self.items]

    def labels(self, vocab) -> List[str]:
        return [vocab.label(t) for t, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


def _check_query(query: Query) -> None:
    if not query.input:
        raise InvalidQueryError("input tagset is empty")


def _pairwise_scores(index: CooccurrenceIndex, input_tags) -> dict:
    """score(c) = sum over t in I with c in t's top list of joint(t,c)/sup(t)."""
    scores: dict = {}
    for t in sorted(input_tags):
        sup_t = index.tag_support[t] if t < len(index.tag_support) else 0
        if sup_t <= 0:
            continue
        for c, joint in index.top(t):
            if c in input_tags:
                continue
            scores[c] = scores.get(c, 0.0) + joint / sup_t
    return scores


def _ranked(scores: dict, index: CooccurrenceIndex, query: Query, limit: int) -> Recommendation:
    # ties: collective tag support descending, then tag id ascending
    ordered = sorted(
        scores.items(),
        key=lambda cs: (-cs[1], -index.tag_support[cs[0]], cs[0]),
    )
    return Recommendation(items=ordered[:limit], query=query)


def recommend_par(index: CooccurrenceIndex, query: Query, limit: int = 5) -> Recommendation:
    """Pairwise recommender over the top-m co-occurrence lists."""
    _check_query(query)
    scores = _pairwise_scores(index, query.input)
    return _ranked(scores, index, query, limit)


def _subsets(input_tags, max_size: int):
    tags = sorted(input_tags)
    for size in range(2, max_size + 1):
        yield from combinations(tags, size)


def recommend_nar(
    index: CooccurrenceIndex,
    f: FrequentTagsetCollection,
    db: TagDatabase,
    query: Query,
    limit: int = 5,
) -> Recommendation:
    """Any-length recommender: exact conditionals from the mined collection.

    Associations are consulted up to length min(max_len, |I|+1): the
    pairwise term serves |X| = 1 (top-m augmentation), the collection
    serves 2 <= |X| <= max_len - 1; missing supports contribute 0.
    """
    _check_query(query)
    for t in query.input:
        if t >= len(db.vocabulary):
            raise InvalidQueryError(f"tag id {t} outside vocabulary")
    scores = _pairwise_scores(index, query.input)
    cap = min(f.params.max_len - 1, len(query.input))
    if cap >= 2:
        denominators = {
            x: f.support_of(x) for x in _subsets(query.input, cap)
        }
        for c in list(scores):
            add = 0.0
            for x, sup_x in denominators.items():
                if sup_x <= 0:
                    continue
                sup_xc = f.support_of(x + (c,))
                if sup_xc > 0:
                    add += sup_xc / sup_x
            if add:
                scores[c] += add
    return _ranked(scores, index, query, limit)


def recommend_far(
    index: CooccurrenceIndex,
    ct: CodeTable,
    query: Query,
    limit: int = 5,
) -> Recommendation:
    """Code-table recommender: conditionals for |X| >= 2 are ratios of
    support estimates, contributing 0 whenever the denominator estimate
    is 0; the |X| = 1 terms are the pairwise ones."""
    _check_query(query)
    scores = _pairwise_scores(index, query.input)
    cap = min(len(query.input), max(1, ct.max_element_size - 1))
    if cap >= 2:
        denominators = {
            x: estimate_support(ct, x) for x in _subsets(query.input, cap)
        }
        for c in list(scores):
            add = 0.0
            for x, est_x in denominators.items():
                if est_x <= 0:
                    continue
                est_xc = estimate_support(ct, x + (c,))
                if est_xc > 0:
                    add += est_xc / est_x
            if add:
                scores[c] += add
    return _ranked(scores, index, query, limit)


# ---------------------------------------------------------------------------
# facade: mine whatever the method needs from one source database


@dataclass
class FittedRecommender:
    """Mined artifacts for one source database, ready to answer queries."""

    method: str
    db: TagDatabase
    index: CooccurrenceIndex
    tagsets: Optional[FrequentTagsetCollection] = None
    codetable: Optional[CodeTable] = None
    limit: int = 5

    @property
    def tagsets_mined(self) -> int:
        if self.method == "nar":
            return len(self.tagsets) if self.tagsets is not None else 0
        if self.method == "far":
            return len(self.codetable) if self.codetable is not None else 0
        return 0

    def recommend(self, query: Query) -> Recommendation:
        if self.method == "par":
            return recommend_par(self.index, query, self.limit)
        if self.method == "nar":
            return recommend_nar(self.index, self.tagsets, self.db, query, self.limit)
        return recommend_far(self.index, self.codetable, query, self.limit)


def fit_recommender(db: TagDatabase, config: RecommenderConfig) -> FittedRecommender:
    """Build the per-source artifacts the configured method requires."""
    index = build_cooccurrence(db, config.mining.top_m)
    tagsets = None
    ct = None
    if config.method == "nar":
        tagsets = mine_closed(db, config.mining)
    elif config.method == "far":
        candidates = mine_closed(db, config.ct_params)
        ct = induce(db, candidates)
    return FittedRecommender(
        method=config.method,
        db=db,
        index=index,
        tagsets=tagsets,
        codetable=ct,
        limit=config.max_recommendations,
    )
