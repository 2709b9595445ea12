"""Code tables: MDL-selected tagsets with usage counts, and support estimation.

A code table is an ordered list of (tagset, usage) pairs containing at
least every singleton that occurs in its source database.  Elements are
kept in Standard Cover Order (length desc, support-in-source desc,
lexicographic), transactions are covered greedily in that order, and a
candidate tagset joins the table only if it strictly shrinks the total
encoded size of database plus table.

Support of an arbitrary tagset is then estimated as the summed usage of
the elements containing it, which never exceeds the true support: cover
elements are item-disjoint within one transaction, so each usage unit
counted corresponds to a distinct transaction containing the tagset.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from typing import Iterable, List, Optional, Tuple

from .corpus import TagDatabase, TagVocabulary
from .errors import EmptyDatabaseError, UncoverableTagError
from .miner import FrequentTagsetCollection, iter_bits

__all__ = [
    "CodeTable",
    "cover",
    "induce",
    "estimate_support",
    "encoded_size",
    "singleton_table",
]

_EPS = 1e-9


class _Entry:
    __slots__ = ("tags", "key", "size", "support", "usage", "okey")

    def __init__(self, tags: frozenset, support: int, usage: int = 0):
        self.tags = tags
        self.key = tuple(sorted(tags))
        self.size = len(tags)
        self.support = support
        self.usage = usage
        # Standard Cover Order key
        self.okey = (-self.size, -self.support, self.key)


class CodeTable:
    """Ordered (tagset, usage) elements plus bookkeeping totals.

    ``elements`` is a list of (frozenset, usage) pairs in Standard Cover
    Order.  ``encoded_sizes`` traces the accepted total encoded sizes
    during induction (empty for hand-built or deserialized tables).
    """

    def __init__(
        self,
        elements: Iterable[Tuple[frozenset, int]],
        total_usage: int,
        source_db_size: int,
        encoded_sizes: Tuple[float, ...] = (),
    ):
        self.elements = [(frozenset(tags), int(usage)) for tags, usage in elements]
        self.total_usage = total_usage
        self.source_db_size = source_db_size
        self.encoded_sizes = tuple(encoded_sizes)
        self.max_element_size = max((len(t) for t, _ in self.elements), default=0)
        self._by_tag: Optional[dict] = None
        self._estimate_memo: dict = {}

    @classmethod
    def from_elements(cls, pairs, source_db_size: int) -> "CodeTable":
        pairs = list(pairs)
        return cls(pairs, sum(u for _, u in pairs), source_db_size)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def singletons(self) -> set:
        return {next(iter(t)) for t, _ in self.elements if len(t) == 1}

    def _buckets(self) -> dict:
        if self._by_tag is None:
            by_tag: dict = {}
            for tags, usage in self.elements:
                if usage <= 0:
                    continue
                for t in tags:
                    by_tag.setdefault(t, []).append((tags, usage))
            self._by_tag = by_tag
        return self._by_tag


def cover(ct: CodeTable, transaction_tags: Iterable) -> List[frozenset]:
    """Greedy cover of a transaction: walk elements in order, use an element
    iff it is contained in the not-yet-covered remainder.  The returned
    tagsets are pairwise disjoint and union to the transaction."""
    remaining = set(transaction_tags)
    out: List[frozenset] = []
    for tags, _ in ct.elements:
        if not remaining:
            break
        if len(tags) <= len(remaining) and tags <= remaining:
            out.append(tags)
            remaining -= tags
    if remaining:
        raise UncoverableTagError(
            f"no singleton for tag(s) {sorted(remaining)}; code table does not match vocabulary"
        )
    return out


def estimate_support(ct: CodeTable, x: Iterable) -> int:
    """Summed usage of the elements containing x; 0 when nothing contains it."""
    xs = frozenset(x)
    if not xs:
        raise ValueError("cannot estimate support of the empty tagset")
    cached = ct._estimate_memo.get(xs)
    if cached is not None:
        return cached
    buckets = ct._buckets()
    bucket = min((buckets.get(t, []) for t in xs), key=len, default=[])
    total = 0
    for tags, usage in bucket:
        if xs <= tags:
            total += usage
    ct._estimate_memo[xs] = total
    return total


def singleton_table(db: TagDatabase) -> CodeTable:
    """Singleton-only code table over db; usages equal singleton supports."""
    if len(db) == 0:
        raise EmptyDatabaseError("nothing to encode: database is empty")
    masks = db.tag_masks
    entries = [
        _Entry(frozenset((t,)), masks[t].bit_count(), masks[t].bit_count())
        for t in range(len(db.vocabulary))
        if masks[t]
    ]
    entries.sort(key=_Entry.order_key)
    total = sum(e.usage for e in entries)
    return CodeTable([(e.tags, e.usage) for e in entries], total, len(db))


def _standard_lengths(db: TagDatabase):
    """Per-tag code length under the singleton-only table (the standard table)."""
    masks = db.tag_masks
    supports = {t: masks[t].bit_count() for t in range(len(db.vocabulary)) if masks[t]}
    total = sum(supports.values())
    return {t: math.log2(total / s) for t, s in supports.items()}, supports


def encoded_size(db: TagDatabase, ct: CodeTable) -> Tuple[float, float, float]:
    """Total encoded size of (db, ct): covers all of db with ct and applies
    the code-length formulas from scratch.  Returns (total, data_cost,
    model_cost)."""
    if len(db) == 0:
        raise EmptyDatabaseError("nothing to encode: database is empty")
    st_len, _ = _standard_lengths(db)
    usage: dict = {i: 0 for i in range(len(ct.elements))}
    order = {id(tags): i for i, (tags, _) in enumerate(ct.elements)}
    for tx in db.transactions:
        for tags in cover(ct, tx.tags):
            usage[order[id(tags)]] += 1
    total_usage = sum(usage.values())
    data_cost = 0.0
    model_cost = 0.0
    for i, (tags, _) in enumerate(ct.elements):
        u = usage[i]
        if u <= 0:
            continue
        code_len = math.log2(total_usage / u)
        data_cost += u * code_len
        model_cost += sum(st_len[t] for t in tags) + code_len
    return data_cost + model_cost, data_cost, model_cost


class _Inducer:
    """Greedy MDL selection with delta evaluation.

    Only transactions containing a candidate can change their cover when
    the candidate is inserted, so each trial re-covers just those.  The
    encoded size is maintained through four aggregates over nonzero-usage
    elements: U (total usage), S = sum u*log2(u), T = sum log2(u),
    NZ (count) and ST (summed standard-table cost), giving
    L = [U*log2(U) - S] + [ST + NZ*log2(U) - T].
    """

    def __init__(self, db: TagDatabase):
        if len(db) == 0:
            raise EmptyDatabaseError("nothing to encode: database is empty")
        self.db = db
        self.masks = db.tag_masks
        self.st_len, self.supports = _standard_lengths(db)
        self.elements: List[_Entry] = [
            _Entry(frozenset((t,)), s) for t, s in self.supports.items()
        ]
        self.elements.sort(key=lambda e: e.okey)
        self._keys = [e.okey for e in self.elements]
        self.covers: List[List[_Entry]] = [
            self._cover(tx.tags) for tx in db.transactions
        ]
        for cov in self.covers:
            for e in cov:
                e.usage += 1
        self._refresh_aggregates()

    def _cover(self, tags, extra: Optional[_Entry] = None, extra_idx: int = 0):
        remaining = set(tags)
        out: List[_Entry] = []
        elems = self.elements
        j = 0
        if extra is not None:
            while j < extra_idx and remaining:
                e = elems[j]
                j += 1
                if e.size <= len(remaining) and e.tags <= remaining:
                    out.append(e)
                    remaining -= e.tags
            if remaining and extra.size <= len(remaining) and extra.tags <= remaining:
                out.append(extra)
                remaining -= extra.tags
        n = len(elems)
        while j < n and remaining:
            e = elems[j]
            j += 1
            if e.size <= len(remaining) and e.tags <= remaining:
                out.append(e)
                remaining -= e.tags
        if remaining:
            raise UncoverableTagError(f"no singleton for tag(s) {sorted(remaining)}")
        return out

    def _st_cost(self, e: _Entry) -> float:
        return sum(self.st_len[t] for t in e.tags)

    def _refresh_aggregates(self):
        self.U = 0
        self.S = 0.0
        self.T = 0.0
        self.NZ = 0
        self.ST = 0.0
        for e in self.elements:
            u = e.usage
            if u > 0:
                self.U += u
                self.S += u * math.log2(u)
                self.T += math.log2(u)
                self.NZ += 1
                self.ST += self._st_cost(e)

    def _total_size(self, U, S, T, NZ, ST) -> float:
        if U <= 0:
            return 0.0
        lg = math.log2(U)
        return (U * lg - S) + (ST + NZ * lg - T)

    @property
    def current_size(self) -> float:
        return self._total_size(self.U, self.S, self.T, self.NZ, self.ST)

    def try_candidate(self, tags: frozenset) -> bool:
        cand_mask = None
        for t in tags:
            m = self.masks[t]
            cand_mask = m if cand_mask is None else (cand_mask & m)
            if not cand_mask:
                return False
        cand = _Entry(tags, cand_mask.bit_count())
        idx = bisect_left(self._keys, cand.okey)
        affected = list(iter_bits(cand_mask))

        delta: dict = {}
        new_covers = []
        for i in affected:
            new_cov = self._cover(self.db.transactions[i].tags, extra=cand, extra_idx=idx)
            new_covers.append(new_cov)
            for e in self.covers[i]:
                delta[e] = delta.get(e, 0) - 1
            for e in new_cov:
                delta[e] = delta.get(e, 0) + 1

        U, S, T, NZ, ST = self.U, self.S, self.T, self.NZ, self.ST
        for e, d in delta.items():
            if d == 0:
                continue
            u0 = e.usage
            u1 = u0 + d
            if u0 > 0:
                S -= u0 * math.log2(u0)
                T -= math.log2(u0)
                NZ -= 1
                ST -= self._st_cost(e)
            if u1 > 0:
                S += u1 * math.log2(u1)
                T += math.log2(u1)
                NZ += 1
                ST += self._st_cost(e)
            U += d
        new_size = self._total_size(U, S, T, NZ, ST)
        if new_size >= self.current_size - _EPS:
            return False

        # commit
        self.elements.insert(idx, cand)
        self._keys.insert(idx, cand.okey)
        for i, new_cov in zip(affected, new_covers):
            self.covers[i] = new_cov
        for e, d in delta.items():
            e.usage += d
        self._refresh_aggregates()  # re-derive exactly; avoids float drift
        return True

    def finish(self) -> CodeTable:
        # final usages recomputed by covering all of db against the final order
        for e in self.elements:
            e.usage = 0
        for tx in self.db.transactions:
            for e in self._cover(tx.tags):
                e.usage += 1
        total = sum(e.usage for e in self.elements)
        return CodeTable(
            [(e.tags, e.usage) for e in self.elements],
            total,
            len(self.db),
        )


def induce(db: TagDatabase, candidates: FrequentTagsetCollection) -> CodeTable:
    """Induce a code table from closed frequent candidate tagsets.

    Starts from the singleton-only table and offers candidates in Standard
    Candidate Order (support desc, length desc, lexicographic); a candidate
    is kept iff the total encoded size strictly decreases.  There is no
    post-acceptance pruning.  Final usages are recomputed by covering all
    of db, and the accepted size trace is attached as ``encoded_sizes``.
    """
    inducer = _Inducer(db)
    sizes = [inducer.current_size]
    order = sorted(
        (entry for entry in candidates.entries if len(entry) >= 2),
        key=lambda e: (-candidates.entries[e], -len(e), tuple(sorted(e))),
    )
    seen = {e.tags for e in inducer.elements}
    for cand in order:
        if cand in seen:
            continue
        if inducer.try_candidate(cand):
            seen.add(cand)
            sizes.append(inducer.current_size)
    ct = inducer.finish()
    ct.encoded_sizes = tuple(sizes)
    return ct


# ---------------------------------------------------------------------------
# serialization: element lines in Standard Cover Order, header with totals


def serialize_codetable(ct: CodeTable, vocab: TagVocabulary) -> str:
    lines = [
        f"# total_usage={ct.total_usage}",
        f"# source_db_size={ct.source_db_size}",
    ]
    for tags, usage in ct.elements:
        labels = ",".join(sorted(vocab.label(t) for t in tags))
        lines.append(f"{labels}:{usage}")
    return "\n".join(lines) + "\n"


def write_codetable(ct, vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_codetable(ct, vocab))


def read_codetable(path, vocab: TagVocabulary) -> CodeTable:
    """Element order in the file is authoritative (Standard Cover Order)."""
    elements = []
    meta = {"total_usage": 0, "source_db_size": 0}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key in meta:
                    meta[key] = int(value)
                continue
            tag_part, _, usage = line.rpartition(":")
            tags = frozenset(vocab.id_of(t) for t in tag_part.split(","))
            elements.append((tags, int(usage)))
    return CodeTable(elements, meta["total_usage"], meta["source_db_size"])
