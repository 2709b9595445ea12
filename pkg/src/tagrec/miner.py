"""Support counting, top-m co-occurrence statistics, and closed tagset mining.

This is the shared substrate of all three recommenders: the pairwise
recommender consumes the co-occurrence index only, the any-length
recommender additionally reads supports from the closed frequent tagset
collection, and the code-table recommender uses the collection as the
candidate pool for induction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .corpus import TagDatabase, TagVocabulary
from .errors import ConfigError

__all__ = [
    "MiningParams",
    "CooccurrenceIndex",
    "FrequentTagsetCollection",
    "support",
    "build_cooccurrence",
    "mine_closed",
    "iter_bits",
]


def iter_bits(mask: int):
    """Yield the set bit positions of mask in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class MiningParams:
    """Mining configuration.

    ``min_support`` is either a fraction in (0,1) or an integral absolute
    count >= 1; a value of exactly 1 means absolute support 1.  Fractions
    convert to absolute counts by ceiling, with a floor of 1.
    ``bounded_closure`` keeps the closedness test inside the length bound
    (no equal-support superset of size <= max_len); switch it off for
    closedness against the unbounded lattice.
    """

    min_support: float
    max_len: int
    top_m: int = 50
    bounded_closure: bool = True

    def __post_init__(self):
        ms = self.min_support
        if ms <= 0:
            raise ConfigError(f"min_support must be positive, got {ms}")
        if ms >= 1 and float(ms) != int(ms):
            raise ConfigError(f"min_support >= 1 must be an integral count, got {ms}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.top_m < 1:
            raise ConfigError(f"top_m must be >= 1, got {self.top_m}")

    def absolute_min_support(self, db_size: int) -> int:
        if self.min_support < 1:
            return max(1, math.ceil(self.min_support * db_size))
        return int(self.min_support)


def support(db: TagDatabase, x: Iterable) -> int:
    """Number of transactions whose tagset is a superset of x (|db| for empty x)."""
    tags = list(x)
    if not tags:
        return len(db)
    masks = db.tag_masks
    acc = masks[tags[0]]
    for t in tags[1:]:
        if not acc:
            return 0
        acc &= masks[t]
    return acc.bit_count()


class CooccurrenceIndex:
    """Per-tag supports plus the top-m co-occurring tags of every tag.

    Each top list is sorted by joint count descending, tag id ascending,
    and holds at most ``top_m`` partners.
    """

    def __init__(self, tag_support: list, top_lists: dict, top_m: int):
        self.tag_support = tag_support
        self.top_lists = top_lists          # tag -> list[(partner, joint)]
        self.top_m = top_m
        # partner membership with joint counts, for O(1) scoring lookups
        self.top_joint = {t: dict(lst) for t, lst in top_lists.items()}

    def top(self, tag: int) -> list:
        return self.top_lists.get(tag, [])

    def joint_in_top(self, tag: int, partner: int) -> Optional[int]:
        """Joint count of (tag, partner) if partner is in tag's top list, else None."""
        return self.top_joint.get(tag, {}).get(partner)


def build_cooccurrence(db: TagDatabase, top_m: int) -> CooccurrenceIndex:
    """Count pairwise joint supports and keep each tag's top-m partners."""
    if top_m < 1:
        raise ConfigError(f"top_m must be >= 1, got {top_m}")
    pair_counts: dict = {}
    for tx in db.transactions:
        tags = sorted(tx.tags)
        for i, a in enumerate(tags):
            for b in tags[i + 1:]:
                key = (a, b)
                pair_counts[key] = pair_counts.get(key, 0) + 1
    partners: dict = {}
    for (a, b), cnt in pair_counts.items():
        partners.setdefault(a, []).append((b, cnt))
        partners.setdefault(b, []).append((a, cnt))
    top_lists = {}
    for t, lst in partners.items():
        lst.sort(key=lambda pc: (-pc[1], pc[0]))
        top_lists[t] = [(c, cnt) for c, cnt in lst[:top_m]]
    tag_support = [m.bit_count() for m in db.tag_masks]
    return CooccurrenceIndex(tag_support, top_lists, top_m)


class FrequentTagsetCollection:
    """Closed frequent tagsets with their exact supports.

    ``support_of`` answers support queries for arbitrary tagsets by taking
    the maximum support over containing entries — the closure of a
    non-closed frequent set carries its support — and returns 0 when no
    entry contains the set.
    """

    def __init__(self, entries: dict, params: MiningParams, db_size: int):
        self.entries = entries              # frozenset -> support
        self.params = params
        self.db_size = db_size
        self._by_tag: Optional[dict] = None
        self._memo: dict = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, x) -> bool:
        return frozenset(x) in self.entries

    def support_of(self, x: Iterable) -> int:
        xs = frozenset(x)
        hit = self.entries.get(xs)
        if hit is not None:
            return hit
        cached = self._memo.get(xs)
        if cached is not None:
            return cached
        if self._by_tag is None:
            by_tag: dict = {}
            for entry in self.entries:
                for t in entry:
                    by_tag.setdefault(t, []).append(entry)
            self._by_tag = by_tag
        bucket = min(
            (self._by_tag.get(t, []) for t in xs),
            key=len,
            default=[],
        )
        best = 0
        for entry in bucket:
            if xs <= entry:
                sup = self.entries[entry]
                if sup > best:
                    best = sup
        self._memo[xs] = best
        return best


def mine_closed(db: TagDatabase, params: MiningParams) -> FrequentTagsetCollection:
    """Mine all closed frequent tagsets with support >= minsup and size <= max_len.

    A set is closed when no strict superset has equal support; with
    ``params.bounded_closure`` the superset must itself fit the length
    bound, so sets of size max_len are always closed.
    """
    minsup = params.absolute_min_support(len(db))
    max_len = params.max_len
    masks = db.tag_masks
    n_tags = len(db.vocabulary)
    frequent_tags = [t for t in range(n_tags) if masks[t].bit_count() >= minsup]

    found: list = []  # (tags tuple, tidmask, support)

    def extend(prefix: tuple, mask: int):
        found.append((prefix, mask))
        if len(prefix) >= max_len:
            return
        last = prefix[-1]
        for t in frequent_tags:
            if t <= last:
                continue
            m2 = mask & masks[t]
            if m2.bit_count() >= minsup:
                extend(prefix + (t,), m2)

    for t in frequent_tags:
        extend((t,), masks[t])

    entries: dict = {}
    for tags, mask in found:
        sup = mask.bit_count()
        if params.bounded_closure and len(tags) >= max_len:
            entries[frozenset(tags)] = sup
            continue
        # an equal-support extension tag is itself frequent, so scanning
        # frequent_tags suffices for both closure flavors
        closed = True
        tagset = set(tags)
        for t in frequent_tags:
            if t in tagset:
                continue
            if mask & masks[t] == mask:
                closed = False
                break
        if closed:
            entries[frozenset(tags)] = sup
    return FrequentTagsetCollection(entries, params, len(db))


# ---------------------------------------------------------------------------
# line-oriented serialization: ``tag1,tag2:support`` per line, sorted


def _format_tagset(tags, vocab: TagVocabulary) -> str:
    return ",".join(sorted(vocab.label(t) for t in tags))


def serialize_tagsets(collection: FrequentTagsetCollection, vocab: TagVocabulary) -> str:
    header = [
        f"# min_support={collection.params.min_support}",
        f"# max_len={collection.params.max_len}",
        f"# db_size={collection.db_size}",
    ]
    lines = sorted(f"{_format_tagset(e, vocab)}:{s}" for e, s in collection.entries.items())
    return "\n".join(header + lines) + "\n"


def write_tagsets(collection, vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_tagsets(collection, vocab))


def read_tagsets(path, vocab: TagVocabulary, params: Optional[MiningParams] = None) -> FrequentTagsetCollection:
    entries = {}
    db_size = 0
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            tag_part, _, sup = line.rpartition(":")
            entries[frozenset(vocab.id_of(t) for t in tag_part.split(","))] = int(sup)
    if params is None:
        params = MiningParams(
            min_support=float(meta.get("min_support", 1)),
            max_len=int(meta.get("max_len", 1) or 1),
        )
    db_size = int(meta.get("db_size", 0) or 0)
    return FrequentTagsetCollection(entries, params, db_size)


def serialize_cooccurrence(index: CooccurrenceIndex, vocab: TagVocabulary) -> str:
    """Singleton lines carry tag supports; pair lines are directional:
    ``owner,partner:joint`` states that partner is in owner's top list."""
    header = [f"# top_m={index.top_m}"]
    lines = [
        f"{vocab.label(t)}:{s}" for t, s in enumerate(index.tag_support) if s > 0
    ]
    for t, lst in index.top_lists.items():
        for c, joint in lst:
            lines.append(f"{vocab.label(t)},{vocab.label(c)}:{joint}")
    return "\n".join(header + sorted(lines)) + "\n"


def write_cooccurrence(index, vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_cooccurrence(index, vocab))


def read_cooccurrence(path, vocab: TagVocabulary) -> CooccurrenceIndex:
    tag_support = [0] * len(vocab)
    partners: dict = {}
    top_m = 50
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key == "top_m":
                    top_m = int(value)
                continue
            tag_part, _, cnt = line.rpartition(":")
            labels = tag_part.split(",")
            if len(labels) == 1:
                tag_support[vocab.id_of(labels[0])] = int(cnt)
            else:
                owner, partner = (vocab.id_of(l) for l in labels)
                partners.setdefault(owner, []).append((partner, int(cnt)))
    top_lists = {}
    for t, lst in partners.items():
        lst.sort(key=lambda pc: (-pc[1], pc[0]))
        top_lists[t] = lst
    return CooccurrenceIndex(tag_support, top_lists, top_m)
