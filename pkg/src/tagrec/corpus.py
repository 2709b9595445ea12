"""Data model and file I/O for tag corpora.

A corpus is a tag database (transactions owned by users, each a set of at
least two tags, optionally labelled with a group and an interest), an
undirected friendship graph, and a group-membership index.

File formats (UTF-8, ``#`` starts a comment line, ``-`` denotes absent):

* transactions: ``user_id<TAB>group_id_or_-<TAB>interest_or_-<TAB>tag1,tag2,...``
* social graph: ``user_id<SPACE>user_id`` per line
* groups:       ``group_id<TAB>user_id`` per line
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import CorpusFormatError

logger = logging.getLogger(__name__)

LENGTH_BUCKETS = ("<6", "6-8", ">8")
FRIEND_BUCKETS = ("0", "1-2", "3-10", "11-50", "51-250", ">=251")


class Tag(NamedTuple):
    id: int
    label: str


class TagVocabulary:
    """Bijection between dense integer tag ids and tag labels."""

    def __init__(self, labels: Sequence[str]):
        self._labels = tuple(labels)
        self._ids = {label: i for i, label in enumerate(self._labels)}
        if len(self._ids) != len(self._labels):
            raise CorpusFormatError("duplicate label in vocabulary")

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return (Tag(i, label) for i, label in enumerate(self._labels))

    def __eq__(self, other) -> bool:
        return isinstance(other, TagVocabulary) and self._labels == other._labels

    def label(self, tag_id: int) -> str:
        return self._labels[tag_id]

    def id_of(self, label: str) -> int:
        try:
            return self._ids[label]
        except KeyError:
            raise CorpusFormatError(f"unknown tag label: {label!r}") from None

    def __contains__(self, label: str) -> bool:
        return label in self._ids


@dataclass(frozen=True)
class Transaction:
    """One owned tag assignment: a user, a tagset, optional group and interest."""

    user: str
    tags: frozenset
    group: Optional[str] = None
    interest: Optional[str] = None


class TagDatabase:
    """Ordered multiset of transactions over a shared vocabulary.

    Immutable after construction.  Sub-databases produced by the source
    builders share the parent's vocabulary so tag ids stay comparable.
    """

    def __init__(self, vocabulary: TagVocabulary, transactions: Sequence[Transaction]):
        self.vocabulary = vocabulary
        self.transactions = tuple(transactions)
        self.load_stats: dict = {}
        self._tag_masks = None
        self._user_index = None
        self._interest_counts = None

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)

    @property
    def tag_masks(self) -> list:
        """Per-tag bitmask over transaction positions (vertical layout)."""
        if self._tag_masks is None:
            masks = [0] * len(self.vocabulary)
            for i, tx in enumerate(self.transactions):
                bit = 1 << i
                for t in tx.tags:
                    masks[t] |= bit
            self._tag_masks = masks
        return self._tag_masks

    @property
    def user_index(self) -> dict:
        """user -> tuple of transaction positions owned by that user."""
        if self._user_index is None:
            idx: dict = {}
            for i, tx in enumerate(self.transactions):
                idx.setdefault(tx.user, []).append(i)
            self._user_index = {u: tuple(v) for u, v in idx.items()}
        return self._user_index

    @property
    def interest_counts(self) -> dict:
        if self._interest_counts is None:
            counts: dict = {}
            for tx in self.transactions:
                if tx.interest is not None:
                    counts[tx.interest] = counts.get(tx.interest, 0) + 1
            self._interest_counts = counts
        return self._interest_counts

    def users(self) -> set:
        return set(self.user_index)

    def sub(self, indices: Iterable[int]) -> "TagDatabase":
        """Sub-database of the given transaction positions (order preserved)."""
        return TagDatabase(self.vocabulary, [self.transactions[i] for i in indices])


class SocialGraph:
    """Undirected friendship graph; symmetric adjacency, no self-loops."""

    def __init__(self, adjacency: Optional[dict] = None):
        self.adjacency = {u: set(vs) for u, vs in (adjacency or {}).items()}

    @classmethod
    def from_edges(cls, edges: Iterable) -> "SocialGraph":
        g = cls()
        for u, v in edges:
            g.add_edge(u, v)
        return g

    def add_edge(self, u: str, v: str) -> None:
        if u == v:
            return
        self.adjacency.setdefault(u, set()).add(v)
        self.adjacency.setdefault(v, set()).add(u)

    def neighbors(self, u: str) -> set:
        return self.adjacency.get(u, set())

    def degree(self, u: str) -> int:
        return len(self.adjacency.get(u, ()))

    def users(self) -> set:
        return set(self.adjacency)

    def edges(self) -> set:
        """Canonical undirected edge set (endpoints sorted within each pair)."""
        out = set()
        for u, vs in self.adjacency.items():
            for v in vs:
                out.add((u, v) if u <= v else (v, u))
        return out


class GroupIndex:
    """Group membership plus the positions of each group's transactions.

    ``user_groups`` and ``group_members`` are transposes of each other.
    Membership comes from the groups file merged with ownership of a
    group-labelled transaction.  ``group_transactions`` is relative to one
    specific database; use :meth:`for_database` after splitting.
    """

    def __init__(self, user_groups: dict, group_members: dict, group_transactions: dict):
        self.user_groups = {u: frozenset(g) for u, g in user_groups.items()}
        self.group_members = {g: frozenset(u) for g, u in group_members.items()}
        self.group_transactions = {g: tuple(ix) for g, ix in group_transactions.items()}

    @classmethod
    def build(cls, db: TagDatabase, memberships: Iterable = ()) -> "GroupIndex":
        user_groups: dict = {}
        group_members: dict = {}
        group_tx: dict = {}
        for group, user in memberships:
            user_groups.setdefault(user, set()).add(group)
            group_members.setdefault(group, set()).add(user)
        for i, tx in enumerate(db.transactions):
            if tx.group is not None:
                user_groups.setdefault(tx.user, set()).add(tx.group)
                group_members.setdefault(tx.group, set()).add(tx.user)
                group_tx.setdefault(tx.group, []).append(i)
        return cls(user_groups, group_members, group_tx)

    def for_database(self, db: TagDatabase) -> "GroupIndex":
        """Same memberships, transaction positions recomputed against db."""
        group_tx: dict = {}
        for i, tx in enumerate(db.transactions):
            if tx.group is not None:
                group_tx.setdefault(tx.group, []).append(i)
        return GroupIndex(self.user_groups, self.group_members, group_tx)

    def groups_of(self, user: str) -> frozenset:
        return self.user_groups.get(user, frozenset())


@dataclass(frozen=True)
class Query:
    """A recommendation request: user, non-empty input tagset, optional interest."""

    user: str
    input: frozenset
    interest: Optional[str] = None


@dataclass
class ProfileReport:
    """Dataset properties: counts plus length/friend histograms."""

    n_users: int = 0
    n_tags: int = 0
    n_transactions: int = 0
    length_pct: tuple = (0, 0, 0)          # percent of transactions with <6 / 6-8 / >8 tags
    friend_counts: tuple = (0, 0, 0, 0, 0, 0)  # users with 0 / 1-2 / 3-10 / 11-50 / 51-250 / >=251 friends

    def as_text(self) -> str:
        lines = [
            f"users={self.n_users} tags={self.n_tags} transactions={self.n_transactions}",
            "tags per transaction (%): "
            + "  ".join(f"{b}: {p}" for b, p in zip(LENGTH_BUCKETS, self.length_pct)),
            "friends per user: "
            + "  ".join(f"{b}: {c}" for b, c in zip(FRIEND_BUCKETS, self.friend_counts)),
        ]
        return "\n".join(lines)


def _length_bucket(n: int) -> int:
    if n < 6:
        return 0
    if n <= 8:
        return 1
    return 2


def _friend_bucket(n: int) -> int:
    if n == 0:
        return 0
    if n <= 2:
        return 1
    if n <= 10:
        return 2
    if n <= 50:
        return 3
    if n <= 250:
        return 4
    return 5


def profile(db: TagDatabase, graph: Optional[SocialGraph] = None) -> ProfileReport:
    """Dataset-property report: user/tag counts, length buckets, friend histogram."""
    graph = graph or SocialGraph()
    users = db.users() | graph.users()
    length_hist = [0, 0, 0]
    for tx in db.transactions:
        length_hist[_length_bucket(len(tx.tags))] += 1
    n = len(db)
    if n:
        length_pct = tuple(round(100 * c / n) for c in length_hist)
    else:
        length_pct = (0, 0, 0)
    friend_hist = [0] * 6
    for u in users:
        friend_hist[_friend_bucket(graph.degree(u))] += 1
    return ProfileReport(
        n_users=len(users),
        n_tags=len(db.vocabulary),
        n_transactions=n,
        length_pct=length_pct,
        friend_counts=tuple(friend_hist),
    )


# ---------------------------------------------------------------------------
# file ingestion


def _data_lines(path):
    """Yield (line_number, stripped_line) skipping blanks and # comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def _parse_transaction_line(path, lineno: int, line: str):
    fields = line.split("\t")
    if len(fields) != 4:
        raise CorpusFormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
    user, group, interest, tag_field = fields
    if not user or user == "-":
        raise CorpusFormatError(f"{path}:{lineno}: missing user id")
    labels = [t for t in tag_field.split(",") if t != ""]
    if not labels:
        raise CorpusFormatError(f"{path}:{lineno}: empty tag list")
    return (
        user,
        None if group == "-" else group,
        None if interest == "-" else interest,
        labels,
    )


def load_corpus(
    transactions_path,
    graph_path=None,
    groups_path=None,
    min_tags: int = 2,
):
    """Load and validate a corpus; returns (TagDatabase, SocialGraph, GroupIndex).

    Transactions with fewer than ``min_tags`` distinct tags are dropped and
    counted; duplicate tags within a transaction are silently deduplicated
    and counted.  Graph edges are symmetrized (one-directional lines warn).
    Users referenced by the graph or groups file must appear in the
    transactions file (before the min_tags filter), otherwise the load fails.
    Load statistics end up in ``db.load_stats``.
    """
    rows = []
    known_users = set()
    duplicate_tags = 0
    dropped_short = 0
    for lineno, line in _data_lines(transactions_path):
        user, group, interest, labels = _parse_transaction_line(transactions_path, lineno, line)
        known_users.add(user)
        distinct = list(dict.fromkeys(labels))
        duplicate_tags += len(labels) - len(distinct)
        if len(distinct) < min_tags:
            dropped_short += 1
            continue
        rows.append((user, group, interest, distinct))

    # intern labels over the kept transactions only, in first-seen order
    label_ids: dict = {}
    for _, _, _, labels in rows:
        for lab in labels:
            if lab not in label_ids:
                label_ids[lab] = len(label_ids)
    vocabulary = TagVocabulary(list(label_ids))
    transactions = [
        Transaction(
            user=user,
            tags=frozenset(label_ids[lab] for lab in labels),
            group=group,
            interest=interest,
        )
        for user, group, interest, labels in rows
    ]
    db = TagDatabase(vocabulary, transactions)

    graph = SocialGraph()
    symmetrized = 0
    if graph_path is not None:
        directed = set()
        for lineno, line in _data_lines(graph_path):
            parts = line.split()
            if len(parts) != 2:
                raise CorpusFormatError(f"{graph_path}:{lineno}: expected two user ids")
            u, v = parts
            for w in (u, v):
                if w not in known_users:
                    raise CorpusFormatError(f"{graph_path}:{lineno}: unknown user {w!r}")
            if u == v:
                raise CorpusFormatError(f"{graph_path}:{lineno}: self-loop on {u!r}")
            directed.add((u, v))
            graph.add_edge(u, v)
        for u, v in directed:
            if (v, u) not in directed:
                symmetrized += 1
        if symmetrized:
            logger.warning("%s: symmetrized %d one-directional edge(s)", graph_path, symmetrized)

    memberships = []
    if groups_path is not None:
        for lineno, line in _data_lines(groups_path):
            fields = line.split("\t")
            if len(fields) != 2:
                raise CorpusFormatError(f"{groups_path}:{lineno}: expected group_id<TAB>user_id")
            group, user = fields
            if user not in known_users:
                raise CorpusFormatError(f"{groups_path}:{lineno}: unknown user {user!r}")
            memberships.append((group, user))

    groups = GroupIndex.build(db, memberships)
    db.load_stats = {
        "dropped_short": dropped_short,
        "duplicate_tags": duplicate_tags,
        "symmetrized_edges": symmetrized,
    }
    return db, graph, groups


# ---------------------------------------------------------------------------
# serialization (canonical form)


def serialize_transactions(db: TagDatabase) -> str:
    """Canonical text form: original order, tags sorted by label, '-' for absent."""
    vocab = db.vocabulary
    lines = []
    for tx in db.transactions:
        labels = sorted(vocab.label(t) for t in tx.tags)
        lines.append(
            "\t".join([tx.user, tx.group or "-", tx.interest or "-", ",".join(labels)])
        )
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_graph(graph: SocialGraph) -> str:
    lines = sorted(f"{u} {v}" for u, v in graph.edges())
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_groups(groups: GroupIndex) -> str:
    pairs = sorted((g, u) for g, us in groups.group_members.items() for u in us)
    lines = [f"{g}\t{u}" for g, u in pairs]
    return "\n".join(lines) + ("\n" if lines else "")


def save_corpus(db, graph=None, groups=None, transactions_path=None, graph_path=None, groups_path=None):
    """Write corpus files in canonical form (only the paths that are given)."""
    if transactions_path is not None:
        with open(transactions_path, "w", encoding="utf-8") as fh:
            fh.write(serialize_transactions(db))
    if graph_path is not None and graph is not None:
        with open(graph_path, "w", encoding="utf-8") as fh:
            fh.write(serialize_graph(graph))
    if groups_path is not None and groups is not None:
        with open(groups_path, "w", encoding="utf-8") as fh:
            fh.write(serialize_groups(groups))


def load_queries(path, vocabulary: TagVocabulary) -> list:
    """Read a query stream: ``user_id<TAB>interest_or_-<TAB>tag1,tag2,...`` per line."""
    queries = []
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise CorpusFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        user, interest, tag_field = fields
        labels = [t for t in tag_field.split(",") if t != ""]
        if not labels:
            raise CorpusFormatError(f"{path}:{lineno}: empty input tagset")
        try:
            tags = frozenset(vocabulary.id_of(lab) for lab in labels)
        except CorpusFormatError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
        queries.append(Query(user=user, input=tags, interest=None if interest == "-" else interest))
    return queries
