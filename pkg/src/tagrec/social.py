"""Source-database construction from social information.

A recommender never changes here; what changes is which slice of the
training data it mines:

* ``ck``                — collective knowledge: the whole training set.
* ``uk``                — user-centered: transactions of users within n
  friendship hops that share the query's interest.
* ``personomy``         — the querying user's own history.
* ``social-personomy``  — histories of all users within n hops.
* ``batched``           — histories of every user with a query in a batch.
* ``social-batched``    — the batched selection widened to n-hop friends.
* ``community-batched`` — grouped users answered from their history plus
  their groups' data; ungrouped users answered from collective knowledge
  in batches.

Every selection is a sub-multiset of the training database; when a
selection comes up empty the pipeline falls back to collective knowledge
so a recommendation is always possible.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from .corpus import GroupIndex, Query, SocialGraph, TagDatabase
from .errors import ConfigError

__all__ = [
    "SOURCE_KINDS",
    "SourceSelection",
    "Batch",
    "BatchPolicy",
    "BatchQueue",
    "nth_degree_users",
    "build_ck",
    "build_uk",
    "build_personomy",
    "form_batches",
    "build_batched",
    "route_community",
    "build_community",
    "build_source",
]

SOURCE_KINDS = (
    "ck",
    "uk",
    "personomy",
    "social-personomy",
    "batched",
    "social-batched",
    "community-batched",
)
_DEGREE_KINDS = ("uk", "social-personomy", "social-batched")
KIND_ALIASES = {"community": "community-batched"}


@dataclass(frozen=True)
class SourceSelection:
    """Which source database to build; degree is the friendship-hop radius."""

    kind: str
    degree: Optional[int] = None
    interest_filter: Optional[str] = None

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        if kind in _DEGREE_KINDS:
            if self.degree is None or self.degree < 0:
                raise ConfigError(f"source {kind!r} requires a degree >= 0")
        elif self.degree is not None:
            raise ConfigError(f"source {kind!r} does not take a degree")


@dataclass(frozen=True)
class Batch:
    queries: Tuple[Query, ...]
    formed_reason: str  # MAX_COUNT | MAX_WAIT | FLUSH

    def __len__(self) -> int:
        return len(self.queries)

    def users(self) -> set:
        return {q.user for q in self.queries}


@dataclass(frozen=True)
class BatchPolicy:
    """Emit a batch as soon as either bound is hit; max_wait=None waits forever."""

    max_queries: int
    max_wait: Optional[float] = None

    def __post_init__(self):
        if self.max_queries < 1:
            raise ConfigError(f"max_queries must be >= 1, got {self.max_queries}")
        if self.max_wait is not None and self.max_wait <= 0:
            raise ConfigError(f"max_wait must be positive, got {self.max_wait}")


class BatchQueue:
    """Batch accumulator safe for concurrent producers, single consumer.

    Emission is atomic: a query lands in exactly one batch.  ``submit``
    caches a query and forms a MAX_COUNT batch when the count bound is
    hit; ``take_ready`` also forms a MAX_WAIT batch when the oldest
    pending query has waited past the bound; ``close`` flushes the rest.
    """

    def __init__(self, policy: BatchPolicy, clock=time.monotonic):
        self.policy = policy
        self.clock = clock
        self._lock = threading.Lock()
        self._pending: deque = deque()  # (query, arrival time)
        self._ready: deque = deque()

    def submit(self, query: Query) -> None:
        with self._lock:
            self._pending.append((query, self.clock()))
            if len(self._pending) >= self.policy.max_queries:
                self._emit("MAX_COUNT")

    def _emit(self, reason: str) -> None:
        if not self._pending:
            return
        queries = tuple(q for q, _ in self._pending)
        self._pending.clear()
        self._ready.append(Batch(queries=queries, formed_reason=reason))

    def _check_timeout(self) -> None:
        if (
            self.policy.max_wait is not None
            and self._pending
            and self.clock() - self._pending[0][1] >= self.policy.max_wait
        ):
            self._emit("MAX_WAIT")

    def take_ready(self) -> List[Batch]:
        with self._lock:
            self._check_timeout()
            out = list(self._ready)
            self._ready.clear()
            return out

    def close(self) -> List[Batch]:
        with self._lock:
            self._emit("FLUSH")
            out = list(self._ready)
            self._ready.clear()
            return out


def form_batches(queries: Iterable[Query], policy: BatchPolicy, timestamps=None):
    """Replay a query stream through a batch queue; yields batches in order.

    ``timestamps`` (optional, one per query, nondecreasing) drive the
    max-wait clock; without them arrivals count as instantaneous and only
    the count bound and the final flush split batches.
    """
    now = [0.0]
    queue = BatchQueue(policy, clock=lambda: now[0])
    for i, query in enumerate(queries):
        if timestamps is not None:
            now[0] = timestamps[i]
        yield from queue.take_ready()
        queue.submit(query)
        yield from queue.take_ready()
    yield from queue.close()


# ---------------------------------------------------------------------------
# neighborhoods and selections


def nth_degree_users(graph: SocialGraph, u: str, n: int) -> set:
    """All users at hop distance <= n from u, including u itself."""
    if n < 0:
        raise ConfigError(f"degree must be >= 0, got {n}")
    seen = {u}
    frontier = {u}
    for _ in range(n):
        nxt = set()
        for v in frontier:
            nxt |= graph.neighbors(v)
        nxt -= seen
        if not nxt:
            break
        seen |= nxt
        frontier = nxt
    return seen


def _user_indices(db: TagDatabase, users: Iterable) -> Tuple[int, ...]:
    idx = db.user_index
    out: List[int] = []
    for u in users:
        out.extend(idx.get(u, ()))
    return tuple(sorted(out))


def select_uk(db: TagDatabase, graph: SocialGraph, query: Query, n: int,
              interest: Optional[str] = None) -> Tuple[int, ...]:
    """Positions of transactions owned by n-hop neighbors sharing the interest."""
    interest = interest if interest is not None else query.interest
    circle = nth_degree_users(graph, query.user, n)
    return tuple(
        i
        for i, tx in enumerate(db.transactions)
        if tx.user in circle and tx.interest == interest
    )


def select_personomy(db: TagDatabase, user: str) -> Tuple[int, ...]:
    return tuple(db.user_index.get(user, ()))


def select_social_personomy(db: TagDatabase, graph: SocialGraph, user: str, n: int) -> Tuple[int, ...]:
    return _user_indices(db, nth_degree_users(graph, user, n))


def select_batched(db: TagDatabase, users: Iterable, graph: Optional[SocialGraph] = None,
                   degree: Optional[int] = None) -> Tuple[int, ...]:
    if degree is None:
        return _user_indices(db, set(users))
    circle: set = set()
    for u in set(users):
        circle |= nth_degree_users(graph, u, degree)
    return _user_indices(db, circle)


def select_community(db: TagDatabase, groups: GroupIndex, user: str) -> Tuple[int, ...]:
    """The user's own transactions plus all transactions of the user's groups,
    deduplicated at the transaction-instance level."""
    own = set(db.user_index.get(user, ()))
    for g in groups.groups_of(user):
        own.update(groups.group_transactions.get(g, ()))
    return tuple(sorted(own))


# ---------------------------------------------------------------------------
# public builders


def build_ck(db: TagDatabase) -> TagDatabase:
    """Collective knowledge: the training partition itself."""
    return db


def build_uk(db: TagDatabase, graph: SocialGraph, query: Query, n: int) -> TagDatabase:
    """User-centered knowledge; may be empty, the caller applies the fallback."""
    return db.sub(select_uk(db, graph, query, n))


def build_personomy(db: TagDatabase, u: str) -> TagDatabase:
    """The user's own history; may be empty, the caller substitutes ck."""
    return db.sub(select_personomy(db, u))


def build_batched(db: TagDatabase, graph: Optional[SocialGraph], batch: Batch,
                  degree: Optional[int] = None) -> TagDatabase:
    """Histories of every user with a query in the batch, optionally widened
    to n-hop friends; returns the full db when the selection is empty."""
    if degree is not None and graph is None:
        raise ConfigError("a social graph is required when degree is given")
    indices = select_batched(db, batch.users(), graph, degree)
    if not indices:
        return db
    return db.sub(indices)


def route_community(queries: List[Query], groups: Optional[GroupIndex],
                    min_group_transactions: int = 1) -> Tuple[List[Query], List[Query]]:
    """Partition queries into (grouped, ungrouped), order preserved.

    A user counts as grouped when they belong to at least one group whose
    groups hold at least ``min_group_transactions`` transactions; users
    with too little group data are treated like users without a group.
    """
    grouped: List[Query] = []
    ungrouped: List[Query] = []
    for q in queries:
        gs = groups.groups_of(q.user) if groups is not None else frozenset()
        size = sum(len(groups.group_transactions.get(g, ())) for g in gs) if gs else 0
        if gs and size >= min_group_transactions:
            grouped.append(q)
        else:
            ungrouped.append(q)
    return grouped, ungrouped


def build_community(db: TagDatabase, groups: GroupIndex, query: Query) -> TagDatabase:
    """Group knowledge for one grouped user: own history plus group data."""
    return db.sub(select_community(db, groups, query.user))


def build_source(
    selection: SourceSelection,
    db: TagDatabase,
    graph: Optional[SocialGraph] = None,
    groups: Optional[GroupIndex] = None,
    query: Optional[Query] = None,
    batch: Optional[Batch] = None,
    min_transactions: int = 0,
) -> TagDatabase:
    """Build the selected source database for one query (or one batch),
    falling back to collective knowledge when the selection holds
    ``min_transactions`` or fewer transactions."""
    kind = selection.kind
    if kind == "ck":
        return build_ck(db)
    if kind in ("uk", "social-personomy", "social-batched") and graph is None:
        raise ConfigError(f"source {kind!r} requires a social graph file")
    if kind == "community-batched" and groups is None:
        raise ConfigError("source 'community-batched' requires a groups file")
    if kind in ("uk", "personomy", "social-personomy", "community-batched") and query is None:
        raise ConfigError(f"source {kind!r} requires a query")

    if kind == "uk":
        candidate = db.sub(select_uk(db, graph, query, selection.degree, selection.interest_filter))
    elif kind == "personomy":
        candidate = build_personomy(db, query.user)
    elif kind == "social-personomy":
        candidate = db.sub(select_social_personomy(db, graph, query.user, selection.degree))
    elif kind in ("batched", "social-batched"):
        if batch is None:
            if query is None:
                raise ConfigError(f"source {kind!r} requires a batch or a query")
            batch = Batch(queries=(query,), formed_reason="FLUSH")
        degree = selection.degree if kind == "social-batched" else None
        candidate = build_batched(db, graph, batch, degree)
    else:  # community-batched
        grouped, _ = route_community([query], groups)
        if grouped:
            candidate = build_community(db, groups, query)
        else:
            candidate = db
    if len(candidate) <= min_transactions:
        return db
    return candidate
