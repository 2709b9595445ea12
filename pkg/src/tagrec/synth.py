"""Seeded synthetic folksonomy generator with planted structure.

Users belong to interest communities; transactions draw their tags from
the community vocabulary with the configured affinity, otherwise from a
shared pool.  Two kinds of concentration make the social sources worth
exploiting, mirroring how real folksonomies behave:

* every user samples their community draws from a fixed personal pool of
  favorite tags chosen at generation time (taggers reuse a personal
  vocabulary), which is what personomy-style sources feed on;
* every shared tag is bonded to a couple of community tags per community
  (the same general-purpose tag keeps different company in different
  interest groups), so mixing communities dilutes the conditionals that
  interest-filtered sources keep sharp.

Friendships are homophilous (denser inside communities) and groups live
inside communities.  Everything is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Tuple

import numpy as np

from .corpus import GroupIndex, SocialGraph, TagDatabase, TagVocabulary, Transaction
from .errors import ConfigError

__all__ = ["SynthConfig", "generate", "write_corpus_files"]


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale defaults: two communities of 200 users each."""

    users: int = 400
    communities: int = 2
    tags_per_community: int = 60
    shared_tags: int = 20
    transactions_per_user: Tuple[int, int] = (2, 5)
    tags_per_transaction: Tuple[int, int] = (4, 7)
    intra_community_edge_prob: float = 0.10
    inter_community_edge_prob: float = 0.01
    group_count: int = 8
    group_membership_prob: float = 0.3
    community_tag_affinity: float = 0.8
    seed: int = 20240

    def __post_init__(self):
        if self.users < 1 or self.communities < 1:
            raise ConfigError("need at least one user and one community")
        if self.tags_per_community < 1:
            raise ConfigError("tags_per_community must be >= 1")
        lo, hi = self.transactions_per_user
        if not (1 <= lo <= hi):
            raise ConfigError(f"bad transactions_per_user range {self.transactions_per_user}")
        lo, hi = self.tags_per_transaction
        if not (2 <= lo <= hi):
            raise ConfigError(f"tags_per_transaction must start at >= 2, got {self.tags_per_transaction}")
        if hi > self.tags_per_community + self.shared_tags:
            raise ConfigError(
                f"tags_per_transaction max {hi} exceeds the {self.tags_per_community + self.shared_tags} "
                "tags available to one community"
            )
        if not 0.5 < self.community_tag_affinity <= 1.0:
            raise ConfigError(
                f"community_tag_affinity must lie in (0.5, 1], got {self.community_tag_affinity}"
            )
        for name in ("intra_community_edge_prob", "inter_community_edge_prob", "group_membership_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")


def _community_name(ci: int) -> str:
    return f"community{ci}"


def generate(config: SynthConfig):
    """Generate (TagDatabase, SocialGraph, GroupIndex) with planted communities."""
    rng = np.random.default_rng(config.seed)
    n_users = config.users
    n_comm = config.communities
    user_names = [f"u{i:04d}" for i in range(n_users)]
    community_of = [i % n_comm for i in range(n_users)]

    community_tags = [
        [f"c{ci}_t{k:03d}" for k in range(config.tags_per_community)]
        for ci in range(n_comm)
    ]
    shared = [f"shared_t{k:03d}" for k in range(config.shared_tags)]

    # personal pools: each user's favorite slice of the community vocabulary;
    # transactions needing more community tags than the pool holds dip into
    # the rest of the community vocabulary
    pool_size = min(
        config.tags_per_community,
        max(4, math.ceil(config.tags_per_community * 0.06)),
    )
    pools = []
    for i in range(n_users):
        vocab_c = community_tags[community_of[i]]
        pools.append(list(rng.choice(vocab_c, size=pool_size, replace=False)))

    # shared-tag bonds: the community tags a shared tag keeps company with
    n_bonds = min(2, config.tags_per_community)
    bonds = {}
    for ci in range(n_comm):
        for s in shared:
            bonds[(ci, s)] = list(rng.choice(community_tags[ci], size=n_bonds, replace=False))

    # friendships, homophilous
    graph = SocialGraph()
    pairs = list(combinations(range(n_users), 2))
    draws = rng.random(len(pairs))
    for (i, j), r in zip(pairs, draws):
        p = (
            config.intra_community_edge_prob
            if community_of[i] == community_of[j]
            else config.inter_community_edge_prob
        )
        if r < p:
            graph.add_edge(user_names[i], user_names[j])

    # groups inside communities
    group_names = [f"g{k:02d}" for k in range(config.group_count)]
    group_community = [k % n_comm for k in range(config.group_count)]
    memberships = []  # (group, user)
    user_groups: list = [[] for _ in range(n_users)]
    for i in range(n_users):
        for k in range(config.group_count):
            if group_community[k] != community_of[i]:
                continue
            if rng.random() < config.group_membership_prob:
                memberships.append((group_names[k], user_names[i]))
                user_groups[i].append(group_names[k])

    # transactions; per-user activity is right-skewed over the configured
    # range (weights 1/n), the typical folksonomy shape: many light users,
    # few heavy ones
    tx_lo, tx_hi = config.transactions_per_user
    tag_lo, tag_hi = config.tags_per_transaction
    tx_choices = np.arange(tx_lo, tx_hi + 1)
    tx_weights = 1.0 / tx_choices
    tx_weights /= tx_weights.sum()
    rows = []  # (user, group, interest, labels)
    for i in range(n_users):
        ci = community_of[i]
        vocab_c = community_tags[ci]
        pool = pools[i]
        n_tx = int(rng.choice(tx_choices, p=tx_weights))
        # casual taggers attach general-purpose tags without their thematic
        # companions; habitual users keep them together
        bond_prob = 0.8 if n_tx >= 3 else 0.2
        for _ in range(n_tx):
            n_tags = int(rng.integers(tag_lo, tag_hi + 1))
            if config.shared_tags == 0:
                n_comm_tags = n_tags
            else:
                n_comm_tags = int(rng.binomial(n_tags, config.community_tag_affinity))
                n_comm_tags = min(n_tags, max(0, n_comm_tags))
                if n_tags - n_comm_tags > config.shared_tags:
                    n_comm_tags = n_tags - config.shared_tags
            n_shared = n_tags - n_comm_tags
            shared_draws = (
                list(rng.choice(shared, size=n_shared, replace=False)) if n_shared else []
            )
            # community slots: bonds of the drawn shared tags first, then the pool
            comm_draws: list = []
            for s in shared_draws:
                for b in bonds[(ci, s)]:
                    if len(comm_draws) >= n_comm_tags:
                        break
                    if b not in comm_draws and rng.random() < bond_prob:
                        comm_draws.append(b)
            if len(comm_draws) < n_comm_tags:
                left = [t for t in pool if t not in comm_draws]
                take = min(n_comm_tags - len(comm_draws), len(left))
                if take:
                    comm_draws.extend(rng.choice(left, size=take, replace=False))
            if len(comm_draws) < n_comm_tags:
                left = [t for t in vocab_c if t not in comm_draws]
                comm_draws.extend(
                    rng.choice(left, size=n_comm_tags - len(comm_draws), replace=False)
                )
            labels = comm_draws + shared_draws
            group = None
            if user_groups[i]:
                group = user_groups[i][int(rng.integers(0, len(user_groups[i])))]
            rows.append((user_names[i], group, _community_name(ci), labels))

    # intern labels over the generated transactions, first-seen order
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
    groups = GroupIndex.build(db, memberships)
    return db, graph, groups


def write_corpus_files(config: SynthConfig, transactions_path, graph_path, groups_path):
    """Generate and write the three corpus files in canonical form."""
    from .corpus import save_corpus

    db, graph, groups = generate(config)
    save_corpus(
        db,
        graph,
        groups,
        transactions_path=transactions_path,
        graph_path=graph_path,
        groups_path=groups_path,
    )
    return db, graph, groups
