"""Command-line surface: mine, induce, recommend, eval, synth, batch-replay.

Every command is deterministic given its inputs and seed; evaluation runs
additionally emit a JSON manifest (resolved configuration, input file
digests, seed, tool version) alongside their output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass

from . import __version__
from .codetable import induce, write_codetable
from .corpus import load_corpus, load_queries, Query
from .errors import TagrecError, ConfigError
from .evaluation import EvalConfig, emit_report, run_experiment
from .miner import MiningParams, build_cooccurrence, mine_closed, write_cooccurrence, write_tagsets
from .recommend import METHODS, RecommenderConfig, fit_recommender
from .social import (
    KIND_ALIASES,
    SOURCE_KINDS,
    BatchPolicy,
    SourceSelection,
    build_batched,
    build_source,
    form_batches,
)
from .synth import SynthConfig, write_corpus_files

_DEGREE_SOURCES = ("uk", "social-personomy", "social-batched")
_GRAPH_SOURCES = _DEGREE_SOURCES
_GROUPS_SOURCES = ("community-batched",)


@dataclass
class RunManifest:
    command: str
    config: dict
    input_digests: dict
    seed: int
    version: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _minsup(value: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}")
    return x


def _int_pair(value: str):
    parts = value.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi got {value!r}")
    return (int(parts[0]), int(parts[1]))


def _add_mining_args(p, minsup_default=0.0007, maxlen_default=3):
    p.add_argument("--minsup", type=_minsup, default=minsup_default,
                   help="minimum support: fraction in (0,1) or integral absolute count")
    p.add_argument("--maxlen", type=int, default=maxlen_default, help="maximum tagset length")
    p.add_argument("--top-m", type=int, default=50, dest="top_m",
                   help="co-occurring tags kept per tag")
    p.add_argument("--global-closure", action="store_true",
                   help="closedness against the unbounded lattice instead of the length bound")


def _mining_params(args, minsup=None, maxlen=None) -> MiningParams:
    return MiningParams(
        min_support=minsup if minsup is not None else args.minsup,
        max_len=maxlen if maxlen is not None else args.maxlen,
        top_m=args.top_m,
        bounded_closure=not args.global_closure,
    )


def _load(args, need_graph=False, need_groups=False):
    graph_path = getattr(args, "graph", None)
    groups_path = getattr(args, "groups", None)
    if need_graph and graph_path is None:
        raise ConfigError("this source needs a social graph; pass --graph FILE")
    if need_groups and groups_path is None:
        raise ConfigError("this source needs group memberships; pass --groups FILE")
    return load_corpus(args.corpus, graph_path, groups_path, min_tags=args.min_tags)


def _write_or_print(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_mine(args) -> int:
    db, _, _ = _load(args)
    params = _mining_params(args)
    t0 = time.perf_counter()
    collection = mine_closed(db, params)
    index = build_cooccurrence(db, params.top_m)
    elapsed = time.perf_counter() - t0
    prefix = args.out or args.corpus
    write_tagsets(collection, db.vocabulary, f"{prefix}.tagsets.txt")
    write_cooccurrence(index, db.vocabulary, f"{prefix}.cooc.txt")
    print(f"mined {len(collection)} closed frequent tagsets in {elapsed * 1000:.0f} ms")
    print(f"wrote {prefix}.tagsets.txt and {prefix}.cooc.txt")
    return 0


def cmd_induce(args) -> int:
    db, _, _ = _load(args)
    params = _mining_params(args)
    t0 = time.perf_counter()
    candidates = mine_closed(db, params)
    ct = induce(db, candidates)
    elapsed = time.perf_counter() - t0
    prefix = args.out or args.corpus
    write_codetable(ct, db.vocabulary, f"{prefix}.codetable.txt")
    print(
        f"induced code table: {len(ct)} elements from {len(candidates)} candidates "
        f"in {elapsed * 1000:.0f} ms"
    )
    print(f"wrote {prefix}.codetable.txt")
    return 0


def _source_selection(args) -> SourceSelection:
    kind = KIND_ALIASES.get(args.source, args.source)
    degree = args.degree if kind in _DEGREE_SOURCES else None
    if kind in _DEGREE_SOURCES and args.degree is None:
        raise ConfigError(f"source {kind!r} requires --degree N")
    return SourceSelection(kind=kind, degree=degree)


def cmd_recommend(args) -> int:
    selection = _source_selection(args)
    db, graph, groups = _load(
        args,
        need_graph=selection.kind in _GRAPH_SOURCES,
        need_groups=selection.kind in _GROUPS_SOURCES,
    )
    labels = [t for t in args.tags.split(",") if t]
    query = Query(
        user=args.user,
        input=frozenset(db.vocabulary.id_of(t) for t in labels),
        interest=args.interest,
    )
    source_db = build_source(selection, db, graph, groups, query=query)
    config = RecommenderConfig(
        method=args.method,
        mining=_mining_params(args),
        ct_mining=MiningParams(args.ct_minsup, args.maxlen, args.top_m),
        max_recommendations=args.limit,
    )
    fitted = fit_recommender(source_db, config)
    rec = fitted.recommend(query)
    lines = [f"{db.vocabulary.label(t)}\t{score:.6f}" for t, score in rec.items]
    _write_or_print("\n".join(lines) + ("\n" if lines else ""), args.out)
    return 0


def cmd_eval(args) -> int:
    methods = [m.strip() for m in args.method.split(",")]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
    sources = []
    for s in (t.strip() for t in args.source.split(",")):
        kind = KIND_ALIASES.get(s, s)
        if kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source {s!r}; expected one of {SOURCE_KINDS}")
        sources.append(kind)
        # group-knowledge runs come with their collective-knowledge baseline
        if kind == "community-batched" and "ck" not in sources:
            sources.append("ck")
    seen = set()
    sources = [s for s in sources if not (s in seen or seen.add(s))]
    ks = [int(k) for k in args.k.split(",")]

    db, graph, groups = _load(
        args,
        need_graph=any(s in _GRAPH_SOURCES for s in sources),
        need_groups=any(s in _GROUPS_SOURCES for s in sources),
    )
    at_ranks = tuple(int(r) for r in args.at_ranks.split(","))
    reports = []
    for k in ks:
        for method in methods:
            for source in sources:
                degree = args.degree if source in _DEGREE_SOURCES else None
                if source in _DEGREE_SOURCES and degree is None:
                    raise ConfigError(f"source {source!r} requires --degree N")
                config = EvalConfig(
                    k=k,
                    method=RecommenderConfig(
                        method=method,
                        mining=_mining_params(args),
                        ct_mining=MiningParams(args.ct_minsup, args.maxlen, args.top_m),
                        max_recommendations=args.limit,
                    ),
                    source=SourceSelection(kind=source, degree=degree),
                    split=args.split,
                    seed=args.seed,
                    at_ranks=at_ranks,
                    input_tag_strategy=args.strategy,
                )
                reports.append(run_experiment(db, config, graph, groups))
    text = emit_report(reports, args.format)
    _write_or_print(text, args.out)

    manifest = RunManifest(
        command="eval",
        config={
            "k": ks, "method": methods, "source": sources, "degree": args.degree,
            "split": args.split, "minsup": args.minsup, "maxlen": args.maxlen,
            "top_m": args.top_m, "ct_minsup": args.ct_minsup, "limit": args.limit,
            "at_ranks": list(at_ranks), "strategy": args.strategy,
            "min_tags": args.min_tags, "format": args.format,
        },
        input_digests={
            p: _digest(p)
            for p in (args.corpus, args.graph, args.groups)
            if p is not None
        },
        seed=args.seed,
        version=__version__,
    )
    if args.out:
        with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(manifest.to_json())
    else:
        sys.stderr.write(manifest.to_json())
    return 0


def cmd_synth(args) -> int:
    config = SynthConfig(
        users=args.users,
        communities=args.communities,
        tags_per_community=args.tags_per_community,
        shared_tags=args.shared_tags,
        transactions_per_user=args.tx_per_user,
        tags_per_transaction=args.tags_per_tx,
        intra_community_edge_prob=args.intra,
        inter_community_edge_prob=args.inter,
        group_count=args.group_count,
        group_membership_prob=args.membership,
        community_tag_affinity=args.affinity,
        seed=args.seed,
    )
    prefix = args.out or "synthetic"
    db, graph, groups = write_corpus_files(
        config,
        f"{prefix}.transactions.tsv",
        f"{prefix}.graph.txt",
        f"{prefix}.groups.tsv",
    )
    print(
        f"generated {len(db)} transactions, {len(db.vocabulary)} tags, "
        f"{len(db.users())} users, {len(graph.edges())} edges, "
        f"{len(groups.group_members)} groups"
    )
    print(f"wrote {prefix}.transactions.tsv, {prefix}.graph.txt, {prefix}.groups.tsv")
    return 0


def cmd_batch_replay(args) -> int:
    degree_needed = args.source == "social-batched"
    db, graph, _ = _load(args, need_graph=degree_needed)
    if args.source not in ("batched", "social-batched"):
        raise ConfigError("batch-replay supports sources 'batched' and 'social-batched'")
    degree = args.degree if degree_needed else None
    if degree_needed and degree is None:
        raise ConfigError("source 'social-batched' requires --degree N")
    queries = load_queries(args.queries, db.vocabulary)
    policy = BatchPolicy(max_queries=args.max_queries, max_wait=args.max_wait)
    config = RecommenderConfig(
        method=args.method,
        mining=_mining_params(args),
        ct_mining=MiningParams(args.ct_minsup, args.maxlen, args.top_m),
        max_recommendations=args.limit,
    )
    lines = []
    batch_sizes = []
    mining_invocations = 0
    t0 = time.perf_counter()
    for batch in form_batches(queries, policy):
        source_db = build_batched(db, graph, batch, degree)
        fitted = fit_recommender(source_db, config)
        mining_invocations += 1
        batch_sizes.append(len(batch))
        for q in batch.queries:
            rec = fitted.recommend(q)
            inp = ",".join(sorted(db.vocabulary.label(t) for t in q.input))
            recs = ",".join(f"{db.vocabulary.label(t)}:{s:.6f}" for t, s in rec.items)
            lines.append(f"{q.user}\t{inp}\t{recs}")
    elapsed = time.perf_counter() - t0
    _write_or_print("\n".join(lines) + ("\n" if lines else ""), args.out)
    print(
        f"replayed {len(queries)} queries in {len(batch_sizes)} batch(es) "
        f"{batch_sizes}; mining invocations: {mining_invocations}; "
        f"{elapsed * 1000:.0f} ms",
        file=sys.stderr if not args.out else sys.stdout,
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="tagrec",
        description="Association-rule tag recommendation over social source databases.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True):
        if corpus:
            p.add_argument("corpus", help="transactions file")
            p.add_argument("--graph", default=None, help="social graph file")
            p.add_argument("--groups", default=None, help="group membership file")
            p.add_argument("--min-tags", type=int, default=2, dest="min_tags",
                           help="drop transactions with fewer tags")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--out", default=None, help="output path (default: stdout or input-derived)")

    p = sub.add_parser("mine", help="mine closed frequent tagsets and the co-occurrence index",
                       formatter_class=fmt)
    common(p)
    _add_mining_args(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("induce", help="induce a code table", formatter_class=fmt)
    common(p)
    _add_mining_args(p, minsup_default=0.00007)
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("recommend", help="answer one query", formatter_class=fmt)
    common(p)
    _add_mining_args(p)
    p.add_argument("--method", choices=METHODS, default="far")
    p.add_argument("--source", default="ck", help=f"one of {', '.join(SOURCE_KINDS)} (or 'community')")
    p.add_argument("--degree", type=int, default=None, help="friendship hops for social sources")
    p.add_argument("--user", required=True, help="querying user id")
    p.add_argument("--tags", required=True, help="comma-separated input tag labels")
    p.add_argument("--interest", default=None, help="interest label of the query")
    p.add_argument("--limit", type=int, default=5, help="recommendations to return")
    p.add_argument("--ct-minsup", type=_minsup, default=0.00007, dest="ct_minsup",
                   help="candidate minsup for code-table induction")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("eval", help="run the experiment grid and emit a report", formatter_class=fmt)
    common(p)
    _add_mining_args(p)
    p.add_argument("--method", default="far", help="comma list of methods (par,nar,far)")
    p.add_argument("--source", default="ck", help="comma list of sources")
    p.add_argument("--degree", type=int, default=None, help="friendship hops for social sources")
    p.add_argument("--k", default="1", help="comma list of input-tagset sizes")
    p.add_argument("--split", choices=("cv5", "holdout40"), default="cv5")
    p.add_argument("--at-ranks", default="1,3,5", dest="at_ranks", help="ranks for P@ and S@")
    p.add_argument("--limit", type=int, default=5, help="recommendations per query")
    p.add_argument("--ct-minsup", type=_minsup, default=0.00007, dest="ct_minsup",
                   help="candidate minsup for code-table induction")
    p.add_argument("--strategy", choices=("random", "most-frequent-first"), default="random",
                   help="how the k input tags are picked from a test transaction")
    p.add_argument("--format", choices=("tsv", "markdown"), default="tsv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus", formatter_class=fmt)
    common(p, corpus=False)
    p.add_argument("--users", type=int, default=400)
    p.add_argument("--communities", type=int, default=2)
    p.add_argument("--tags-per-community", type=int, default=60, dest="tags_per_community")
    p.add_argument("--shared-tags", type=int, default=20, dest="shared_tags")
    p.add_argument("--tx-per-user", type=_int_pair, default=(2, 5), dest="tx_per_user",
                   help="lo,hi transactions per user")
    p.add_argument("--tags-per-tx", type=_int_pair, default=(4, 7), dest="tags_per_tx",
                   help="lo,hi tags per transaction")
    p.add_argument("--intra", type=float, default=0.05, help="intra-community edge probability")
    p.add_argument("--inter", type=float, default=0.002, help="inter-community edge probability")
    p.add_argument("--group-count", type=int, default=8, dest="group_count")
    p.add_argument("--membership", type=float, default=0.3, help="group membership probability")
    p.add_argument("--affinity", type=float, default=0.8, help="community tag affinity")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("batch-replay", help="replay a query stream through the batching pipeline",
                       formatter_class=fmt)
    common(p)
    _add_mining_args(p)
    p.add_argument("--queries", required=True, help="query stream file")
    p.add_argument("--max-queries", type=int, default=100, dest="max_queries")
    p.add_argument("--max-wait", type=float, default=None, dest="max_wait",
                   help="seconds; unset waits forever (offline replay)")
    p.add_argument("--method", choices=METHODS, default="far")
    p.add_argument("--source", choices=("batched", "social-batched"), default="batched")
    p.add_argument("--degree", type=int, default=None, help="friendship hops for social-batched")
    p.add_argument("--limit", type=int, default=5)
    p.add_argument("--ct-minsup", type=_minsup, default=0.00007, dest="ct_minsup")
    p.set_defaults(func=cmd_batch_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TagrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
