"""Association-rule tag recommendation over social source databases."""

__version__ = "0.1.0"

from .corpus import (
    GroupIndex,
    ProfileReport,
    Query,
    SocialGraph,
    Tag,
    TagDatabase,
    TagVocabulary,
    Transaction,
    load_corpus,
    load_queries,
    profile,
    save_corpus,
)
from .errors import (
    ConfigError,
    CorpusFormatError,
    EmptyDatabaseError,
    InvalidQueryError,
    TagrecError,
    UncoverableTagError,
)
from .miner import (
    CooccurrenceIndex,
    FrequentTagsetCollection,
    MiningParams,
    build_cooccurrence,
    mine_closed,
    support,
)
from .codetable import (
    CodeTable,
    cover,
    encoded_size,
    estimate_support,
    induce,
    singleton_table,
)
from .recommend import (
    FittedRecommender,
    Recommendation,
    RecommenderConfig,
    fit_recommender,
    recommend_far,
    recommend_nar,
    recommend_par,
)
from .social import (
    Batch,
    BatchPolicy,
    BatchQueue,
    SourceSelection,
    build_batched,
    build_ck,
    build_community,
    build_personomy,
    build_source,
    build_uk,
    form_batches,
    nth_degree_users,
    route_community,
)
from .evaluation import (
    EvalConfig,
    MetricsReport,
    emit_report,
    make_query,
    parse_report,
    run_experiment,
    score,
    split,
)
from .synth import SynthConfig, generate
