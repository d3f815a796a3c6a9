"""Approximate lifelong data lineage for relational tuples via embedding-vector sets."""

from .config import Config, load_config, parse_config
from .embedding import (
    ColumnWeights,
    WordModel,
    column_vector,
    extract_corpora,
    hash_embedding,
    load_model,
    textify_value,
    tuple_vector,
    write_model,
)
from .vectorset import (
    LineageVectorSet,
    SimilarityParams,
    kmeans_cap,
    set_similarity,
    top_k_similar,
    tv_add,
    tv_mul,
)
from .columns import (
    ColumnLineageMap,
    Constant,
    cv_add,
    cv_mul,
    cv_similarity,
    drop_columns,
    finalize_native,
)
from .engine import HierarchicalLineage, LineageStore, TupleRecord
from .enhance import QueryDependencyDAG, apply_enhancements, weighted_column_similarity
from .vecsearch import VectorSetIndex, exhaustive_topk, long_candidate, long_targets
from .evaluate import (
    EvalReport,
    build_scenario,
    precision,
    random_baseline,
    recall_level,
    run_experiment,
)

__version__ = "0.1.0"
