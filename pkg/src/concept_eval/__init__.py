"""Intrinsic evaluation of embeddings for ontological concepts."""

__version__ = "0.1.0"

from .embeddings import (
    CompositionMode,
    EmbeddingTable,
    PrefixMap,
    compose,
    cosine,
    load_embeddings,
    load_glove_text,
    load_tsv,
    load_word2vec_binary,
    load_word2vec_text,
    write_word2vec_binary,
    write_word2vec_text,
)
from .kg import KnowledgeSlice, load_kg, load_ntriples, load_schema_tsv, load_typing_tsv
from .categorization import (
    EntityPool,
    averaged_entity_vector,
    build_pool,
    categorization,
    coherence,
    top_k_entities,
)
from .hierarchy import (
    SimilarityMethod,
    absolute_semantic_error,
    pairwise_error_matrix,
    pearson,
    relatedness_correlation,
    semantic_similarity,
    spearman,
)
from .relational import selectional_preference_inventory, transition_distance, transition_table
from .projection import Projection2D, export_scatter, pca_2d, tsne_2d
from .fixtures import FixtureSpec, generate
