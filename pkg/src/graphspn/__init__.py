"""Tractable generative circuits over labeled graphs.

A permutation-sensitive sum-product circuit over flattened
node/edge-category tensors, composed with orderings of the nodes to
obtain (or approximate) permutation invariance. Supports exact
densities, marginals, conditionals, ancestral sampling, gradient
training, and a molecular-graph front end (SMILES subset, validity
metrics, valency correction).
"""

__version__ = "0.1.0"

from .backend import active_name, set_backend
from .chem import (
    BOND_ORDERS,
    DEFAULT_ALPHABET,
    DEFAULT_VALENCES,
    EDGE_NAMES,
    Metrics,
    Molecule,
    ValencyReport,
    check_valency,
    compute_metrics,
    correct,
    graph_to_mol,
    mol_to_graph,
    parse_smiles,
    smiles_reason,
    write_smiles,
)
from .circuit import (
    MARGINALIZED,
    Circuit,
    QueryMask,
    StructureConfig,
    ValidationReport,
    VariableSpec,
    build_circuit,
    freeze,
    log_density,
    log_density_batch,
    log_expectation,
    log_query,
    log_query_batch,
    sample,
    sample_many,
    validate_structure,
)
from .data import Dataset, FilterReport, load_corpus, split
from .errors import (
    CapacityError,
    DataError,
    DimensionError,
    FeasibilityError,
    GraphSPNError,
    ImpossibleEvidenceError,
    IntegrityError,
    ModelFormatError,
    ModelVersionError,
    SmilesError,
    StructureError,
    TrainingError,
    UnsupportedQueryError,
)
from .graphrep import (
    GraphTensor,
    Permutation,
    canonical_order,
    canonicalize,
    edge_var,
    empty_graph,
    enumerate_tuples,
    flatten,
    node_var,
    pad,
    permute,
    sample_permutations,
    subgraph,
    to_dot,
    tuple_count,
    unflatten,
    unpad,
)
from .invariance import (
    EXACT_MAX_NODES,
    VARIANTS,
    GraphSPNModel,
    Representation,
    build_model,
    logp,
    logp_exact,
    logp_kary,
    logp_none,
    logp_rand,
    logp_sort,
    sample_graph,
    sample_graphs,
    training_view,
    variable_spec_for,
)
from .modelfile import dumps, load_model, loads, save_model
from .queries import (
    MARGINAL,
    SubgraphQuery,
    compile_query,
    conditional_generate,
    expectation,
    fragment_query,
    parse_query_file,
)
from .train import TrainConfig, fit

__all__ = [
    "__version__",
    # backend
    "active_name", "set_backend",
    # circuit
    "MARGINALIZED", "Circuit", "QueryMask", "StructureConfig",
    "ValidationReport", "VariableSpec", "build_circuit", "freeze",
    "log_density", "log_density_batch", "log_expectation", "log_query",
    "log_query_batch", "sample", "sample_many", "validate_structure",
    # train
    "TrainConfig", "fit",
    # graphs
    "GraphTensor", "Permutation", "canonical_order", "canonicalize",
    "edge_var", "empty_graph", "enumerate_tuples", "flatten", "node_var",
    "pad", "permute", "sample_permutations", "subgraph", "to_dot",
    "tuple_count", "unflatten", "unpad",
    # invariance
    "EXACT_MAX_NODES", "VARIANTS", "GraphSPNModel", "Representation",
    "build_model", "logp", "logp_exact", "logp_kary", "logp_none",
    "logp_rand", "logp_sort", "sample_graph", "sample_graphs",
    "training_view", "variable_spec_for",
    # queries
    "MARGINAL", "SubgraphQuery", "compile_query", "conditional_generate",
    "expectation", "fragment_query", "parse_query_file",
    # chem
    "BOND_ORDERS", "DEFAULT_ALPHABET", "DEFAULT_VALENCES", "EDGE_NAMES",
    "Metrics", "Molecule", "ValencyReport", "check_valency",
    "compute_metrics", "correct", "graph_to_mol", "mol_to_graph",
    "parse_smiles", "smiles_reason", "write_smiles",
    # data
    "Dataset", "FilterReport", "load_corpus", "split",
    # model files
    "dumps", "load_model", "loads", "save_model",
    # errors
    "CapacityError", "DataError", "DimensionError", "FeasibilityError",
    "GraphSPNError", "ImpossibleEvidenceError", "IntegrityError",
    "ModelFormatError", "ModelVersionError", "SmilesError",
    "StructureError", "TrainingError", "UnsupportedQueryError",
]
