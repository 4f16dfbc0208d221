"""Horn rule mining on directed labelled multigraphs, plus rule-based link prediction."""

from .types import (
    ALL_RULE_TYPES,
    DIGON_TYPES,
    TRIANGLE_TYPES,
    Interner,
    MiningConfig,
    Rule,
    Vocabulary,
)
from .ingest import DatasetSplit, ParseError, load_dataset
from .graph import GraphIndex
from .mining import AdjacencyCache, RuleSet, mine, pca_score, prune_and_emit
from .prediction import EvalResult, aggregate, evaluate, fired_confidences, head_index
from .sparql import BackendError, EndpointConfig, ProtocolError, SparqlEndpoint, mine_remote
from .estimators import HornRuleMiner, LabeledRule, RuleLinkPredictor, check_triples

__version__ = "0.1.0"

__all__ = [
    "ALL_RULE_TYPES",
    "DIGON_TYPES",
    "TRIANGLE_TYPES",
    "AdjacencyCache",
    "BackendError",
    "DatasetSplit",
    "EndpointConfig",
    "EvalResult",
    "GraphIndex",
    "HornRuleMiner",
    "Interner",
    "LabeledRule",
    "MiningConfig",
    "ParseError",
    "ProtocolError",
    "Rule",
    "RuleLinkPredictor",
    "RuleSet",
    "SparqlEndpoint",
    "Vocabulary",
    "aggregate",
    "check_triples",
    "evaluate",
    "fired_confidences",
    "head_index",
    "load_dataset",
    "mine",
    "mine_remote",
    "pca_score",
    "prune_and_emit",
    "__version__",
]
