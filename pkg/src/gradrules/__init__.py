"""gradrules: global if-then-else explanations for feedforward text classifiers.

The pipeline featurizes a labeled corpus with TF-IDF, trains a small ReLU
network, reweighs the inputs with gradients of a chosen output node,
discretizes the result to signs, keeps the most important features, and
induces per-class rule-sets that mimic the model's decisions.
"""

from .corpus import (
    DatasetSplit,
    Document,
    FeatureMatrix,
    TfidfFeaturizer,
    Vocabulary,
    load_corpus,
    load_dataset,
    strip_metadata,
    tokenize,
)
from .metrics import FidelityReport, classification_overlap, fidelity, rule_match
from .network import FeedForwardClassifier, load_network, save_network
from .pipeline import ConsistencyReport, RunConfig, SweepResult, consistency_report, run_pipeline, sweep
from .ripper import (
    Condition,
    RipperClassifier,
    Rule,
    RuleSet,
    apply_ruleset,
    foil_gain,
    grow_rule,
    induce_binary,
    induce_one_vs_rest,
    prune_rule,
    render_text,
    ruleset_from_json,
    ruleset_to_json,
)
from .saliency import GradientSignTransformer, reweigh, saliency_map, sign_reduce
from .selection import (
    FeatureScores,
    SelectionResult,
    mi_from_tables,
    mutual_information_scores,
    select_top_k,
    sensitivity_scores,
)

__version__ = "0.1.0"
