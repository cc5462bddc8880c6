"""Fidelity and consistency metrics for induced rule-sets.

Fidelity is the macro-averaged F-score of the rule-sets predicting the
explained model's outputs (not the gold labels). Consistency compares
near-optimal rule-sets by exact unordered rule identity (rule match) and
by agreement of instance-level decisions (classification overlap).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ripper import RuleSet, ruleset_decisions

__all__ = [
    "FidelityReport",
    "binary_prf",
    "fidelity",
    "rule_match",
    "classification_overlap",
]


@dataclass
class FidelityReport:
    class_names: list[str]
    precision: np.ndarray
    recall: np.ndarray
    f_score: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f(self) -> float:
        return float(self.f_score.mean())

    def to_dict(self) -> dict:
        per_class = {
            name: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f": float(self.f_score[i]),
            }
            for i, name in enumerate(self.class_names)
        }
        return {
            "per_class": per_class,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f": self.macro_f,
            },
        }


def binary_prf(pred_pos: np.ndarray, true_pos: np.ndarray, class_name: str = "") -> tuple[float, float, float]:
    """Precision/recall/F for one binary decision vector against truth."""
    pred_pos = np.asarray(pred_pos, dtype=bool)
    true_pos = np.asarray(true_pos, dtype=bool)
    tp = int((pred_pos & true_pos).sum())
    fp = int((pred_pos & ~true_pos).sum())
    fn = int((~pred_pos & true_pos).sum())
    if not true_pos.any():
        warnings.warn(f"class {class_name!r} has zero target positives; F defined as 0")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f


def fidelity(rulesets: dict[str, RuleSet], X, targets: np.ndarray, class_names: list[str]) -> FidelityReport:
    """Per-class and macro P/R/F of the rule-sets against model predictions.

    targets holds the explained model's predicted class indices into
    class_names; rule-set c firing counts as predicting class c.
    """
    targets = np.asarray(targets)
    missing = [name for name in class_names if name not in rulesets]
    if missing:
        raise ValueError(f"missing rule-sets for classes: {missing}")
    p = np.zeros(len(class_names))
    r = np.zeros(len(class_names))
    f = np.zeros(len(class_names))
    for i, name in enumerate(class_names):
        fired, _ = ruleset_decisions(rulesets[name], X)
        p[i], r[i], f[i] = binary_prf(fired, targets == i, class_name=name)
    return FidelityReport(class_names=list(class_names), precision=p, recall=r, f_score=f)


def rule_match(best: RuleSet, others: list[RuleSet]) -> float:
    """Mean % of best's rules found exactly (as unordered condition sets) in each other set.

    Partial condition overlap counts as a mismatch; rule order and the
    (a/b) annotations are ignored.
    """
    best_rules = {rule.key() for rule in best.rules}
    if not best_rules:
        warnings.warn("rule match against an empty best rule-set")
        return 100.0 if all(not o.rules for o in others) else 0.0
    if not others:
        return 100.0
    scores = []
    for other in others:
        other_rules = {rule.key() for rule in other.rules}
        scores.append(100.0 * len(best_rules & other_rules) / len(best_rules))
    return float(np.mean(scores))


def classification_overlap(best: RuleSet, others: list[RuleSet], X) -> float:
    """Mean % of instances on which best and each other set decide identically."""
    n = X.shape[0]
    if n == 0:
        raise ValueError("classification overlap needs a nonempty evaluation matrix")
    if not others:
        return 100.0
    best_fired, _ = ruleset_decisions(best, X)
    scores = []
    for other in others:
        other_fired, _ = ruleset_decisions(other, X)
        scores.append(100.0 * float((best_fired == other_fired).mean()))
    return float(np.mean(scores))
