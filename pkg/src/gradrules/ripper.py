"""Ordered rule induction: grow by FOIL gain, prune by reduced error.

Binary rule-sets are induced by sequential covering: each rule is grown
on a growing split until it covers no negatives (or no literal has
positive gain), pruned back on a pruning split, and accepted only if its
prune-split precision exceeds 0.5 and it covers at least min_cover
correct instances. Optimization rounds then try a from-scratch
replacement and a grown revision of every rule, keeping whichever
variant minimizes whole-ruleset error on the pruning split.

Discrete features (sign values) use equality tests; numeric features use
<=/>= tests at thresholds observed in the growing data.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "Condition",
    "Rule",
    "RuleSet",
    "foil_gain",
    "grow_rule",
    "prune_rule",
    "RipperClassifier",
    "induce_binary",
    "induce_one_vs_rest",
    "apply_ruleset",
    "ruleset_decisions",
    "annotate_coverage",
    "ruleset_to_json",
    "ruleset_from_json",
    "render_text",
]

_OP_TEXT = {"eq": "=", "le": "<=", "ge": ">="}


@dataclass(frozen=True)
class Condition:
    """Single test on one feature; term is a display name only."""

    feature: int
    op: str
    value: float
    term: str = field(default="", compare=False)

    def covers(self, X: np.ndarray) -> np.ndarray:
        col = X[:, self.feature]
        if self.op == "eq":
            return col == self.value
        if self.op == "le":
            return col <= self.value
        if self.op == "ge":
            return col >= self.value
        raise ValueError(f"unknown op {self.op!r}")

    def render(self) -> str:
        name = self.term or f"f{self.feature}"
        if isinstance(self.value, float) and not self.value.is_integer():
            return f"({name} {_OP_TEXT[self.op]} {self.value:g})"
        return f"({name} {_OP_TEXT[self.op]} {int(self.value)})"


@dataclass
class Rule:
    """Conjunction of conditions with (a/b) coverage on an evaluation set."""

    conditions: tuple[Condition, ...]
    a: int = 0
    b: int = 0

    def covers(self, X: np.ndarray) -> np.ndarray:
        mask = np.ones(X.shape[0], dtype=bool)
        for cond in self.conditions:
            mask &= cond.covers(X)
        return mask

    def key(self) -> frozenset:
        return frozenset((c.feature, c.op, c.value) for c in self.conditions)


@dataclass
class RuleSet:
    """Ordered rules for one target class; first match wins, else default."""

    target: str
    rules: list[Rule]
    default: str
    default_a: int = 0
    default_b: int = 0
    params: dict = field(default_factory=dict)


def foil_gain(p1: float, n1: float, p0: float, n0: float) -> float:
    """Information gain of specializing a rule from (p0, n0) to (p1, n1) coverage."""
    if p0 <= 0:
        raise ValueError("p0 must be positive")
    if p1 < 0 or p1 > p0:
        raise ValueError("need 0 <= p1 <= p0")
    if p1 == 0:
        return -math.inf
    return p1 * (math.log2(p1 / (p1 + n1)) - math.log2(p0 / (p0 + n0)))


def _gain_vec(p1, n1, p0: float, n0: float) -> np.ndarray:
    p1 = np.asarray(p1, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    base = math.log2(p0 / (p0 + n0))
    with np.errstate(divide="ignore", invalid="ignore"):
        g = p1 * (np.log2(p1 / (p1 + n1)) - base)
    return np.where(p1 > 0, g, -np.inf)


def _as_dense(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.todense())
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("expected a 2-D data matrix")
    return X


def _is_discrete(feature_kinds, n_features: int) -> np.ndarray:
    if isinstance(feature_kinds, str):
        if feature_kinds not in ("discrete", "numeric"):
            raise ValueError(f"unknown feature kind {feature_kinds!r}")
        return np.full(n_features, feature_kinds == "discrete")
    kinds = np.asarray(feature_kinds)
    if kinds.shape != (n_features,):
        raise ValueError("feature_kinds must match the number of features")
    return kinds == "discrete"


def _term(names, f: int) -> str:
    return names[f] if names is not None else ""


def _best_candidate(X, covered, pos, used, discrete, names):
    """Highest-gain extension of the current rule, or None.

    Ties resolve to the smaller feature index, then eq < le < ge, then
    the smaller test value.
    """
    p0 = int((covered & pos).sum())
    n0 = int((covered & ~pos).sum())
    gains: list[np.ndarray] = []
    feats: list[np.ndarray] = []
    ops: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    disc = np.flatnonzero(discrete & ~used)
    if disc.size:
        Xp = X[covered & pos][:, disc]
        Xn = X[covered & ~pos][:, disc]
        for v in (-1, 0, 1):
            p1 = (Xp == v).sum(axis=0)
            n1 = (Xn == v).sum(axis=0)
            gains.append(_gain_vec(p1, n1, p0, n0))
            feats.append(disc)
            ops.append(np.zeros(disc.size, dtype=np.int8))
            vals.append(np.full(disc.size, float(v)))

    num = np.flatnonzero(~discrete & ~used)
    if num.size:
        yv = pos[covered]
        Xc = X[covered][:, num]
        for j, f in enumerate(num):
            xv = Xc[:, j]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            ys = yv[order]
            cp = np.cumsum(ys)
            cn = np.cumsum(~ys)
            m = xs.size
            last = np.empty(m, dtype=bool)
            last[-1] = True
            last[:-1] = xs[:-1] != xs[1:]
            first = np.empty(m, dtype=bool)
            first[0] = True
            first[1:] = xs[1:] != xs[:-1]
            thr = xs[last]
            g_le = _gain_vec(cp[last], cn[last], p0, n0)
            idx = np.flatnonzero(first)
            below_p = np.where(idx > 0, cp[np.maximum(idx - 1, 0)], 0)
            below_n = np.where(idx > 0, cn[np.maximum(idx - 1, 0)], 0)
            g_ge = _gain_vec(cp[-1] - below_p, cn[-1] - below_n, p0, n0)
            gains.append(np.concatenate([g_le, g_ge]))
            feats.append(np.full(2 * thr.size, f))
            ops.append(np.concatenate([np.ones(thr.size, np.int8), np.full(thr.size, 2, np.int8)]))
            vals.append(np.concatenate([thr, thr]).astype(np.float64))

    if not gains:
        return None
    gain = np.concatenate(gains)
    feat = np.concatenate(feats)
    op = np.concatenate(ops)
    val = np.concatenate(vals)
    order = np.lexsort((val, op, feat, -gain))
    best = order[0]
    if not gain[best] > 0:
        return None
    op_name = ("eq", "le", "ge")[op[best]]
    f = int(feat[best])
    value = int(val[best]) if op_name == "eq" else float(val[best])
    return Condition(feature=f, op=op_name, value=value, term=_term(names, f))


def grow_rule(X, y, mask=None, feature_kinds="discrete", feature_names=None, start=()) -> Rule:
    """Grow a conjunction by repeatedly adding the max-FOIL-gain condition.

    Growing stops when the rule covers no negatives on the growing rows
    or no candidate has strictly positive gain. The optional start tuple
    seeds the rule with existing conditions (used for rule revision).
    """
    X = _as_dense(X)
    y = np.asarray(y).astype(bool)
    mask = np.ones(X.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    discrete = _is_discrete(feature_kinds, X.shape[1])

    covered = mask.copy()
    used = np.zeros(X.shape[1], dtype=bool)
    conds = list(start)
    for cond in conds:
        covered &= cond.covers(X)
        used[cond.feature] = True
    if not (covered & y).any():
        raise ValueError("growing set has no uncovered positive instance")

    while True:
        if not (covered & ~y).any():
            break
        cand = _best_candidate(X, covered, y, used, discrete, feature_names)
        if cand is None:
            break
        conds.append(cand)
        used[cand.feature] = True
        covered &= cand.covers(X)
    return Rule(conditions=tuple(conds))


def _prune_metric(rule_conds, X, y, mask) -> float:
    cov = mask.copy()
    for cond in rule_conds:
        cov &= cond.covers(X)
    p = int((cov & y).sum())
    n = int((cov & ~y).sum())
    if p + n == 0:
        return 0.0
    return (p - n) / (p + n)


def prune_rule(rule: Rule, X, y, mask=None) -> Rule:
    """Drop final conditions while the prune metric (p-n)/(p+n) does not decrease."""
    if not rule.conditions:
        raise ValueError("cannot prune an empty rule")
    X = _as_dense(X)
    y = np.asarray(y).astype(bool)
    mask = np.ones(X.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    conds = list(rule.conditions)
    value = _prune_metric(conds, X, y, mask)
    while len(conds) > 1:
        shorter = _prune_metric(conds[:-1], X, y, mask)
        if shorter >= value:
            conds.pop()
            value = shorter
        else:
            break
    return Rule(conditions=tuple(conds))


class RipperClassifier(BaseEstimator, ClassifierMixin):
    """Binary RIPPER-style rule-set inducer for one target class.

    fit expects y in {0, 1} with 1 marking the target class, which must
    not be the strict majority (a majority target degenerates to a
    default-only rule-set, as the underlying algorithm is built around
    covering the minority). The induced set is exposed as ruleset_;
    acceptance_log_ keeps the (prune precision, correct coverage) pair
    recorded for every rule at the moment it was accepted.
    """

    def __init__(
        self,
        seed: int = 0,
        min_cover: int = 2,
        optimize_rounds: int = 2,
        grow_fraction: float = 2 / 3,
        feature_kinds="discrete",
    ):
        self.seed = seed
        self.min_cover = min_cover
        self.optimize_rounds = optimize_rounds
        self.grow_fraction = grow_fraction
        self.feature_kinds = feature_kinds

    def _params_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "min_cover": int(self.min_cover),
            "optimize_rounds": int(self.optimize_rounds),
            "grow_fraction": float(self.grow_fraction),
        }

    def fit(self, X, y, feature_names=None, target_name: str = "positive", default_name: str = "others"):
        if self.min_cover < 1:
            raise ValueError("min_cover must be >= 1")
        if not 0 < self.grow_fraction < 1:
            raise ValueError("grow_fraction must lie in (0, 1)")
        if not 0 <= self.optimize_rounds <= 5:
            raise ValueError("optimize_rounds must lie in 0..5")
        X = _as_dense(X)
        y = np.asarray(y)
        if set(np.unique(y)) - {0, 1}:
            raise ValueError("y must be binary with 1 marking the target class")
        y = y.astype(bool)
        n, k = X.shape
        if y.shape[0] != n:
            raise ValueError("X and y disagree on the number of rows")
        discrete = _is_discrete(self.feature_kinds, k)
        self.feature_names_ = feature_names
        self.classes_ = np.array([0, 1])
        self.acceptance_log_ = []

        n_pos = int(y.sum())
        n_neg = n - n_pos
        rules: list[Rule] = []
        if n_pos == 0 or n < 2:
            pass  # one-class / degenerate data: default-only rule-set
        elif n_pos > n_neg:
            warnings.warn(
                f"target class {target_name!r} is the majority ({n_pos}/{n}); "
                "inducing a default-only rule-set"
            )
        else:
            rules = self._sequential_covering(X, y, discrete, feature_names)

        ruleset = RuleSet(
            target=target_name,
            rules=rules,
            default=default_name,
            params=self._params_dict(),
        )
        self.ruleset_ = annotate_coverage(ruleset, X, y)
        return self

    def _sequential_covering(self, X, y, discrete, names) -> list[Rule]:
        n = X.shape[0]
        rng = np.random.default_rng(self.seed)
        perm = rng.permutation(n)
        n_grow = min(max(int(n * self.grow_fraction), 1), n - 1)
        in_grow = np.zeros(n, dtype=bool)
        in_grow[perm[:n_grow]] = True
        in_prune = ~in_grow

        active = np.ones(n, dtype=bool)
        rules: list[Rule] = []
        kinds = np.where(discrete, "discrete", "numeric")
        while (active & in_grow & y).any():
            rule = grow_rule(X, y, mask=active & in_grow, feature_kinds=kinds, feature_names=names)
            if rule.conditions:
                rule = prune_rule(rule, X, y, mask=active & in_prune)
            cov = rule.covers(X)
            p = int((cov & active & in_prune & y).sum())
            neg = int((cov & active & in_prune & ~y).sum())
            if p + neg == 0 or p / (p + neg) <= 0.5:
                break
            correct = int((cov & active & y).sum())
            if correct < self.min_cover:
                break
            self.acceptance_log_.append((p / (p + neg), correct))
            rules.append(rule)
            active &= ~cov
            if not (active & y).any():
                break

        for _ in range(self.optimize_rounds):
            rules = self._optimize_pass(rules, X, y, in_grow, in_prune, discrete, names)
        return rules

    def _optimize_pass(self, rules, X, y, in_grow, in_prune, discrete, names) -> list[Rule]:
        kinds = np.where(discrete, "discrete", "numeric")
        rules = list(rules)
        for i, original in enumerate(rules):
            others = [r for j, r in enumerate(rules) if j != i]
            other_cov = np.zeros(X.shape[0], dtype=bool)
            for r in others:
                other_cov |= r.covers(X)
            context = ~other_cov
            variants = [original]
            if (context & in_grow & y).any():
                replacement = grow_rule(X, y, mask=context & in_grow, feature_kinds=kinds, feature_names=names)
                if replacement.conditions:
                    replacement = prune_rule(replacement, X, y, mask=context & in_prune)
                    variants.append(replacement)
                try:
                    revision = grow_rule(
                        X, y, mask=context & in_grow, feature_kinds=kinds,
                        feature_names=names, start=original.conditions,
                    )
                except ValueError:
                    revision = None
                if revision is not None and revision.conditions:
                    revision = prune_rule(revision, X, y, mask=context & in_prune)
                    variants.append(revision)

            best, best_err = None, None
            for variant in variants:
                trial = [variant if j == i else r for j, r in enumerate(rules)]
                err = self._ruleset_error(trial, X, y, in_prune)
                if best_err is None or err < best_err:
                    best, best_err = variant, err
            rules[i] = best
        return rules

    @staticmethod
    def _ruleset_error(rules, X, y, mask) -> float:
        fired = np.zeros(X.shape[0], dtype=bool)
        for r in rules:
            fired |= r.covers(X)
        wrong = (fired != y) & mask
        total = int(mask.sum())
        return float(wrong.sum()) / total if total else 0.0

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "ruleset_")
        fired, _ = ruleset_decisions(self.ruleset_, _as_dense(X))
        return fired.astype(int)


def induce_binary(X, y, feature_names=None, target_name="positive", default_name="others", **params) -> RuleSet:
    """Functional wrapper around RipperClassifier for one binary induction."""
    clf = RipperClassifier(**params)
    clf.fit(X, y, feature_names=feature_names, target_name=target_name, default_name=default_name)
    return clf.ruleset_


def induce_one_vs_rest(X, y, class_names, feature_names=None, **params) -> dict[str, RuleSet]:
    """Independent binary induction per class, minority classes first.

    Classes are processed in order of increasing prevalence; since the
    binary runs are independent the order affects reporting only.
    """
    X = _as_dense(X)
    y = np.asarray(y, dtype=np.int64)
    if len(class_names) < 2:
        raise ValueError("need at least 2 classes")
    counts = np.bincount(y, minlength=len(class_names))
    order = np.lexsort((np.arange(len(class_names)), counts))
    out: dict[str, RuleSet] = {}
    for c in order:
        name = class_names[c]
        if counts[c] == 0:
            warnings.warn(f"class {name!r} absent from the data; emitting an empty rule-set")
        out[name] = induce_binary(
            X, (y == c).astype(int), feature_names=feature_names,
            target_name=name, default_name="others", **params,
        )
    return out


def ruleset_decisions(ruleset: RuleSet, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized first-match application: (fired?, index of fired rule or -1)."""
    X = _as_dense(X)
    n = X.shape[0]
    fired_index = np.full(n, -1, dtype=np.int64)
    unresolved = np.ones(n, dtype=bool)
    for i, rule in enumerate(ruleset.rules):
        hit = unresolved & rule.covers(X)
        fired_index[hit] = i
        unresolved &= ~hit
        if not unresolved.any():
            break
    return fired_index >= 0, fired_index


def apply_ruleset(ruleset: RuleSet, instance) -> tuple[str, int | str]:
    """Classify one instance; returns (class name, fired rule index or 'else')."""
    x = np.asarray(instance)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    fired, idx = ruleset_decisions(ruleset, x)
    if fired[0]:
        return ruleset.target, int(idx[0])
    return ruleset.default, "else"


def annotate_coverage(ruleset: RuleSet, X, y) -> RuleSet:
    """Recompute (a/b) for every rule and the default by first-match replay.

    y marks target-class membership (binary). For rules, a counts covered
    instances of the target class; for the default, a counts instances
    that are correctly not of the target class.
    """
    X = _as_dense(X)
    y = np.asarray(y).astype(bool)
    _, fired_index = ruleset_decisions(ruleset, X)
    new_rules = []
    for i, rule in enumerate(ruleset.rules):
        hit = fired_index == i
        new_rules.append(replace(rule, a=int((hit & y).sum()), b=int(hit.sum())))
    rest = fired_index < 0
    return RuleSet(
        target=ruleset.target,
        rules=new_rules,
        default=ruleset.default,
        default_a=int((rest & ~y).sum()),
        default_b=int(rest.sum()),
        params=dict(ruleset.params),
    )


def ruleset_to_json(ruleset: RuleSet) -> str:
    doc = {
        "class": ruleset.target,
        "rules": [
            {
                "conditions": [
                    {"feature": c.feature, "term": c.term, "op": c.op, "value": c.value}
                    for c in rule.conditions
                ],
                "a": rule.a,
                "b": rule.b,
            }
            for rule in ruleset.rules
        ],
        "default": {"class": ruleset.default, "a": ruleset.default_a, "b": ruleset.default_b},
        "config": ruleset.params,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def ruleset_from_json(text: str) -> RuleSet:
    doc = json.loads(text)
    rules = [
        Rule(
            conditions=tuple(
                Condition(feature=c["feature"], op=c["op"], value=c["value"], term=c.get("term", ""))
                for c in r["conditions"]
            ),
            a=r["a"],
            b=r["b"],
        )
        for r in doc["rules"]
    ]
    return RuleSet(
        target=doc["class"],
        rules=rules,
        default=doc["default"]["class"],
        default_a=doc["default"]["a"],
        default_b=doc["default"]["b"],
        params=doc.get("config", {}),
    )


def render_text(ruleset: RuleSet) -> str:
    """Human-readable if/elif/else rendering of a rule-set."""
    lines = []
    for i, rule in enumerate(ruleset.rules):
        head = "if" if i == 0 else "elif"
        body = " and ".join(c.render() for c in rule.conditions)
        lines.append(f"{head} {body} ⇒ {ruleset.target} ({rule.a}/{rule.b})")
    lines.append(f"else: {ruleset.default} ({ruleset.default_a}/{ruleset.default_b})")
    return "\n".join(lines) + "\n"
