"""End-to-end orchestration of the explanation pipeline.

Stages: featurize -> train -> transform -> select -> induce/report. Each
stage writes its artifacts into the output bundle together with a
fingerprint of its inputs, so reruns skip stages whose inputs are
unchanged. All artifacts are timestamp-free; two runs with the same
config and inputs produce byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import formats
from .corpus import FeatureMatrix, load_dataset
from .metrics import binary_prf, classification_overlap, fidelity, rule_match
from .network import FeedForwardClassifier, load_network, save_network
from .ripper import RuleSet, induce_binary, render_text, ruleset_decisions, ruleset_to_json
from .saliency import GOLD, PREDICTED, reweigh, saliency_map, sign_reduce
from .selection import mutual_information_scores, select_top_k, sensitivity_scores

MODES = ("test-preds", "train-gold-original", "train-gold-transformed")
SELECTORS = ("sa", "mi")
LADDER = (2, 4, 8, 16, 32, 64, 128)

logger = logging.getLogger("gradrules")

__all__ = [
    "MODES",
    "SELECTORS",
    "LADDER",
    "RunConfig",
    "SweepCell",
    "SweepResult",
    "sweep",
    "ConsistencyReport",
    "consistency_report",
    "run_pipeline",
]


@dataclass
class RunConfig:
    """All parameters of one pipeline run; serialized into the bundle."""

    corpus: str = ""
    out: str = ""
    mode: str = "test-preds"
    selector: str = "mi"
    k: int = 1000
    seeds: int = 10
    min_cover_grid: str = "ladder"
    jobs: int = 1
    seed: int = 0
    epochs: int = 50
    hidden: tuple = (100, 100)
    learning_rate: float = 1e-3
    batch_size: int = 32
    ripper_rounds: int = 2
    grow_fraction: float = 2 / 3
    binarize_original: bool = False
    strip_headers: bool = True

    def validate(self) -> None:
        if not self.corpus:
            raise ValueError("corpus directory is required")
        if not self.out:
            raise ValueError("output directory is required")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.k < 1 or self.seeds < 1 or self.jobs < 1 or self.epochs < 1:
            raise ValueError("k, seeds, jobs and epochs must all be >= 1")
        self.grid_for(10)  # parse check

    def grid_for(self, positive_count: int) -> list[int]:
        """min-cover values for a class with the given positive count."""
        if self.min_cover_grid == "ladder":
            values = list(LADDER)
        elif self.min_cover_grid == "full":
            values = list(range(2, max(positive_count, 2) + 1))
        else:
            try:
                values = [int(v) for v in str(self.min_cover_grid).split(",") if v.strip()]
            except ValueError as exc:
                raise ValueError(f"bad min-cover grid {self.min_cover_grid!r}") from exc
            if not values or any(v < 1 for v in values):
                raise ValueError(f"bad min-cover grid {self.min_cover_grid!r}")
        capped = [v for v in values if v <= positive_count]
        return capped or [1]

    def sweep_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.seeds)]

    def to_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            default = by_name[key].default
            if key == "hidden":
                kwargs[key] = tuple(int(v) for v in str(raw).split(","))
            elif isinstance(default, bool):
                kwargs[key] = str(raw).strip().lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepCell:
    class_index: int
    class_name: str
    seed: int
    min_cover: int
    precision: float
    recall: float
    f: float
    ruleset: RuleSet


@dataclass
class SweepResult:
    class_names: list[str]
    cells: list[SweepCell]
    best: dict[int, SweepCell] = field(default_factory=dict)
    well_performing: dict[int, list[SweepCell]] = field(default_factory=dict)
    f_std: dict[int, float] = field(default_factory=dict)

    def finalize(self, tolerance: float = 0.01) -> "SweepResult":
        self.cells.sort(key=lambda c: (c.class_index, c.seed, c.min_cover))
        for c in range(len(self.class_names)):
            cells = [cell for cell in self.cells if cell.class_index == c]
            if not cells:
                continue
            best = max(cells, key=lambda cell: (cell.f, -cell.min_cover, -cell.seed))
            self.best[c] = best
            self.well_performing[c] = [cell for cell in cells if cell.f >= best.f - tolerance]
            self.f_std[c] = float(np.std([cell.f for cell in cells]))
        return self


_SWEEP_CTX: dict = {}


def _sweep_task(task: tuple[int, int, int]) -> SweepCell:
    c, seed, min_cover = task
    ctx = _SWEEP_CTX
    y_bin = (ctx["targets"] == c).astype(int)
    ruleset = induce_binary(
        ctx["X"],
        y_bin,
        feature_names=ctx["feature_names"],
        target_name=ctx["class_names"][c],
        default_name="others",
        seed=seed,
        min_cover=min_cover,
        optimize_rounds=ctx["optimize_rounds"],
        grow_fraction=ctx["grow_fraction"],
        feature_kinds=ctx["feature_kinds"],
    )
    fired, _ = ruleset_decisions(ruleset, ctx["X"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p, r, f = binary_prf(fired, y_bin.astype(bool))
    return SweepCell(c, ctx["class_names"][c], seed, min_cover, p, r, f, ruleset)


def sweep(
    X,
    targets: np.ndarray,
    class_names: list[str],
    seeds: list[int],
    grid_for,
    feature_names=None,
    feature_kinds="discrete",
    optimize_rounds: int = 2,
    grow_fraction: float = 2 / 3,
    jobs: int = 1,
) -> SweepResult:
    """Exhaustive (seed x min-cover) induction grid, per class.

    grid_for maps a class's positive count to its min-cover values.
    Cells are evaluated independently (optionally in parallel) and
    aggregated after a deterministic sort, so results do not depend on
    the schedule.
    """
    targets = np.asarray(targets, dtype=np.int64)
    tasks = []
    for c in range(len(class_names)):
        positives = int((targets == c).sum())
        for seed in seeds:
            for min_cover in grid_for(positives):
                tasks.append((c, seed, min_cover))

    global _SWEEP_CTX
    _SWEEP_CTX = {
        "X": X,
        "targets": targets,
        "class_names": list(class_names),
        "feature_names": feature_names,
        "feature_kinds": feature_kinds,
        "optimize_rounds": optimize_rounds,
        "grow_fraction": grow_fraction,
    }
    try:
        if jobs > 1 and multiprocessing.get_start_method(allow_none=True) in (None, "fork"):
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
                cells = list(pool.map(_sweep_task, tasks, chunksize=8))
        else:
            if jobs > 1:
                warnings.warn("parallel sweep needs fork start method; running sequentially")
            cells = [_sweep_task(t) for t in tasks]
    finally:
        _SWEEP_CTX = {}
    return SweepResult(class_names=list(class_names), cells=cells).finalize()


# ---------------------------------------------------------------------------
# consistency


@dataclass
class ConsistencyReport:
    class_names: list[str]
    rule_match_pct: dict[str, float]
    overlap_pct: dict[str, float]
    extras: dict[str, dict] = field(default_factory=dict)

    @property
    def mean_rule_match(self) -> float:
        return float(np.mean(list(self.rule_match_pct.values())))

    @property
    def mean_overlap(self) -> float:
        return float(np.mean(list(self.overlap_pct.values())))

    def to_dict(self) -> dict:
        per_class = {}
        for name in self.class_names:
            record = {
                "rule_match": self.rule_match_pct[name],
                "classification_overlap": self.overlap_pct[name],
            }
            record.update(self.extras.get(name, {}))
            per_class[name] = record
        return {
            "per_class": per_class,
            "mean_rule_match": self.mean_rule_match,
            "mean_classification_overlap": self.mean_overlap,
        }


def consistency_report(result: SweepResult, X) -> ConsistencyReport:
    """Rule-match and classification-overlap of well-performing cells vs the best."""
    rule_pct: dict[str, float] = {}
    overlap: dict[str, float] = {}
    extras: dict[str, dict] = {}
    for c, name in enumerate(result.class_names):
        best = result.best[c]
        others = [
            cell.ruleset
            for cell in result.well_performing[c]
            if (cell.seed, cell.min_cover) != (best.seed, best.min_cover)
        ]
        rule_pct[name] = rule_match(best.ruleset, others) if others else 100.0
        overlap[name] = classification_overlap(best.ruleset, others, X) if others else 100.0
        extras[name] = {
            "n_well_performing": len(result.well_performing[c]),
            "f_std": result.f_std[c],
            "best": {"seed": best.seed, "min_cover": best.min_cover, "f": best.f},
        }
    return ConsistencyReport(
        class_names=list(result.class_names),
        rule_match_pct=rule_pct,
        overlap_pct=overlap,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# stage bookkeeping


def _hash_parts(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, Path):
            h.update(part.name.encode())
            h.update(part.read_bytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _hash_corpus(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


class _Stages:
    def __init__(self, out: Path):
        self.path = out / "stages.json"
        self.state = json.loads(self.path.read_text()) if self.path.exists() else {}

    def fresh(self, name: str, fingerprint: str, artifacts: list[Path]) -> bool:
        return self.state.get(name) == fingerprint and all(a.exists() for a in artifacts)

    def record(self, name: str, fingerprint: str) -> None:
        self.state[name] = fingerprint
        self.path.write_text(json.dumps(self.state, sort_keys=True, indent=2) + "\n")


def _unify_labels(fm: FeatureMatrix, names: list[str]) -> FeatureMatrix:
    if fm.labels is None or fm.label_names == names:
        return fm
    mapping = np.asarray([names.index(n) for n in fm.label_names], dtype=np.int64)
    return FeatureMatrix(X=fm.X, labels=mapping[fm.labels], label_names=list(names))


def _json_dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# the pipeline


STAGE_ORDER = ("featurize", "train", "transform", "select", "induce")


def run_pipeline(config: RunConfig, until: str = "induce") -> dict:
    """Run the pipeline up to a stage (inclusive); returns a summary dict.

    Every stage is skipped when its fingerprint matches the previous run
    and its artifacts are still present.
    """
    config.validate()
    if until not in STAGE_ORDER:
        raise ValueError(f"unknown stage {until!r}")
    last = STAGE_ORDER.index(until)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run-config.txt").write_text(config.to_text(), encoding="utf-8")
    stages = _Stages(out)
    summary: dict = {"out": str(out)}

    # featurize
    corpus_hash = _hash_corpus(Path(config.corpus))
    fp = _hash_parts({"corpus": corpus_hash, "strip": config.strip_headers})
    cache_paths = [out / f"features-{split}.fm" for split in ("train", "dev", "test")]
    if not stages.fresh("featurize", fp, cache_paths):
        logger.info("featurize: building TF-IDF matrices from %s", config.corpus)
        ds = load_dataset(config.corpus, strip=config.strip_headers)
        for path, fm in zip(cache_paths, (ds.train, ds.dev, ds.test)):
            formats.write_feature_cache(path, fm, ds.vocab)
        stages.record("featurize", fp)
    else:
        logger.info("featurize: reusing cached matrices")
    train_fm, vocab = formats.read_feature_cache(cache_paths[0])
    dev_fm, _ = formats.read_feature_cache(cache_paths[1])
    test_fm, _ = formats.read_feature_cache(cache_paths[2])
    label_names = sorted(set(train_fm.label_names) | set(test_fm.label_names) | set(dev_fm.label_names))
    train_fm = _unify_labels(train_fm, label_names)
    dev_fm = _unify_labels(dev_fm, label_names)
    test_fm = _unify_labels(test_fm, label_names)
    summary["n_features"] = vocab.size
    summary["classes"] = label_names
    if last == 0:
        return summary

    # train
    net_params = {
        "hidden_units": list(config.hidden),
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
    }
    fp = _hash_parts({"features": stages.state.get("featurize")}, net_params)
    model_path = out / "model.net"
    pred_paths = {split: out / f"predictions-{split}.txt" for split in ("train", "test")}
    eval_path = out / "model-eval.json"
    if not stages.fresh("train", fp, [model_path, *pred_paths.values(), eval_path]):
        logger.info("train: fitting network (%d epochs)", config.epochs)
        net = FeedForwardClassifier(
            hidden_units=tuple(config.hidden),
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            seed=config.seed,
        )
        net.fit(train_fm.X, train_fm.labels)
        save_network(model_path, net)
        preds = {}
        for split, fm in (("train", train_fm), ("test", test_fm)):
            idx = net.predict(fm.X)
            preds[split] = idx
            formats.write_labels(pred_paths[split], [label_names[i] for i in idx])
        per_class = [
            binary_prf(preds["test"] == c, test_fm.labels == c, class_name=label_names[c])
            for c in range(len(label_names))
        ]
        _json_dump(
            eval_path,
            {
                "test_macro_f": float(np.mean([f for _, _, f in per_class])),
                "test_accuracy": float((preds["test"] == test_fm.labels).mean()),
                "test_per_class_f": {label_names[c]: per_class[c][2] for c in range(len(label_names))},
                "final_train_loss": net.loss_curve_[-1],
            },
        )
        stages.record("train", fp)
    else:
        logger.info("train: reusing saved network")
    net = load_network(model_path)
    if len(net.classes_) != len(label_names):
        raise RuntimeError("saved network disagrees with the corpus on the class count")
    predictions = {
        split: np.asarray([label_names.index(n) for n in formats.read_labels(path)], dtype=np.int64)
        for split, path in pred_paths.items()
    }
    summary["model_eval"] = json.loads(eval_path.read_text())
    if last == 1:
        return summary

    # transform
    sign_specs: list[tuple[str, FeatureMatrix, str]] = []
    if config.mode == "test-preds":
        sign_specs = [("train", train_fm, PREDICTED), ("test", test_fm, PREDICTED)]
    elif config.mode == "train-gold-transformed":
        sign_specs = [("train", train_fm, GOLD)]
    sign_paths = {split: out / f"signs-{split}.sm" for split, _, _ in sign_specs}
    saliency_path = out / "saliency.json"
    fp = _hash_parts({
        "train": stages.state.get("train"),
        "features": stages.state.get("featurize"),
        "mode": config.mode,
    })
    signs: dict[str, FeatureMatrix] = {}
    if sign_specs:
        if not stages.fresh("transform", fp, [*sign_paths.values(), saliency_path]):
            logger.info("transform: computing saliency and sign matrices")
            audit = {}
            for split, fm, mode in sign_specs:
                sal = saliency_map(net, fm, mode=mode)
                sm = sign_reduce(reweigh(fm, sal))
                formats.write_sign_matrix(sign_paths[split], sm, vocab)
                audit[split] = {
                    "mode": mode,
                    "zero_gradient_entries": sal.zero_entry_count(),
                    "entries": int(sal.shape[0]) * int(sal.shape[1]),
                }
            _json_dump(saliency_path, audit)
            stages.record("transform", fp)
        else:
            logger.info("transform: reusing sign matrices")
        for split in sign_paths:
            sm, _ = formats.read_sign_matrix(sign_paths[split])
            signs[split] = _unify_labels(sm, label_names)
        summary["saliency"] = json.loads(saliency_path.read_text())
    else:
        stages.record("transform", fp)
    if last == 2:
        return summary

    # select
    fp = _hash_parts({
        "transform": stages.state.get("transform"),
        "train": stages.state.get("train"),
        "selector": config.selector,
        "k": config.k,
        "mode": config.mode,
    })
    selection_path = out / "selection.tsv"
    if not stages.fresh("select", fp, [selection_path]):
        logger.info("select: scoring features with %s", config.selector)
        if config.selector == "sa":
            scores = sensitivity_scores(net, train_fm)
        elif config.mode == "train-gold-original":
            presence = train_fm.X.copy()
            presence.data = (presence.data > 0).astype(np.int8)
            scores = mutual_information_scores(
                FeatureMatrix(X=presence.tocsr(), labels=train_fm.labels, label_names=label_names)
            )
        else:
            scores = mutual_information_scores(signs["train"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sel = select_top_k(scores, config.k)
        terms = vocab.terms
        formats.write_selection(
            selection_path,
            sel.indices,
            [terms[i] for i in sel.indices],
            scores.scores[sel.indices],
        )
        stages.record("select", fp)
    else:
        logger.info("select: reusing selection")
    sel_indices, sel_terms, _ = formats.read_selection(selection_path)
    if last == 3:
        summary["selection"] = str(selection_path)
        return summary

    # induce + report
    if config.mode == "test-preds":
        ind_X = np.asarray(signs["test"].X[:, sel_indices].todense()).astype(np.int8)
        targets = predictions["test"]
        kinds = "discrete"
    elif config.mode == "train-gold-transformed":
        ind_X = np.asarray(signs["train"].X[:, sel_indices].todense()).astype(np.int8)
        targets = train_fm.labels
        kinds = "discrete"
    else:  # train-gold-original
        base = train_fm.X[:, sel_indices]
        if config.binarize_original:
            ind_X = (np.asarray(base.todense()) > 0).astype(np.int8)
            kinds = "discrete"
        else:
            ind_X = np.asarray(base.todense(), dtype=np.float64)
            kinds = "numeric"
        targets = train_fm.labels

    fp = _hash_parts({
        "select": stages.state.get("select"),
        "transform": stages.state.get("transform"),
        "train": stages.state.get("train"),
        "mode": config.mode,
        "binarize": config.binarize_original,
        "seeds": config.sweep_seeds(),
        "grid": str(config.min_cover_grid),
        "ripper_rounds": config.ripper_rounds,
        "grow_fraction": config.grow_fraction,
    })
    rules_dir = out / "rules"
    artifacts = [out / "sweep.csv", out / "fidelity.json", out / "consistency.json"]
    artifacts += [rules_dir / f"{name}.json" for name in label_names]
    if not stages.fresh("induce", fp, artifacts):
        logger.info("induce: sweeping %d seeds x grid over %d classes", config.seeds, len(label_names))
        result = sweep(
            ind_X,
            targets,
            label_names,
            seeds=config.sweep_seeds(),
            grid_for=config.grid_for,
            feature_names=list(sel_terms),
            feature_kinds=kinds,
            optimize_rounds=config.ripper_rounds,
            grow_fraction=config.grow_fraction,
            jobs=config.jobs,
        )
        rows = ["class,seed,min_cover,P,R,F"]
        for cell in result.cells:
            rows.append(
                f"{cell.class_name},{cell.seed},{cell.min_cover},"
                f"{cell.precision!r},{cell.recall!r},{cell.f!r}"
            )
        (out / "sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

        rules_dir.mkdir(exist_ok=True)
        best_rulesets = {result.class_names[c]: cell.ruleset for c, cell in result.best.items()}
        for name, ruleset in best_rulesets.items():
            (rules_dir / f"{name}.json").write_text(ruleset_to_json(ruleset), encoding="utf-8")
            (rules_dir / f"{name}.txt").write_text(render_text(ruleset), encoding="utf-8")

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = fidelity(best_rulesets, ind_X, targets, label_names)
        _json_dump(out / "fidelity.json", report.to_dict())
        consistency = consistency_report(result, ind_X)
        _json_dump(out / "consistency.json", consistency.to_dict())
        stages.record("induce", fp)
    else:
        logger.info("induce: reusing rule-sets and reports")

    summary["fidelity"] = json.loads((out / "fidelity.json").read_text())
    summary["consistency"] = json.loads((out / "consistency.json").read_text())
    summary["rules"] = {name: str(rules_dir / f"{name}.json") for name in label_names}
    return summary
