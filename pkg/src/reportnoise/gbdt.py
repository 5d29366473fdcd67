"""Gradient-boosted decision trees for predicting the target class of reported
content from its per-category report counts.

One-vs-rest logistic boosting: each target class gets its own ensemble of
regression trees fitted to the logistic-loss residuals, and the per-class
sigmoids are normalized into a distribution at prediction time. Splits are
found by exact greedy search over integer thresholds (``x <= t`` goes left).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .ingest import CATEGORIES, ContentRecord, FeatureVector
from .taxonomy import TARGETS, TargetClass, target_of

FORMAT_VERSION = 1
FEATURE_NAMES = tuple(c.value for c in CATEGORIES)
GAIN_EPS = 1e-12
HESSIAN_FLOOR = 1e-12
PROB_CLIP = 1e-12
ALL_COUNTRIES = "ALL"


class DegenerateTargets(ValueError):
    pass


class TooFewInstances(ValueError):
    pass


class EmptyTestSet(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingInstance:
    features: tuple[int, ...]
    target: TargetClass
    country: str
    content_id: str = ""

    def __post_init__(self):
        if any(int(x) != x or x < 0 for x in self.features):
            raise ValueError(f"features must be non-negative integers: {self.features}")


def build_instances(
    features: Iterable[FeatureVector], contents: Iterable[ContentRecord]
) -> list[TrainingInstance]:
    """Join feature vectors with labelled content records on content id.

    Vectors without a matching labelled record are dropped; the result is in
    feature order.
    """
    by_id = {r.content_id: r for r in contents if r.gcrc is not None}
    out = []
    for fv in features:
        rec = by_id.get(fv.content_id)
        if rec is None:
            continue
        out.append(TrainingInstance(tuple(fv.counts), target_of(rec.gcrc), rec.country, fv.content_id))
    return out


def split_train_test(
    instances: Sequence[TrainingInstance], test_fraction: float = 0.10, seed: int = 0
) -> tuple[list[TrainingInstance], list[TrainingInstance]]:
    """Stratified split: ``round(test_fraction * n_k)`` items of each class
    go to the test set, chosen by a seeded permutation. Both halves keep the
    input order."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for k in TARGETS:
        members = [i for i, inst in enumerate(instances) if inst.target is k]
        if not members:
            continue
        n_test = int(math.floor(test_fraction * len(members) + 0.5))
        perm = rng.permutation(len(members))
        test_idx.update(members[j] for j in perm[:n_test])
    if not test_idx:
        raise TooFewInstances(
            f"{len(instances)} instances give an empty test set at fraction {test_fraction}"
        )
    train = [x for i, x in enumerate(instances) if i not in test_idx]
    test = [x for i, x in enumerate(instances) if i in test_idx]
    return train, test


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 20

    def validate(self) -> None:
        if self.n_trees < 0 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError(f"invalid hyperparameters: {self}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[int] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def _add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        rows = np.arange(len(X))
        while True:
            f = feat[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= thr[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Tree":
        t = cls(
            feature=[int(x) for x in d["feature"]],
            threshold=[int(x) for x in d["threshold"]],
            left=[int(x) for x in d["left"]],
            right=[int(x) for x in d["right"]],
            value=[float(x) for x in d["value"]],
            gain=[float(x) for x in d["gain"]],
        )
        if len({len(v) for v in asdict(t).values()}) != 1 or not t.feature:
            raise ModelFormatError("tree arrays have inconsistent lengths")
        return t


@dataclass
class GbdtModel:
    classes: tuple[TargetClass, ...]
    init_scores: list[float]
    trees: list[list[Tree]]
    hyperparams: Hyperparams
    seed: int
    n_features: int
    feature_names: tuple[str, ...] = FEATURE_NAMES
    train_loss: list[list[float]] = field(default_factory=list)

    # -- scoring -----------------------------------------------------------

    def raw_scores(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        out = np.empty((len(X), len(self.classes)))
        for k, ensemble in enumerate(self.trees):
            s = np.full(len(X), self.init_scores[k])
            for tree in ensemble:
                s += tree.predict(X)
            out[:, k] = s
        return out

    def predict_proba(self, X) -> np.ndarray:
        p = _sigmoid(self.raw_scores(X))
        total = p.sum(axis=1, keepdims=True)
        uniform = np.full_like(p, 1.0 / p.shape[1])
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, p / np.where(total > 0, total, 1.0), uniform)

    def predict(self, X) -> list[TargetClass]:
        return [self.classes[i] for i in np.argmax(self.predict_proba(X), axis=1)]

    def feature_importances(self) -> np.ndarray:
        """Total split gain per feature over all trees, normalized to sum 1
        (all zeros when no tree has a split)."""
        imp = np.zeros(self.n_features)
        for ensemble in self.trees:
            for tree in ensemble:
                for f, g in zip(tree.feature, tree.gain):
                    if f >= 0:
                        imp[f] += g
        s = imp.sum()
        return imp / s if s > 0 else imp

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model": "gbdt-ovr-logistic",
            "classes": [c.value for c in self.classes],
            "feature_names": list(self.feature_names),
            "n_features": self.n_features,
            "hyperparams": asdict(self.hyperparams),
            "seed": self.seed,
            "init_scores": list(self.init_scores),
            "trees": [[t.to_dict() for t in ens] for ens in self.trees],
            "train_loss": [list(h) for h in self.train_loss],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping) -> "GbdtModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format_version {d.get('format_version')!r}")
        try:
            classes = tuple(TargetClass(c) for c in d["classes"])
            trees = [[Tree.from_dict(t) for t in ens] for ens in d["trees"]]
            if len(trees) != len(classes) or len(d["init_scores"]) != len(classes):
                raise ModelFormatError("per-class arrays do not match the class list")
            return cls(
                classes=classes,
                init_scores=[float(x) for x in d["init_scores"]],
                trees=trees,
                hyperparams=Hyperparams(**d["hyperparams"]),
                seed=int(d["seed"]),
                n_features=int(d["n_features"]),
                feature_names=tuple(d["feature_names"]),
                train_loss=[[float(x) for x in h] for h in d.get("train_loss", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        return cls.from_dict(json.loads(text))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_matrix(X, n_features: int | None = None) -> np.ndarray:
    if isinstance(X, FeatureVector):
        X = [X.counts]
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], FeatureVector):
        X = [v.counts for v in X]
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], TrainingInstance):
        X = [v.features for v in X]
    arr = np.asarray(X, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {arr.shape[1]}")
    if (arr < 0).any():
        raise ValueError("feature counts must be non-negative")
    return arr


def logistic_loss(y: np.ndarray, score: np.ndarray) -> float:
    """Mean binary log-loss for labels in {0,1} and raw scores."""
    # log(1 + exp(-s)) for positives, log(1 + exp(s)) for negatives
    z = np.where(y > 0, -score, score)
    return float(np.mean(np.logaddexp(0.0, z)))


# --------------------------------------------------------------------------
# training


class _SplitSearch:
    """Exact greedy split search on a fixed integer feature matrix.

    Each column is rank-encoded once. At a node, one weighted ``bincount``
    yields per-value residual sums for every feature, and their cumulative
    sums give the left-child statistics at every candidate threshold.
    """

    def __init__(self, X: np.ndarray, min_leaf: int):
        self.X = X
        self.min_leaf = min_leaf
        self.n, self.F = X.shape
        uniques, codes = [], []
        for f in range(self.F):
            u, c = np.unique(X[:, f], return_inverse=True)
            uniques.append(u)
            codes.append(c.reshape(-1))
        self.K = max((len(u) for u in uniques), default=1)
        self.values = np.zeros((self.F, self.K), dtype=np.int64)
        for f, u in enumerate(uniques):
            self.values[f, : len(u)] = u
        offsets = np.arange(self.F, dtype=np.int64) * self.K
        self.codes = (np.stack(codes, axis=1) + offsets) if self.F else np.zeros((self.n, 0), np.int64)

    def best(self, rows: np.ndarray, r: np.ndarray):
        m = len(rows)
        if m < 2 * self.min_leaf or self.F == 0:
            return None
        size = self.F * self.K
        idx = self.codes[rows].ravel()
        rr = r[rows]
        sums = np.bincount(idx, weights=np.repeat(rr, self.F), minlength=size).reshape(self.F, self.K)
        counts = np.bincount(idx, minlength=size).reshape(self.F, self.K)
        n_left = np.cumsum(counts, axis=1)
        # threshold = an observed value; the left child takes x <= threshold
        valid = (counts > 0) & (n_left >= self.min_leaf) & (n_left <= m - self.min_leaf)
        fi, ki = np.nonzero(valid)  # row-major: (feature, threshold) ascending
        if len(fi) == 0:
            return None
        GL = np.cumsum(sums, axis=1)[fi, ki]
        nl = n_left[fi, ki].astype(np.float64)
        G = float(rr.sum())
        gain = GL**2 / nl + (G - GL) ** 2 / (m - nl) - G**2 / m
        j = int(np.argmax(gain))  # first maximum: lowest feature, then lowest threshold
        g = float(gain[j])
        if not g > GAIN_EPS:
            return None
        f = int(fi[j])
        thr = int(self.values[f, ki[j]])
        go_left = self.X[rows, f] <= thr
        return f, thr, g, rows[go_left], rows[~go_left]


def _fit_tree(search: _SplitSearch, r, h, hp: Hyperparams, update: np.ndarray) -> Tree:
    tree = Tree()
    stack = [(tree._add(), np.arange(len(r)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        split = search.best(rows, r) if depth < hp.max_depth else None
        if split is None:
            v = hp.learning_rate * float(r[rows].sum()) / max(float(h[rows].sum()), HESSIAN_FLOOR)
            tree.value[node] = v
            update[rows] = v
            continue
        f, thr, g, lrows, rrows = split
        tree.feature[node], tree.threshold[node], tree.gain[node] = f, thr, g
        li, ri = tree._add(), tree._add()
        tree.left[node], tree.right[node] = li, ri
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))
    return tree


def train(
    instances: Sequence[TrainingInstance],
    hyperparams: Hyperparams | None = None,
    seed: int = 0,
    classes: Sequence[TargetClass] = TARGETS,
) -> GbdtModel:
    """Fit one logistic boosting ensemble per class.

    Leaves take a Newton step ``lr * sum(r) / sum(p(1-p))``. The search is
    exact and uses no sampling, so ``seed`` is recorded but does not change
    the result.
    """
    hp = hyperparams or Hyperparams()
    hp.validate()
    if not instances:
        raise DegenerateTargets("empty training set")
    targets = [inst.target for inst in instances]
    if len(set(targets)) < 2:
        raise DegenerateTargets(f"training set has a single target class: {targets[0].value}")
    X = _as_matrix([inst.features for inst in instances])
    search = _SplitSearch(X, hp.min_leaf)
    classes = tuple(classes)
    init, ensembles, history = [], [], []
    for k in classes:
        y = np.array([t is k for t in targets], dtype=np.float64)
        prior = min(max(y.mean(), PROB_CLIP), 1.0 - PROB_CLIP)
        f0 = math.log(prior / (1.0 - prior))
        score = np.full(len(y), f0)
        losses = [logistic_loss(y, score)]
        trees = []
        update = np.empty(len(y))
        for _ in range(hp.n_trees):
            p = _sigmoid(score)
            r = y - p
            h = p * (1.0 - p)
            trees.append(_fit_tree(search, r, h, hp, update))
            score += update
            losses.append(logistic_loss(y, score))
        init.append(f0)
        ensembles.append(trees)
        history.append(losses)
    n_features = X.shape[1]
    names = FEATURE_NAMES if n_features == len(FEATURE_NAMES) else tuple(f"f{i}" for i in range(n_features))
    return GbdtModel(classes, init, ensembles, hp, seed, n_features, names, history)


def predict_proba(model: GbdtModel, features) -> np.ndarray:
    """Distribution over ``model.classes`` for one vector (1-D result) or many."""
    single = isinstance(features, FeatureVector) or (
        np.ndim(features) == 1 and not isinstance(features[0], (FeatureVector, TrainingInstance))
    )
    p = model.predict_proba(features)
    return p[0] if single else p


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Binary F1; 1.0 when there are neither positives nor predicted positives."""
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def pr_curve(y_true: np.ndarray, scores: np.ndarray) -> list[PrPoint]:
    """Precision and recall at every distinct score, predicting positive when
    ``score >= threshold``; ordered by increasing threshold."""
    y_true = np.asarray(y_true, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(y_true.sum())
    if n_pos == 0:
        raise ValueError("PR curve needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], y_true[order]
    tp = np.cumsum(y)
    k = np.arange(1, len(s) + 1)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(s[1:] != s[:-1])[0], len(s) - 1]
    pts = [PrPoint(float(s[i]), float(tp[i] / k[i]), float(tp[i] / n_pos)) for i in last]
    return pts[::-1]


@dataclass
class EvalReport:
    classes: tuple[TargetClass, ...]
    f1: dict[TargetClass, float]
    f1_by_country: dict[str, dict[TargetClass, float]]
    pr_curves: dict[tuple[TargetClass, str], list[PrPoint]]
    confusion: list[list[int]]  # rows: true class, columns: predicted class
    importances: dict[str, float]
    n_test: int
    baseline_class: TargetClass
    baseline_f1: dict[TargetClass, float]

    @property
    def macro_f1(self) -> float:
        return float(np.mean([self.f1[c] for c in self.classes]))

    @property
    def baseline_macro_f1(self) -> float:
        return float(np.mean([self.baseline_f1[c] for c in self.classes]))

    def top_features(self, k: int = 4) -> list[str]:
        return [name for name, _ in sorted(self.importances.items(), key=lambda kv: (-kv[1], kv[0]))][:k]

    def to_dict(self) -> dict:
        return {
            "n_test": self.n_test,
            "classes": [c.value for c in self.classes],
            "f1": {c.value: v for c, v in self.f1.items()},
            "macro_f1": self.macro_f1,
            "f1_by_country": {
                cty: {c.value: v for c, v in d.items()} for cty, d in self.f1_by_country.items()
            },
            "baseline": {
                "class": self.baseline_class.value,
                "f1": {c.value: v for c, v in self.baseline_f1.items()},
                "macro_f1": self.baseline_macro_f1,
            },
            "confusion": {"labels": [c.value for c in self.classes], "matrix": self.confusion},
            "importances": self.importances,
            "pr_curves": sorted(f"{c.value}_{cty}" for c, cty in self.pr_curves),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def pr_filename(cls: TargetClass, country: str) -> str:
        return f"pr_{cls.value}_{country}.csv"

    def write_pr_curve(self, key: tuple[TargetClass, str], fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for p in self.pr_curves[key]:
            w.writerow([repr(p.threshold), repr(p.precision), repr(p.recall)])

    def write_pr_csvs(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        paths = []
        for key in sorted(self.pr_curves, key=lambda k: (k[0].value, k[1])):
            path = out_dir / self.pr_filename(*key)
            with open(path, "w", newline="") as fh:
                self.write_pr_curve(key, fh)
            paths.append(path)
        return paths


def majority_class(instances: Sequence[TrainingInstance]) -> TargetClass:
    counts = {c: 0 for c in TARGETS}
    for inst in instances:
        counts[inst.target] += 1
    return max(TARGETS, key=lambda c: (counts[c], -TARGETS.index(c)))


def evaluate(
    model: GbdtModel,
    test: Sequence[TrainingInstance],
    baseline_class: TargetClass | None = None,
) -> EvalReport:
    """Score a held-out set. ``baseline_class`` is the constant prediction of
    the majority baseline (normally the training majority); it defaults to the
    test majority."""
    if not test:
        raise EmptyTestSet("evaluation needs at least one test instance")
    classes = model.classes
    proba = model.predict_proba([t.features for t in test])
    pred_idx = np.argmax(proba, axis=1)
    true_idx = np.array([classes.index(t.target) for t in test])
    countries = np.array([t.country for t in test])

    def f1_table(mask):
        return {
            c: f1_score(true_idx[mask] == k, pred_idx[mask] == k) for k, c in enumerate(classes)
        }

    everyone = np.ones(len(test), dtype=bool)
    f1 = f1_table(everyone)
    by_country = {cty: f1_table(countries == cty) for cty in sorted(set(countries))}

    curves = {}
    for k, c in enumerate(classes):
        for cty in [ALL_COUNTRIES, *sorted(set(countries))]:
            mask = everyone if cty == ALL_COUNTRIES else countries == cty
            y = true_idx[mask] == k
            if y.any():
                curves[(c, cty)] = pr_curve(y, proba[mask, k])

    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(confusion, (true_idx, pred_idx), 1)

    base = baseline_class or majority_class(test)
    b = classes.index(base)
    baseline = {c: f1_score(true_idx == k, np.full(len(test), b == k)) for k, c in enumerate(classes)}
    imp = model.feature_importances()
    return EvalReport(
        classes=classes,
        f1=f1,
        f1_by_country=by_country,
        pr_curves=curves,
        confusion=confusion.tolist(),
        importances={name: float(v) for name, v in zip(model.feature_names, imp)},
        n_test=len(test),
        baseline_class=base,
        baseline_f1=baseline,
    )
