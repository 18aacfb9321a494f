"""CART classifier and the three training protocols (varlower, allsets, bestset).

Features are the per-bus loads, optionally followed by the total load, and
for the first varlower tree the bid ``c_s`` last.  Class keys are the
``Sample.key`` strings, so an allsets class is a whole set of active sets.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import SampleDatabase
from .dcopf import ActiveSet
from .kernels import cart


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 10
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")


@dataclass
class DecisionTree:
    feature: np.ndarray          # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray           # -1 at the root
    label: np.ndarray            # majority class index per node
    classes: list                # class keys, sorted
    feature_names: list
    train_y: np.ndarray          # class index of every training sample
    leaf_samples: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for v in range(1, self.n_nodes):
            d[v] = d[self.parent[v]] + 1
        return int(d.max(initial=0))

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return cart.apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> list:
        return [self.classes[self.label[leaf]] for leaf in self.apply(X)]

    def subtree_leaves(self, node: int) -> list:
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if self.feature[v] < 0:
                out.append(v)
            else:
                stack.extend((self.right[v], self.left[v]))
        return sorted(out)

    def classes_under(self, node: int) -> list:
        """Distinct training classes below ``node``, most frequent first."""
        counts = Counter()
        for leaf in self.subtree_leaves(node):
            counts.update(int(c) for c in self.train_y[self.leaf_samples[leaf]])
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [self.classes[c] for c, _ in ranked]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "parent": self.parent.tolist(), "label": self.label.tolist(),
                "classes": list(self.classes), "feature_names": list(self.feature_names),
                "train_y": self.train_y.tolist(),
                "leaf_samples": {str(k): v.tolist() for k, v in sorted(self.leaf_samples.items())}}

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        return cls(feature=np.array(doc["feature"], dtype=np.int64),
                   threshold=np.array(doc["threshold"], dtype=float),
                   left=np.array(doc["left"], dtype=np.int64),
                   right=np.array(doc["right"], dtype=np.int64),
                   parent=np.array(doc["parent"], dtype=np.int64),
                   label=np.array(doc["label"], dtype=np.int64),
                   classes=list(doc["classes"]), feature_names=list(doc["feature_names"]),
                   train_y=np.array(doc["train_y"], dtype=np.int64),
                   leaf_samples={int(k): np.array(v, dtype=np.int64)
                                 for k, v in doc["leaf_samples"].items()})


def train_cart(X, labels: Sequence[str], hp: Hyperparams = Hyperparams(),
               feature_names: Optional[Sequence[str]] = None) -> DecisionTree:
    """Greedy Gini tree grown depth-first, left child before right."""
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data is empty")
    if len(labels) != X.shape[0]:
        raise ValueError("labels and features disagree in length")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    classes = sorted(set(labels))
    pos = {c: i for i, c in enumerate(classes)}
    y = np.array([pos[c] for c in labels], dtype=np.int64)
    C = len(classes)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length mismatch")

    feature, threshold, left, right, parent, label = [], [], [], [], [], []
    leaf_samples = {}

    def new_node(par, idx):
        counts = np.bincount(y[idx], minlength=C)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        parent.append(par)
        label.append(int(np.argmax(counts)))      # ties go to the lower class index
        return len(feature) - 1

    root = new_node(-1, np.arange(len(y)))
    stack = [(root, np.arange(len(y), dtype=np.int64), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(y[idx], minlength=C)
        pure = np.count_nonzero(counts) <= 1
        if pure or depth >= hp.max_depth or idx.size < 2 * hp.min_samples_leaf:
            leaf_samples[node] = idx
            continue
        f, t, score = cart.best_split(X, y, idx, C, hp.min_samples_leaf)
        parent_score = float(counts @ counts) / idx.size
        if f < 0 or score <= parent_score * (1.0 + 1e-12):
            leaf_samples[node] = idx
            continue
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, t
        ln = new_node(node, li)
        rn = new_node(node, ri)
        left[node], right[node] = ln, rn
        # right pushed first so the left subtree is expanded first
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(parent, dtype=np.int64), np.array(label, dtype=np.int64),
                        classes, names, y, leaf_samples)


# ---------------------------------------------------------------------------
# features and splits


def feature_names(n_bus: int, total_load: bool, with_c_s: bool = False) -> list:
    names = [f"load[{i}]" for i in range(n_bus)]
    if total_load:
        names.append("total_load")
    if with_c_s:
        names.append("c_s")
    return names


def make_features(loads, total_load: bool = True, c_s=None) -> np.ndarray:
    L = np.atleast_2d(np.asarray(loads, dtype=float))
    cols = [L]
    if total_load:
        cols.append(L.sum(axis=1, keepdims=True))
    if c_s is not None:
        cols.append(np.asarray(c_s, dtype=float).reshape(-1, 1))
    return np.hstack(cols)


def db_features(db: SampleDatabase, total_load: bool = True, with_c_s: bool = False) -> np.ndarray:
    loads = np.array([s.load for s in db.samples])
    c_s = np.array([s.c_s for s in db.samples], dtype=float) if with_c_s else None
    return make_features(loads, total_load, c_s)


def split_train_test(db: SampleDatabase, train_fraction: float = 0.7,
                     rng: Optional[np.random.Generator] = None):
    """Random partition of the database by load draw.

    Samples sharing a load (the bid grid of a varlower draw) stay together so
    no load is seen both in training and in testing.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    groups: dict = {}
    for i, s in enumerate(db.samples):
        groups.setdefault(s.load.tobytes(), []).append(i)
    keys = list(groups)
    n = len(keys)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"cannot split {n} load draws at fraction {train_fraction}")
    perm = rng.permutation(n)
    train = sorted(i for k in perm[:n_train] for i in groups[keys[k]])
    test = sorted(i for k in perm[n_train:] for i in groups[keys[k]])
    return db.subset(train), db.subset(test)


def hyperparam_search(X, labels: Sequence[str], budget: int = 20,
                      rng: Optional[np.random.Generator] = None, val_fraction: float = 0.3,
                      depth_range=(3, 30), leaf_range=(1, 50), groups=None) -> Hyperparams:
    """Random search scored on an internal validation split; ties go to the smaller depth."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    n = len(labels)
    configs = [Hyperparams(int(rng.integers(depth_range[0], depth_range[1] + 1)),
                           int(rng.integers(leaf_range[0], leaf_range[1] + 1)))
               for _ in range(budget)]
    if groups is None:
        groups = np.arange(n)
    uniq, inv = np.unique(np.asarray(groups), return_inverse=True)
    n_val = int(round(val_fraction * len(uniq)))
    if n_val == 0 or n_val == len(uniq):
        return min(configs, key=lambda h: (h.max_depth, h.min_samples_leaf))
    val_groups = rng.permutation(len(uniq))[:n_val]
    is_val = np.isin(inv, val_groups)
    Xt, Xv = X[~is_val], X[is_val]
    yt = [labels[i] for i in np.flatnonzero(~is_val)]
    yv = [labels[i] for i in np.flatnonzero(is_val)]
    best, best_key = None, None
    for hp in configs:
        tree = train_cart(Xt, yt, hp)
        acc = float(np.mean([p == t for p, t in zip(tree.predict(Xv), yv)]))
        key = (-acc, hp.max_depth, hp.min_samples_leaf)
        if best_key is None or key < best_key:
            best, best_key = hp, key
    return best


# ---------------------------------------------------------------------------
# trained models


@dataclass
class TrainedModel:
    method: str
    n_gen: int
    n_line: int
    n_bus: int
    total_load: bool
    hyperparams: Hyperparams
    trees: list                       # one tree, or the varlower sub-trees
    thresholds: list = field(default_factory=list)
    first_tree: Optional[DecisionTree] = None
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    seed: Optional[int] = None
    dual_maxima: dict = field(default_factory=dict)
    case_name: str = ""

    @property
    def n_intervals(self) -> int:
        return len(self.trees)

    def interval_of(self, c_s: float) -> int:
        """Index of the half-open interval ``(lo, hi]`` holding ``c_s``."""
        return int(np.searchsorted(np.asarray(self.thresholds, dtype=float), c_s, side="left"))

    def features(self, loads) -> np.ndarray:
        X = make_features(loads, self.total_load)
        if X.shape[1] != self.n_bus + int(self.total_load):
            raise ValueError(f"load vector must have {self.n_bus} entries")
        return X

    def _to_sets(self, keys) -> list:
        return [ActiveSet.from_hex(self.n_gen, self.n_line, h)
                for key in keys for h in key.split("|")]

    def to_dict(self) -> dict:
        return {"method": self.method, "case": self.case_name, "n_gen": self.n_gen,
                "n_line": self.n_line, "n_bus": self.n_bus, "total_load": self.total_load,
                "hyperparams": asdict(self.hyperparams), "thresholds": list(self.thresholds),
                "trees": [t.to_dict() for t in self.trees],
                "first_tree": self.first_tree.to_dict() if self.first_tree is not None else None,
                "train_accuracy": self.train_accuracy, "test_accuracy": self.test_accuracy,
                "seed": self.seed, "dual_maxima": self.dual_maxima}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        first = doc.get("first_tree")
        return cls(method=doc["method"], n_gen=doc["n_gen"], n_line=doc["n_line"],
                   n_bus=doc["n_bus"], total_load=doc["total_load"],
                   hyperparams=Hyperparams(**doc["hyperparams"]),
                   trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
                   thresholds=[float(v) for v in doc["thresholds"]],
                   first_tree=DecisionTree.from_dict(first) if first is not None else None,
                   train_accuracy=doc["train_accuracy"], test_accuracy=doc["test_accuracy"],
                   seed=doc.get("seed"), dual_maxima=doc.get("dual_maxima", {}),
                   case_name=doc.get("case", ""))


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        return TrainedModel.from_dict(json.load(fh))


def train_varlower(db: SampleDatabase, hp: Hyperparams, total_load: bool = True,
                   sub_hp: Optional[Hyperparams] = None) -> TrainedModel:
    """First tree on (loads, c_s); its c_s thresholds cut the bid range into intervals,
    and each interval gets a load-only sub-tree."""
    if any(s.c_s is None for s in db.samples):
        raise ValueError("varlower training needs c_s in every sample")
    keys = [s.key for s in db.samples]
    n_bus = len(db.samples[0].load)
    X1 = db_features(db, total_load, with_c_s=True)
    first = train_cart(X1, keys, hp, feature_names(n_bus, total_load, with_c_s=True))
    c_col = X1.shape[1] - 1
    thresholds = sorted({float(first.threshold[v]) for v in range(first.n_nodes)
                         if first.feature[v] == c_col})
    c_s = X1[:, c_col]
    X = X1[:, :c_col]
    part = np.searchsorted(np.asarray(thresholds), c_s, side="left")
    trees = []
    names = feature_names(n_bus, total_load)
    for k in range(len(thresholds) + 1):
        idx = np.flatnonzero(part == k)
        if idx.size == 0:
            # unreachable with data-derived midpoints; keep the model usable anyway
            idx = np.arange(len(keys))
        trees.append(train_cart(X[idx], [keys[i] for i in idx], sub_hp or hp, names))
    return TrainedModel(method="varlower", n_gen=db.n_gen, n_line=db.n_line, n_bus=n_bus,
                        total_load=total_load, hyperparams=hp, trees=trees,
                        thresholds=thresholds, first_tree=first)


def train_single(db: SampleDatabase, hp: Hyperparams, total_load: bool = True) -> TrainedModel:
    keys = [s.key for s in db.samples]
    n_bus = len(db.samples[0].load)
    tree = train_cart(db_features(db, total_load), keys, hp, feature_names(n_bus, total_load))
    return TrainedModel(method=db.method, n_gen=db.n_gen, n_line=db.n_line, n_bus=n_bus,
                        total_load=total_load, hyperparams=hp, trees=[tree])


def _groups(db: SampleDatabase) -> np.ndarray:
    seen: dict = {}
    return np.array([seen.setdefault(s.load.tobytes(), len(seen)) for s in db.samples])


def train_model(db: SampleDatabase, budget: int = 20, hp: Optional[Hyperparams] = None,
                total_load: bool = True, train_fraction: float = 0.7, seed: Optional[int] = None,
                depth_range=(3, 30), leaf_range=(1, 50)) -> TrainedModel:
    """Split, search hyperparameters on the training part, train and score."""
    if len(db) < 2:
        raise ValueError("database needs at least two samples")
    rng = np.random.default_rng(seed)
    train, test = split_train_test(db, train_fraction, rng)
    if hp is None:
        with_c = db.method == "varlower"
        X = db_features(train, total_load, with_c_s=with_c)
        hp = hyperparam_search(X, [s.key for s in train.samples], budget, rng,
                               depth_range=depth_range, leaf_range=leaf_range,
                               groups=_groups(train))
    if db.method == "varlower":
        model = train_varlower(train, hp, total_load)
    else:
        model = train_single(train, hp, total_load)
    model.seed = seed
    model.case_name = db.case_name
    model.dual_maxima = db.dual_maxima.to_dict()
    model.train_accuracy = accuracy(model, train)
    model.test_accuracy = accuracy(model, test)
    return model


# ---------------------------------------------------------------------------
# prediction


def predict_sets(model: TrainedModel, load) -> list:
    """Candidate active sets for one load: one per varlower sub-tree, the stored
    member sets for allsets, a single set for bestset."""
    X = model.features(load)
    keys = [t.predict(X)[0] for t in model.trees]
    return model._to_sets(keys)


def predict_with_parent(model: TrainedModel, load) -> list:
    """Classes of all training samples under the parent of each reached leaf.

    The plain prediction comes first; a root leaf falls back to its own classes.
    """
    X = model.features(load)
    keys = []
    for t in model.trees:
        leaf = int(t.apply(X)[0])
        node = t.parent[leaf] if t.parent[leaf] >= 0 else leaf
        own = t.classes[t.label[leaf]]
        keys.append(own)
        keys.extend(k for k in t.classes_under(node) if k != own)
    return model._to_sets(keys)


def predict_keys(model: TrainedModel, X: np.ndarray, c_s=None) -> list:
    """Class keys for feature rows; varlower routes each row by its bid."""
    if model.method != "varlower":
        return model.trees[0].predict(X)
    if c_s is None:
        raise ValueError("varlower accuracy needs the bid of each row")
    out = [None] * X.shape[0]
    part = np.searchsorted(np.asarray(model.thresholds, dtype=float), np.asarray(c_s), side="left")
    for k, tree in enumerate(model.trees):
        rows = np.flatnonzero(part == k)
        if rows.size:
            for r, p in zip(rows, tree.predict(X[rows])):
                out[r] = p
    return out


def accuracy(model: TrainedModel, db: SampleDatabase) -> float:
    """Share of samples whose label is predicted exactly."""
    if len(db) == 0:
        raise ValueError("empty test set")
    X = db_features(db, model.total_load)
    c_s = [s.c_s for s in db.samples] if model.method == "varlower" else None
    pred = predict_keys(model, X, c_s)
    return float(np.mean([p == s.key for p, s in zip(pred, db.samples)]))
