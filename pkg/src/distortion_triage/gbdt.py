"""Multiclass gradient-boosted trees, three growth strategies, and mode voting.

All three variants minimize softmax cross-entropy.  Each boosting round fits
one regression tree per class to the per-sample gradient ``p - y`` (and
Hessian ``p (1 - p)``):

* ``level_wise_exact``     exact greedy splits, breadth-first to ``max_depth``,
                           Newton leaves ``-G / (H + lambda)``
* ``leaf_wise_histogram``  32-bin quantile histograms, best-first growth up to
                           ``max_leaves``, Newton leaves
* ``residual_fit``         exact greedy, squared-error fit of the negative
                           gradient, leaves are its mean

Trees send ``x[feature] <= threshold`` to the left child.
"""

from __future__ import annotations

import heapq
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, FormatError, IoError, VersionError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
NUM_CLASSES = 6
VARIANTS = ("level_wise_exact", "leaf_wise_histogram", "residual_fit")
_MIN_GAIN = 1e-12
_PRIOR_FLOOR = 1e-6


@dataclass(frozen=True)
class GbdtConfig:
    variant: str
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int | None = 4
    max_leaves: int | None = None
    min_samples_leaf: int = 1
    reg_lambda: float = 1.0
    n_bins: int = 32
    subsample: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not (0 < self.learning_rate <= 1):
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.max_leaves is not None and self.max_leaves < 2:
            raise ConfigError("max_leaves must be >= 2")
        if self.variant == "leaf_wise_histogram" and self.max_leaves is None:
            raise ConfigError("leaf_wise_histogram needs max_leaves")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.reg_lambda < 0:
            raise ConfigError("reg_lambda must be >= 0")
        if not (2 <= self.n_bins <= 256):
            raise ConfigError("n_bins must lie in [2, 256]")
        if not (0 < self.subsample <= 1):
            raise ConfigError("subsample must lie in (0, 1]")

    @property
    def newton(self) -> bool:
        return self.variant != "residual_fit"


DEFAULT_CONFIGS = {
    "level_wise_exact": GbdtConfig("level_wise_exact", max_depth=4, reg_lambda=1.0),
    "leaf_wise_histogram": GbdtConfig(
        "leaf_wise_histogram", max_depth=None, max_leaves=15, min_samples_leaf=5, reg_lambda=1.0, n_bins=32
    ),
    "residual_fit": GbdtConfig("residual_fit", max_depth=3, reg_lambda=0.0),
}


# ------------------------------------------------------------------ trees

@dataclass
class Tree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf holding ``value[k]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(value)]))

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        def walk(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(walk(self.left[k]), walk(self.right[k]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.value[node]
            go_left = X[rows[active], feat[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def to_json(self, k: int = 0) -> dict:
        if self.feature[k] < 0:
            return {"leaf": float(self.value[k])}
        return {
            "feature": int(self.feature[k]),
            "threshold": float(self.threshold[k]),
            "left": self.to_json(int(self.left[k])),
            "right": self.to_json(int(self.right[k])),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        builder = _TreeBuilder()

        def walk(node):
            if "leaf" in node:
                return builder.add_leaf(float(node["leaf"]))
            k = builder.add_split(int(node["feature"]), float(node["threshold"]))
            builder.left[k] = walk(node["left"])
            builder.right[k] = walk(node["right"])
            return k

        walk(obj)
        return builder.build()


class _TreeBuilder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def _add(self, feature, threshold, value):
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def add_leaf(self, value):
        return self._add(-1, 0.0, value)

    def add_split(self, feature, threshold):
        return self._add(feature, threshold, 0.0)

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=np.float64),
        )


# ------------------------------------------------------- split finding

@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float
    left_idx: np.ndarray
    right_idx: np.ndarray


def _score(G, H, lam):
    return G * G / (H + lam)


def _exact_split(X, g, h, idx, lam, min_leaf) -> _Split | None:
    m = idx.shape[0]
    if m < 2 * min_leaf:
        return None
    Xn = X[idx]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    gs = g[idx][order]
    hs = h[idx][order]
    GL = np.cumsum(gs, axis=0)[:-1]
    HL = np.cumsum(hs, axis=0)[:-1]
    G, H = GL[-1] + gs[-1], HL[-1] + hs[-1]
    gain = 0.5 * (_score(GL, HL, lam) + _score(G - GL, H - HL, lam) - _score(G, H, lam))
    count_left = np.arange(1, m)[:, None]
    valid = (xs[:-1] < xs[1:]) & (count_left >= min_leaf) & (m - count_left >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    # lowest feature index first, then lowest threshold, on exact ties
    flat = int(np.argmax(gain.T))
    feat, pos = divmod(flat, m - 1)
    best = gain[pos, feat]
    if not best > _MIN_GAIN:
        return None
    lo, hi = xs[pos, feat], xs[pos + 1, feat]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    mask = X[idx, feat] <= thr
    return _Split(float(best), int(feat), float(thr), idx[mask], idx[~mask])


def _bin_cuts(column: np.ndarray, n_bins: int) -> np.ndarray:
    """At most ``n_bins - 1`` cut points, each midway between two distinct data values."""
    uniq = np.unique(column)
    if uniq.shape[0] <= 1:
        return np.empty(0)
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    if uniq.shape[0] <= n_bins:
        return mids
    qs = np.quantile(column, np.arange(1, n_bins) / n_bins)
    pos = np.searchsorted(uniq, qs, side="right") - 1
    pos = np.unique(np.clip(pos, 0, uniq.shape[0] - 2))
    return mids[pos]


class _Histogrammer:
    def __init__(self, X, n_bins):
        self.n_bins = n_bins
        self.cuts = [_bin_cuts(X[:, j], n_bins) for j in range(X.shape[1])]
        self.bins = np.stack(
            [np.searchsorted(self.cuts[j], X[:, j], side="left") for j in range(X.shape[1])], axis=1
        )

    def split(self, g, h, idx, lam, min_leaf) -> _Split | None:
        m = idx.shape[0]
        if m < 2 * min_leaf:
            return None
        d, nb = self.bins.shape[1], self.n_bins
        flat = (self.bins[idx] + nb * np.arange(d)[None, :]).ravel()
        size = d * nb
        hg = np.bincount(flat, weights=np.repeat(g[idx], d), minlength=size).reshape(d, nb)
        hh = np.bincount(flat, weights=np.repeat(h[idx], d), minlength=size).reshape(d, nb)
        hc = np.bincount(flat, minlength=size).reshape(d, nb)
        GL = np.cumsum(hg, axis=1)[:, :-1]
        HL = np.cumsum(hh, axis=1)[:, :-1]
        CL = np.cumsum(hc, axis=1)[:, :-1]
        G, H = hg.sum(axis=1, keepdims=True), hh.sum(axis=1, keepdims=True)
        gain = 0.5 * (_score(GL, HL, lam) + _score(G - GL, H - HL, lam) - _score(G, H, lam))
        ncut = np.array([c.shape[0] for c in self.cuts])
        valid = (CL >= min_leaf) & (m - CL >= min_leaf) & (np.arange(nb - 1)[None, :] < ncut[:, None])
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        feat, b = divmod(k, nb - 1)
        best = gain[feat, b]
        if not best > _MIN_GAIN:
            return None
        mask = self.bins[idx, feat] <= b
        return _Split(float(best), int(feat), float(self.cuts[feat][b]), idx[mask], idx[~mask])


def _leaf_value(g, h, idx, lam):
    return -float(np.sum(g[idx])) / (float(np.sum(h[idx])) + lam)


def _grow_level_wise(X, g, h, idx, cfg: GbdtConfig) -> Tree:
    builder = _TreeBuilder()
    root = builder.add_leaf(0.0)
    frontier = [(root, idx)]
    for _ in range(cfg.max_depth):
        nxt = []
        for node, rows in frontier:
            split = _exact_split(X, g, h, rows, cfg.reg_lambda, cfg.min_samples_leaf)
            if split is None:
                builder.value[node] = _leaf_value(g, h, rows, cfg.reg_lambda)
                continue
            builder.feature[node], builder.threshold[node] = split.feature, split.threshold
            left, right = builder.add_leaf(0.0), builder.add_leaf(0.0)
            builder.left[node], builder.right[node] = left, right
            nxt += [(left, split.left_idx), (right, split.right_idx)]
        frontier = nxt
        if not frontier:
            break
    for node, rows in frontier:
        builder.value[node] = _leaf_value(g, h, rows, cfg.reg_lambda)
    return builder.build()


def _grow_leaf_wise(X, g, h, idx, cfg: GbdtConfig, hist: _Histogrammer) -> Tree:
    builder = _TreeBuilder()
    root = builder.add_leaf(_leaf_value(g, h, idx, cfg.reg_lambda))
    heap = []

    def push(node, rows, depth):
        builder.value[node] = _leaf_value(g, h, rows, cfg.reg_lambda)
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return
        split = hist.split(g, h, rows, cfg.reg_lambda, cfg.min_samples_leaf)
        if split is not None:
            heapq.heappush(heap, (-split.gain, node, depth, split))

    push(root, idx, 0)
    leaves = 1
    while heap and leaves < cfg.max_leaves:
        _, node, depth, split = heapq.heappop(heap)
        builder.feature[node], builder.threshold[node] = split.feature, split.threshold
        left, right = builder.add_leaf(0.0), builder.add_leaf(0.0)
        builder.left[node], builder.right[node] = left, right
        push(left, split.left_idx, depth + 1)
        push(right, split.right_idx, depth + 1)
        leaves += 1
    return builder.build()


# ------------------------------------------------------------- models

def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of softmax(scores) against integer labels."""
    z = scores - scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(labels.shape[0]), labels]))


@dataclass
class GbdtModel:
    variant: str
    num_classes: int
    num_features: int
    learning_rate: float
    base_score: np.ndarray
    rounds: list[list[Tree]] = field(default_factory=list)
    config: GbdtConfig | None = None
    train_loss: list[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.learning_rate <= 1):
            raise ConfigError("learning_rate must lie in (0, 1]")
        for r in self.rounds:
            if len(r) != self.num_classes:
                raise FormatError("every round must hold one tree per class")

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.num_features)
        scores = np.tile(self.base_score, (X.shape[0], 1))
        for trees in self.rounds:
            for k, tree in enumerate(trees):
                scores[:, k] += self.learning_rate * tree.predict(X)
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities; a single vector gives a single row back."""
        single = np.ndim(X) == 1
        proba = softmax(self.raw_scores(X))
        return proba[0] if single else proba

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(np.atleast_2d(X)), axis=1)

    def to_json(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "variant": self.variant,
            "num_classes": self.num_classes,
            "num_features": self.num_features,
            "learning_rate": self.learning_rate,
            "base_score": [float(v) for v in self.base_score],
            "config": asdict(self.config) if self.config else None,
            "rounds": [[t.to_json() for t in trees] for trees in self.rounds],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GbdtModel":
        _check_version(obj)
        try:
            cfg = GbdtConfig(**obj["config"]) if obj.get("config") else None
            return cls(
                variant=obj["variant"],
                num_classes=int(obj["num_classes"]),
                num_features=int(obj["num_features"]),
                learning_rate=float(obj["learning_rate"]),
                base_score=np.array(obj["base_score"], dtype=np.float64),
                rounds=[[Tree.from_json(t) for t in trees] for trees in obj["rounds"]],
                config=cfg,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed model: {exc}") from exc


def _as_matrix(X, num_features):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != num_features:
        raise DimensionError(f"expected {num_features} features, got shape {np.shape(X)}")
    return X


def train_gbdt(X: np.ndarray, y: np.ndarray, config: GbdtConfig | str, seed: int = 0,
               num_classes: int = NUM_CLASSES) -> GbdtModel:
    """Fit one boosted model; deterministic for fixed (data, config, seed)."""
    if isinstance(config, str):
        if config not in DEFAULT_CONFIGS:
            raise ConfigError(f"unknown variant {config!r}")
        config = DEFAULT_CONFIGS[config]
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DomainError("need a non-empty N x D matrix and N labels")
    if not np.all(np.isfinite(X)):
        raise DomainError("features must be finite")
    if y.min() < 0 or y.max() >= num_classes:
        raise DomainError(f"labels must lie in 0..{num_classes - 1}")
    if np.unique(y).shape[0] < 2:
        raise DomainError("need ≥ 2 classes")

    n = X.shape[0]
    Y = np.eye(num_classes)[y]
    prior = np.maximum(Y.mean(axis=0), _PRIOR_FLOOR)
    base = np.log(prior / prior.sum())
    model = GbdtModel(config.variant, num_classes, X.shape[1], config.learning_rate, base, config=config)
    scores = np.tile(base, (n, 1))
    model.train_loss.append(softmax_loss(scores, y))
    hist = _Histogrammer(X, config.n_bins) if config.variant == "leaf_wise_histogram" else None
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    all_rows = np.arange(n)

    for _ in range(config.rounds):
        P = softmax(scores)
        rows = all_rows
        if config.subsample < 1:
            keep = max(2, int(round(config.subsample * n)))
            rows = np.sort(rng.choice(n, size=keep, replace=False))
        trees = []
        for k in range(num_classes):
            g = P[:, k] - Y[:, k]
            h = np.maximum(P[:, k] * (1.0 - P[:, k]), 1e-16) if config.newton else np.ones(n)
            if config.variant == "leaf_wise_histogram":
                tree = _grow_leaf_wise(X, g, h, rows, config, hist)
            else:
                tree = _grow_level_wise(X, g, h, rows, config)
            trees.append(tree)
        for k, tree in enumerate(trees):
            scores[:, k] += config.learning_rate * tree.predict(X)
        model.rounds.append(trees)
        model.train_loss.append(softmax_loss(scores, y))
    return model


# ----------------------------------------------------------- ensemble

@dataclass(frozen=True)
class ClassPrediction:
    label: int
    per_model_labels: tuple[int, ...]
    per_model_probabilities: np.ndarray

    @property
    def winning_probabilities(self) -> tuple[float, ...]:
        return tuple(float(self.per_model_probabilities[m, lab]) for m, lab in enumerate(self.per_model_labels))


def mode_vote(labels, winning_probabilities) -> int:
    """Majority label; ties go to the label backed by the most confident vote, then the lowest id."""
    labels = [int(v) for v in labels]
    if not labels:
        raise DomainError("no votes")
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    top = max(counts.values())
    tied = [lab for lab in counts if counts[lab] == top]
    if len(tied) == 1:
        return tied[0]
    best_prob = {
        lab: max(float(p) for v, p in zip(labels, winning_probabilities) if v == lab) for lab in tied
    }
    return min(tied, key=lambda lab: (-best_prob[lab], lab))


@dataclass
class GbdtEnsemble:
    models: list[GbdtModel]

    def __post_init__(self):
        if len(self.models) != len(VARIANTS):
            raise DomainError(f"an ensemble holds exactly {len(VARIANTS)} models")
        shapes = {(m.num_classes, m.num_features) for m in self.models}
        if len(shapes) != 1:
            raise DimensionError("ensemble models disagree on classes or feature dimension")

    @property
    def num_features(self) -> int:
        return self.models[0].num_features

    def predict_mode(self, x: np.ndarray) -> ClassPrediction:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionError("predict_mode takes a single feature vector")
        probs = np.stack([m.predict_proba(x) for m in self.models])
        labels = tuple(int(np.argmax(p)) for p in probs)
        winning = [probs[m, lab] for m, lab in enumerate(labels)]
        return ClassPrediction(mode_vote(labels, winning), labels, probs)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.num_features)
        probs = np.stack([m.predict_proba(X) for m in self.models])  # (models, n, classes)
        labels = probs.argmax(axis=2)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            out[i] = mode_vote(labels[:, i], probs[np.arange(len(self.models)), i, labels[:, i]])
        return out

    def to_json(self) -> dict:
        return {"version": FORMAT_VERSION, "models": [m.to_json() for m in self.models]}


def train_ensemble(X, y, seed: int = 0, configs: dict[str, GbdtConfig] | None = None) -> GbdtEnsemble:
    configs = {**DEFAULT_CONFIGS, **(configs or {})}
    models = []
    for variant in VARIANTS:
        logger.info("training %s", variant)
        models.append(train_gbdt(X, y, configs[variant], seed=seed))
    return GbdtEnsemble(models)


# ------------------------------------------------------- persistence

def _check_version(obj):
    if not isinstance(obj, dict) or "version" not in obj:
        raise FormatError("model file lacks a version tag")
    if obj["version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported model version {obj['version']!r}")


def dumps_model(model: GbdtModel | GbdtEnsemble) -> str:
    return json.dumps(model.to_json(), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: GbdtModel | GbdtEnsemble, path: str | os.PathLike) -> None:
    try:
        Path(path).write_text(dumps_model(model))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path: str | os.PathLike) -> GbdtModel | GbdtEnsemble:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    _check_version(obj)
    if "models" in obj:
        try:
            return GbdtEnsemble([GbdtModel.from_json(m) for m in obj["models"]])
        except TypeError as exc:
            raise FormatError(f"malformed ensemble: {exc}") from exc
    return GbdtModel.from_json(obj)


def with_overrides(config: GbdtConfig, **overrides) -> GbdtConfig:
    return replace(config, **overrides)
