"""Shared task harness: stimulus-sequence tasks, per-encoder features,
closed-form ridge readouts and accuracy reports."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import attention as attn
from .errors import EmptyAlphabet, NonPositiveParameter, ShapeMismatch, SingularSystem
from .lattice import DEFAULT_CONDUCTION_VELOCITY, Boundary, DelayRounding, DelayTable, TopographicLattice
from .ssm import CirculantSpec, StateSpaceModel, make_mexican_hat_circulant, simulate_ssm
from .wavesim import (
    Connectivity,
    KernelProfile,
    NetworkState,
    NeuronModel,
    StimulusEvent,
    run_protocol,
)


class LabelRule(str, Enum):
    SEQUENCE_IDENTITY = "sequence_identity"
    ORDER_ONLY = "order_only"
    ITEM_AT_LAG = "item_at_lag"


class Encoder(str, Enum):
    WAVE = "wave"
    SSM = "ssm"
    ATTENTION = "attention"


@dataclass(frozen=True)
class SequenceTask:
    """Sequences of punctate stimuli drawn from ``alphabet`` (lattice ``(x, y)`` positions).

    Item ``i`` starts at ``start + i * interval``; the encoding is read
    ``readout_delay`` steps after the last onset. ``admissible`` optionally
    restricts sampling to listed sequences of alphabet indices, labelled by
    their position in that list. For ``item_at_lag`` the label is the item with
    the most recent onset at least ``lag`` steps before the readout; when no
    such item exists the label is drawn at random.
    """

    alphabet: tuple
    length: int
    interval: int
    rule: LabelRule = LabelRule.SEQUENCE_IDENTITY
    lag: int = 0
    admissible: tuple | None = None
    start: int = 5
    readout_delay: int = 5
    amplitude: float = 1.5
    duration: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rule", LabelRule(self.rule))
        object.__setattr__(self, "alphabet", tuple(tuple(int(c) for c in p) for p in self.alphabet))
        if self.admissible is not None:
            object.__setattr__(self, "admissible", tuple(tuple(int(i) for i in s) for s in self.admissible))
        if not self.alphabet:
            raise EmptyAlphabet("task alphabet is empty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet positions must be distinct")
        if self.length < 1:
            raise NonPositiveParameter("sequence length must be >= 1")
        if self.interval < 1:
            raise NonPositiveParameter("inter-stimulus interval must be >= 1")
        if self.start < 0 or self.readout_delay < 0 or self.lag < 0:
            raise NonPositiveParameter("start, readout_delay and lag must be >= 0")
        if self.rule is LabelRule.ORDER_ONLY and self.admissible is None and self.length > len(self.alphabet):
            raise ValueError("order_only needs length <= alphabet size")
        for s in self.admissible or ():
            if len(s) != self.length or any(not 0 <= i < len(self.alphabet) for i in s):
                raise ValueError(f"admissible sequence {s} does not fit the task")

    @property
    def onsets(self) -> list[int]:
        return [self.start + i * self.interval for i in range(self.length)]

    @property
    def snapshot_step(self) -> int:
        return self.onsets[-1] + self.readout_delay

    @property
    def total_steps(self) -> int:
        return self.snapshot_step + 1

    @property
    def n_classes(self) -> int:
        if self.admissible is not None and self.rule is not LabelRule.ITEM_AT_LAG:
            return len(self.admissible)
        if self.rule is LabelRule.ORDER_ONLY:
            return math.factorial(self.length)
        if self.rule is LabelRule.ITEM_AT_LAG:
            return len(self.alphabet)
        return len(self.alphabet) ** self.length

    def with_lag(self, lag: int) -> "SequenceTask":
        from dataclasses import replace

        return replace(self, rule=LabelRule.ITEM_AT_LAG, lag=lag)

    def events(self, items) -> tuple:
        return tuple(StimulusEvent(self.alphabet[i], t, self.duration, self.amplitude)
                     for i, t in zip(items, self.onsets))

    def item_at(self, items, lag: int):
        """Alphabet index of the most recent item at least ``lag`` steps before readout."""
        cutoff = self.snapshot_step - lag
        best = None
        for i, t in zip(items, self.onsets):
            if t <= cutoff:
                best = i
        return best

    def label(self, items, rng: np.random.Generator) -> int:
        if self.rule is LabelRule.ITEM_AT_LAG:
            item = self.item_at(items, self.lag)
            return int(rng.integers(len(self.alphabet))) if item is None else int(item)
        if self.admissible is not None:
            return self.admissible.index(tuple(items))
        if self.rule is LabelRule.ORDER_ONLY:
            ranks = tuple(int(r) for r in np.argsort(np.argsort(items)))
            return list(itertools.permutations(range(self.length))).index(ranks)
        n = len(self.alphabet)
        return int(sum(i * n**p for p, i in enumerate(reversed(items))))

    def sample_items(self, rng: np.random.Generator) -> tuple:
        if self.admissible is not None:
            return self.admissible[int(rng.integers(len(self.admissible)))]
        n = len(self.alphabet)
        if self.rule is LabelRule.ORDER_ONLY:
            return tuple(int(i) for i in rng.permutation(n)[: self.length])
        return tuple(int(i) for i in rng.integers(n, size=self.length))


@dataclass(frozen=True)
class LabeledProtocol:
    events: tuple
    items: tuple
    label: int


def generate_protocols(task: SequenceTask, n: int, seed: int) -> list[LabeledProtocol]:
    """``n`` labelled protocols sampled uniformly over the task's admissible sequences."""
    if n < 1:
        raise NonPositiveParameter("n must be >= 1")
    rng = np.random.default_rng(seed)
    items = [task.sample_items(rng) for _ in range(n)]
    label_rng = np.random.default_rng([seed, task.lag, 1])
    return [LabeledProtocol(task.events(it), it, task.label(it, label_rng)) for it in items]


def relabel(protocols, task: SequenceTask, seed: int) -> np.ndarray:
    label_rng = np.random.default_rng([seed, task.lag, 1])
    return np.array([task.label(p.items, label_rng) for p in protocols])


# ---------------------------------------------------------------- readout


@dataclass
class LinearReadout:
    weights: np.ndarray  # (p, c)
    bias: np.ndarray  # (c,)
    classes: np.ndarray

    def scores(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.weights + self.bias

    def predict(self, features) -> np.ndarray:
        return self.classes[np.argmax(self.scores(features), axis=1)]

    def accuracy(self, features, labels) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


@dataclass
class ReadoutFit:
    readout: LinearReadout
    train_accuracy: float
    test_accuracy: float | None = None


def linear_readout_fit(features, labels, ridge: float = 1e-2, test_features=None,
                       test_labels=None) -> ReadoutFit:
    """One-vs-all ridge regression on one-hot targets with an unpenalized intercept.

    Solved in closed form through the normal equations (or their dual when
    there are more features than samples, which gives the same solution).
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {X.shape} do not match {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if ridge < 0:
        raise NonPositiveParameter("ridge must be >= 0")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    Y = (y[:, None] == classes[None, :]).astype(float)
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    n, p = Xc.shape
    if ridge == 0:
        if np.linalg.matrix_rank(Xc) < p:
            raise SingularSystem("Gram matrix is rank-deficient and ridge is 0")
        W = np.linalg.solve(Xc.T @ Xc, Xc.T @ Yc)
    elif p <= n:
        W = np.linalg.solve(Xc.T @ Xc + ridge * np.eye(p), Xc.T @ Yc)
    else:
        W = Xc.T @ np.linalg.solve(Xc @ Xc.T + ridge * np.eye(n), Yc)
    readout = LinearReadout(W, ym - xm @ W, classes)
    fit = ReadoutFit(readout, readout.accuracy(X, y))
    if test_features is not None:
        fit.test_accuracy = readout.accuracy(test_features, test_labels)
    return fit


def stratified_split(labels, test_fraction: float, seed: int):
    """Train/test index arrays with each class split in the given proportion."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 2])
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(idx.size * test_fraction))
        if idx.size >= 2:
            n_test = min(max(n_test, 1), idx.size - 1)
        else:
            n_test = 0
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


# ---------------------------------------------------------------- encoders


@dataclass
class BenchConfig:
    width: int = 64
    height: int = 64
    spacing: float = 0.2
    conduction_velocity: float = DEFAULT_CONDUCTION_VELOCITY
    boundary: str = "open"
    delay_rounding: str = "up"
    dt: float = 1.0
    kernel: KernelProfile = field(default_factory=KernelProfile)
    neuron: NeuronModel = field(default_factory=NeuronModel)
    n_protocols: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    ridge: float = 1e-2
    test_fraction: float = 0.2
    shuffle_labels: bool = False
    wave_features: str = "potential"  # or "spike_count"
    ssm_nodes: int = 64
    ssm_kernel: KernelProfile = field(
        default_factory=lambda: KernelProfile(1.0, 2.0, 0.1, 4.0, 0.0))
    ssm_dt: float = 0.02
    ssm_noise: float = 0.0
    d_model: int = 16
    n_heads: int = 2
    d_ff: int = 32
    n_layers: int = 2
    pooling: str = "mean"
    positional: bool = True
    param_seed: int = 0

    def lattice(self) -> TopographicLattice:
        return TopographicLattice(self.width, self.height, self.spacing,
                                  self.conduction_velocity, Boundary(self.boundary),
                                  DelayRounding(self.delay_rounding))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["neuron"]["variant"] = self.neuron.variant.value
        d["seeds"] = list(self.seeds)
        return d


def _protocol_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i, 3]).generate_state(1)[0])


def wave_features(protocols, task: SequenceTask, config: BenchConfig, seed: int,
                  kind: str | None = None) -> np.ndarray:
    kind = kind or config.wave_features
    lat = config.lattice()
    conn = Connectivity(DelayTable.build(lat, config.dt, config.kernel.cutoff_radius), config.kernel)
    feats = []
    for i, p in enumerate(protocols):
        net = NetworkState(lat, config.kernel, config.neuron, config.dt, _protocol_seed(seed, i), conn)
        rec = run_protocol(net, p.events, task.total_steps)
        if kind == "potential":
            feats.append(rec.activity()[task.snapshot_step].ravel())
        elif kind == "spike_count":
            feats.append(rec.spike_counts((0, task.total_steps)).ravel().astype(float))
        else:
            raise ValueError(f"unknown wave feature kind {kind!r}")
    return np.array(feats)


def ssm_model(task: SequenceTask, config: BenchConfig) -> StateSpaceModel:
    n = config.ssm_nodes
    spec = make_mexican_hat_circulant(n, config.ssm_kernel).with_zero_row_sum()
    m = len(task.alphabet)
    B = np.zeros((n, m))
    for i in range(m):
        B[(i * n) // m, i] = 1.0
    return StateSpaceModel(spec, B, np.eye(n), np.zeros((n, m)), config.ssm_dt)


def ssm_features(protocols, task: SequenceTask, config: BenchConfig, seed: int) -> np.ndarray:
    model = ssm_model(task, config)
    m = len(task.alphabet)
    rng = np.random.default_rng([seed, 4])
    feats = []
    for p in protocols:
        u = np.zeros((task.total_steps, m))
        for item, ev in zip(p.items, p.events):
            u[ev.onset : ev.onset + ev.duration, item] += ev.amplitude
        _, x = simulate_ssm(model, u, method="exact", return_state=True)
        if config.ssm_noise > 0:
            x = x + config.ssm_noise * rng.standard_normal(x.shape)
        feats.append(x)
    return np.array(feats)


def attention_features(protocols, task: SequenceTask, config: BenchConfig, seed: int) -> np.ndarray:
    params = attn.init_params(config.d_model, config.n_heads, config.d_ff, config.n_layers,
                              config.param_seed)
    emb = np.random.default_rng([config.param_seed, 5]).standard_normal((len(task.alphabet), config.d_model))
    feats = []
    for p in protocols:
        seq = attn.TokenSequence(emb[list(p.items)], positional=config.positional)
        feats.append(attn.encode_sequence(seq, config.n_layers, params, config.pooling))
    return np.array(feats)


def encoder_features(encoder, protocols, task, config, seed, **kw) -> np.ndarray:
    encoder = Encoder(encoder)
    if encoder is Encoder.WAVE:
        return wave_features(protocols, task, config, seed, **kw)
    if encoder is Encoder.SSM:
        return ssm_features(protocols, task, config, seed)
    return attention_features(protocols, task, config, seed)


# ---------------------------------------------------------------- reports


def balanced_accuracy(truth, pred, n_classes: int) -> float:
    """Mean per-class recall over the classes present in ``truth``; chance is 1/c."""
    truth, pred = np.asarray(truth), np.asarray(pred)
    recalls = [np.mean(pred[truth == c] == c) for c in range(n_classes) if np.any(truth == c)]
    return float(np.mean(recalls))


def null_variance(truth, n_classes: int) -> float:
    """Variance of balanced accuracy for a label-independent guesser."""
    counts = np.bincount(np.asarray(truth), minlength=n_classes)
    counts = counts[counts > 0]
    p = 1.0 / n_classes
    return float(np.sum(p * (1 - p) / counts) / counts.size**2)


@dataclass
class EncodingReport:
    """Readout results for one encoder on one task.

    ``accuracies`` are per-seed balanced test accuracies (mean per-class
    recall), whose chance level is exactly ``1 / n_classes`` however the
    sampled labels happen to be distributed; ``raw_accuracies`` are plain.
    """

    encoder: str
    feature_dim: int
    n_classes: int
    seeds: list
    accuracies: list
    raw_accuracies: list
    train_accuracies: list
    null_variances: list
    n_test: int  # pooled over seeds
    confusion: list  # (c, c) counts pooled over seeds, rows true
    per_label_accuracy: list
    label_rule: str = ""
    features: str = ""
    shuffled: bool = False

    @property
    def chance(self) -> float:
        return 1.0 / self.n_classes

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def se_null(self) -> float:
        """Standard error of the seed-mean accuracy under chance guessing."""
        v = np.asarray(self.null_variances)
        return float(math.sqrt(v.sum()) / v.size)

    @property
    def se_seeds(self) -> float:
        a = np.asarray(self.accuracies)
        return float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0

    @property
    def se(self) -> float:
        """Larger of the chance-model and the across-seed standard errors."""
        return max(self.se_null, self.se_seeds)

    @property
    def z_above_chance(self) -> float:
        return (self.accuracy - self.chance) / self.se

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(chance=self.chance, accuracy=self.accuracy, se_null=self.se_null,
                 se_seeds=self.se_seeds, se=self.se, z_above_chance=self.z_above_chance)
        return d


def _fit_and_score(features, labels, config: BenchConfig, seed: int):
    train, test = stratified_split(labels, config.test_fraction, seed)
    if np.unique(labels[train]).size < 2:
        # degenerate draw: a single class present, predict it
        pred = np.full(test.size, labels[train][0])
        return 1.0, labels[test], pred
    fit = linear_readout_fit(features[train], labels[train], config.ridge)
    return fit.train_accuracy, labels[test], fit.readout.predict(features[test])


def evaluate_features(encoder, task, config, per_seed_features, per_seed_labels,
                      feature_kind="") -> EncodingReport:
    c = task.n_classes
    confusion = np.zeros((c, c), dtype=int)
    accs, raw, train_accs, null_vars, n_test = [], [], [], [], 0
    for seed, X, y in zip(config.seeds, per_seed_features, per_seed_labels):
        y = np.asarray(y)
        if config.shuffle_labels:
            y = y[np.random.default_rng([seed, 6]).permutation(y.size)]
        tr, truth, pred = _fit_and_score(X, y, config, seed)
        accs.append(balanced_accuracy(truth, pred, c))
        raw.append(float(np.mean(truth == pred)))
        train_accs.append(tr)
        null_vars.append(null_variance(truth, c))
        n_test += truth.size
        np.add.at(confusion, (truth, pred), 1)
    totals = confusion.sum(axis=1)
    per_label = np.where(totals > 0, np.diag(confusion) / np.maximum(totals, 1), np.nan)
    return EncodingReport(
        encoder=Encoder(encoder).value, feature_dim=int(per_seed_features[0].shape[1]),
        n_classes=c, seeds=list(config.seeds), accuracies=[float(a) for a in accs],
        raw_accuracies=raw, train_accuracies=[float(a) for a in train_accs],
        null_variances=null_vars, n_test=int(n_test),
        confusion=confusion.tolist(), per_label_accuracy=[float(a) for a in per_label],
        label_rule=task.rule.value, features=feature_kind, shuffled=config.shuffle_labels)


def evaluate_encoder(encoder, task: SequenceTask, config: BenchConfig, **kw) -> EncodingReport:
    """Fit and test a linear readout of ``task`` labels from one encoder's features."""
    feats, labels = [], []
    for seed in config.seeds:
        protocols = generate_protocols(task, config.n_protocols, seed)
        feats.append(encoder_features(encoder, protocols, task, config, seed, **kw))
        labels.append(np.array([p.label for p in protocols]))
    kind = kw.get("kind") or (config.wave_features if Encoder(encoder) is Encoder.WAVE else "")
    return evaluate_features(encoder, task, config, feats, labels, kind)


@dataclass
class MemoryCurve:
    encoder: str
    lags: list
    accuracies: list  # mean balanced accuracy over seeds, per lag
    per_seed: list  # (lags, seeds)
    chance: float
    se_null: list  # per lag
    shuffled: bool = False

    @property
    def se_seeds(self) -> list:
        a = np.asarray(self.per_seed)
        if a.shape[1] < 2:
            return [0.0] * len(self.lags)
        return [float(v) for v in a.std(axis=1, ddof=1) / math.sqrt(a.shape[1])]

    @property
    def se(self) -> list:
        return [max(a, b) for a, b in zip(self.se_null, self.se_seeds)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(se_seeds=self.se_seeds, se=self.se)
        return d


def memory_horizon(encoder, task: SequenceTask, lags, config: BenchConfig) -> MemoryCurve:
    """Test accuracy of reading out the item presented ``lag`` steps before readout, per lag."""
    lags = [int(j) for j in lags]
    base = task.with_lag(lags[0])
    cache = []
    for seed in config.seeds:
        protocols = generate_protocols(base, config.n_protocols, seed)
        cache.append((seed, protocols, encoder_features(encoder, protocols, base, config, seed)))
    per_lag, se = [], []
    for j in lags:
        t = task.with_lag(j)
        rep = evaluate_features(encoder, t, config, [c[2] for c in cache],
                                [relabel(c[1], t, c[0]) for c in cache])
        per_lag.append(rep.accuracies)
        se.append(rep.se_null)
    acc = [float(np.mean(a)) for a in per_lag]
    return MemoryCurve(Encoder(encoder).value, lags, acc, per_lag, 1.0 / len(task.alphabet), se,
                       config.shuffle_labels)


def order_task(config: BenchConfig | None = None, interval: int = 8) -> SequenceTask:
    """Three stimuli shown in order (1, 2, 3) or (1, 3, 2)."""
    config = config or BenchConfig()
    w, h = config.width, config.height
    alphabet = ((w // 4, h // 2), (w // 2, h // 4), (3 * w // 4, h // 2))
    return SequenceTask(alphabet, 3, interval, LabelRule.SEQUENCE_IDENTITY,
                        admissible=((0, 1, 2), (0, 2, 1)))
