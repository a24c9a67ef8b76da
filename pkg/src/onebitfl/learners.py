"""Tiny differentiable models, synthetic heterogeneous data, label-skew splits.

Models are deliberately small (p <= 64, hidden <= 32, C <= 10): the
aggregation protocol under study is model-agnostic and desk-scale runs have
to finish in minutes.  Synthetic data is Gaussian blobs at random unit-norm
class centers scaled by `spread`; heterogeneity comes from giving each client
samples from only k of the C classes.
"""

from dataclasses import dataclass, field
import csv

import numpy as np

from .core import l2_norm


@dataclass
class Dataset:
    features: np.ndarray  # (n, p) float64
    labels: np.ndarray    # (n,) int64 in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be (n, p)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be (n,)")
        if self.features.shape[0] == 0:
            raise ValueError("dataset is empty")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n_classes):
            raise ValueError("label out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


def synth_generate(classes: int, per_class: int, p: int, spread: float,
                   rng: np.random.Generator,
                   noise_rng: np.random.Generator | None = None) -> Dataset:
    """Isotropic unit-variance Gaussian blob per class.

    Class centers are random directions scaled to length `spread`; spread=0
    collapses every class onto the same blob (best accuracy ~ 1/C).  Passing
    a separate noise_rng reuses the centers from `rng` while drawing fresh
    samples — that is how a held-out split shares the train-set geometry.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    centers = rng.normal(size=(classes, p))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= spread
    labels = np.repeat(np.arange(classes), per_class)
    features = centers[labels] + (noise_rng or rng).normal(size=(labels.size, p))
    return Dataset(features, labels, classes)


def partition_label_skew(d: Dataset, n_clients: int, classes_per_client: int,
                         rng: np.random.Generator):
    """Split a dataset so each client sees only k of the C classes.

    Every sample lands on exactly one client and sizes stay equal up to
    remainder effects.  Class slots are dealt by a highest-remaining-quota
    rule (random tie-breaks), which always succeeds when n_clients * k >= C.
    When n_clients * k < C the k-cap cannot cover every class; the cap is
    relaxed there (classes assigned round-robin) so no sample is dropped.
    """
    C = d.n_classes
    k = classes_per_client
    if k < 1 or k > C:
        raise ValueError(f"classes_per_client must be in [1, {C}]")
    if n_clients < 1:
        raise ValueError("need at least one client")

    holders = [[] for _ in range(C)]  # client ids holding each class
    if n_clients * k < C:
        order = rng.permutation(C)
        for pos, cls in enumerate(order):
            holders[cls].append(pos % n_clients)
    else:
        quota = np.full(C, (n_clients * k) // C, dtype=np.int64)
        extra = n_clients * k - quota.sum()
        if extra > 0:
            quota[rng.choice(C, size=extra, replace=False)] += 1
        for client in range(n_clients):
            # top-k remaining quotas; random tie-break keeps the skew random
            jitter = rng.permutation(C)
            ranked = sorted(range(C), key=lambda c: (-quota[c], jitter[c]))
            for cls in ranked[:k]:
                if quota[cls] <= 0:
                    raise RuntimeError("quota bookkeeping failed")  # unreachable
                quota[cls] -= 1
                holders[cls].append(client)

    member_idx = [[] for _ in range(n_clients)]
    for cls in range(C):
        idx = np.flatnonzero(d.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        parts = np.array_split(idx, len(holders[cls]))
        for client, part in zip(holders[cls], parts):
            member_idx[client].extend(part.tolist())
    return [d.subset(np.array(sorted(ii), dtype=np.int64)) for ii in member_idx]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class Learner:
    """Architecture plus pure loss/gradient functions of a flat parameter vector.

    kind 'logistic' is linear + softmax; 'mlp' adds one tanh hidden layer.
    The optional params field carries a current vector for callers that want
    stateful use; all math below takes params explicitly.
    """

    kind: str
    p: int
    n_classes: int
    hidden: int = 16
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ValueError(f"unknown learner kind '{self.kind}'")
        if self.params is not None and self.params.size != self.dim:
            raise ValueError("params length does not match architecture")

    @property
    def dim(self) -> int:
        if self.kind == "logistic":
            return (self.p + 1) * self.n_classes
        return (self.p + 1) * self.hidden + (self.hidden + 1) * self.n_classes

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Zero init for logistic; scaled normal for the mlp (breaks symmetry)."""
        if self.kind == "logistic":
            return np.zeros(self.dim)
        w = np.zeros(self.dim)
        h, p, C = self.hidden, self.p, self.n_classes
        w[: p * h] = rng.normal(0.0, 1.0 / np.sqrt(p), size=p * h)
        off = p * h + h
        w[off: off + h * C] = rng.normal(0.0, 1.0 / np.sqrt(h), size=h * C)
        return w

    def _unpack(self, w: np.ndarray):
        p, C, h = self.p, self.n_classes, self.hidden
        if self.kind == "logistic":
            return w[: p * C].reshape(p, C), w[p * C:]
        o = 0
        W1 = w[o: o + p * h].reshape(p, h); o += p * h
        b1 = w[o: o + h]; o += h
        W2 = w[o: o + h * C].reshape(h, C); o += h * C
        b2 = w[o:]
        return W1, b1, W2, b2

    def logits(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        if self.kind == "logistic":
            W, b = self._unpack(w)
            return X @ W + b
        W1, b1, W2, b2 = self._unpack(w)
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        ls = _log_softmax(self.logits(w, X))
        return float(-ls[np.arange(y.size), y].mean())

    def loss_grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray):
        """Mean cross-entropy over (X, y) and its exact gradient."""
        n = y.size
        if self.kind == "logistic":
            W, b = self._unpack(w)
            logits = X @ W + b
            ls = _log_softmax(logits)
            loss = float(-ls[np.arange(n), y].mean())
            G = np.exp(ls)
            G[np.arange(n), y] -= 1.0
            G /= n
            return loss, np.concatenate([(X.T @ G).ravel(), G.sum(axis=0)])
        W1, b1, W2, b2 = self._unpack(w)
        A1 = np.tanh(X @ W1 + b1)
        ls = _log_softmax(A1 @ W2 + b2)
        loss = float(-ls[np.arange(n), y].mean())
        G = np.exp(ls)
        G[np.arange(n), y] -= 1.0
        G /= n
        dA1 = G @ W2.T
        dZ1 = dA1 * (1.0 - A1 * A1)
        return loss, np.concatenate([
            (X.T @ dZ1).ravel(), dZ1.sum(axis=0),
            (A1.T @ G).ravel(), G.sum(axis=0),
        ])

    def predict(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        return self.logits(w, X).argmax(axis=1)

    def accuracy(self, w: np.ndarray, d: Dataset) -> float:
        return float((self.predict(w, d.features) == d.labels).mean())


def loss_and_grad(l: Learner, d: Dataset, batch):
    """Loss and gradient on a batch of a dataset, using the learner's params."""
    idx = np.asarray(batch, dtype=np.int64)
    return l.loss_grad(l.params, d.features[idx], d.labels[idx])


def measure_dissimilarity(grads) -> float:
    """Gradient-diversity ratio sqrt(mean ||g_m||^2 / ||mean g_m||^2).

    Equals 1 when all client gradients agree; returns +inf when the mean
    gradient is numerically zero (norm < 1e-12) while clients still disagree.
    """
    if len(grads) == 0:
        raise ValueError("no gradients")
    G = np.stack([np.asarray(g, dtype=np.float64) for g in grads])
    mean_sq = float((G * G).sum(axis=1).mean())
    denom = l2_norm(G.mean(axis=0)) ** 2
    if denom < 1e-12 ** 2:
        return float("inf") if mean_sq > 0 else 1.0
    return float(np.sqrt(mean_sq / denom))


def save_csv(d: Dataset, path) -> None:
    """Write features and label columns: f0..f{p-1},label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(d.p)] + ["label"])
        for i in range(d.n):
            writer.writerow([repr(float(x)) for x in d.features[i]] + [int(d.labels[i])])


def load_csv(path, n_classes: int | None = None) -> Dataset:
    """Read a dataset written by save_csv (or any f0..f{p-1},label table)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or any(h != f"f{j}" for j, h in enumerate(header[:-1])):
            raise ValueError("expected header f0..f{p-1},label")
        rows = list(reader)
    if not rows:
        raise ValueError("dataset file has no rows")
    features = np.array([[float(x) for x in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows])
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return Dataset(features, labels, n_classes)
