"""Federated round loop: proximal local training, transport, aggregation.

Every scheme shares the same local solver: minibatch SGD with momentum on
h_m(w_m; w) = f_m(w_m) + (lam/2) ||w_m - w||^2, started from the client's own
persisted model w_m rather than the broadcast w (personalization; the
proximal term supplies the pull toward consensus).  RSA swaps the l2 pull
for an l1 sign penalty.  Schemes differ only in transport:

  probit_plus   clamp -> stochastic one-bit compress -> tally -> ML rescale
  fedavg        raw vectors -> mean
  fed_gm        raw vectors -> geometric median
  signsgd_mv    deterministic sign bits -> majority vote * step
  rsa           deterministic sign bits -> sign accumulation * coef

The attack layer corrupts updates before transport (update-level kinds) or
bit messages after compression (worst_case_bits), so Byzantine clients on
one-bit schemes are still physically limited to one bit per coordinate.
"""

from dataclasses import dataclass, field
import csv
import os

import numpy as np

from . import aggregator, byzantine, quantizer
from .config import ExperimentConfig
from .core import NS_ATTACK, NS_DATA, NS_INIT, client_stream, l2_norm, rng_from
from .learners import (Dataset, Learner, load_csv, measure_dissimilarity,
                       partition_label_skew, synth_generate)

METRICS_COLUMNS = ["round", "scheme", "beta", "attack", "epsilon", "train_loss",
                   "test_acc", "theta_hat_norm", "b_mean", "B_dissimilarity",
                   "inexactness_mean"]


@dataclass
class ClientState:
    id: int
    params: np.ndarray    # w_m, persists across rounds
    dataset: Dataset
    velocity: np.ndarray  # momentum buffer, persists with the model


@dataclass
class TrainingState:
    config: ExperimentConfig
    learner: Learner
    global_params: np.ndarray
    clients: list
    test_set: Dataset
    quant: quantizer.QuantParams
    round_idx: int = 0
    broadcast_grads: list = None  # full-data grad of f_m at current global, per client
    broadcast_losses: np.ndarray = None
    metrics: list = field(default_factory=list)
    receipts: list = field(default_factory=list)


@dataclass
class TrainingResult:
    metrics: list
    receipts: list
    final_global: np.ndarray
    clients: list
    final_test_acc: float


def local_solve(c: ClientState, learner: Learner, w_global: np.ndarray,
                s, rng: np.random.Generator, penalty: str = "l2") -> np.ndarray:
    """Train the client's persisted model; return delta_m = w_m_new - w_global.

    penalty 'l2' adds lam * (w_m - w_global) to every minibatch gradient;
    'l1' adds rsa_lambda * sign(w_m - w_global) instead.
    """
    w = c.params.copy()
    v = c.velocity.copy()
    X, y = c.dataset.features, c.dataset.labels
    n = c.dataset.n
    for _ in range(s.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, s.batch_size):
            idx = order[start:start + s.batch_size]
            _, g = learner.loss_grad(w, X[idx], y[idx])
            if penalty == "l2":
                g = g + s.lam * (w - w_global)
            else:
                g = g + s.rsa_lambda * np.sign(w - w_global)
            v = s.momentum * v + g
            w = w - s.lr * v
    c.params = w
    c.velocity = v
    return w - w_global


def proximal_loss_grad(learner: Learner, w: np.ndarray, w_center: np.ndarray,
                       lam: float, d: Dataset):
    """Full-data value and gradient of h(w; w_center) = f(w) + lam/2 ||w - w_center||^2."""
    loss, grad = learner.loss_grad(w, d.features, d.labels)
    diff = w - w_center
    return loss + 0.5 * lam * float(diff @ diff), grad + lam * diff


def inexactness(c: ClientState, learner: Learner, w_global: np.ndarray,
                lam: float, grad_at_global: np.ndarray) -> float:
    """||grad h(w_m_new; w_global)|| / ||grad h(w_global; w_global)||.

    Diagnostic only: logged and compared to gamma, never enforced.  The
    denominator is the plain local gradient at the broadcast point (the
    proximal term vanishes there).
    """
    _, g_new = proximal_loss_grad(learner, c.params, w_global, lam, c.dataset)
    denom = l2_norm(grad_at_global)
    if denom < 1e-12:
        return float("inf")
    return l2_norm(g_new) / denom


def loss_signal_vote(signals) -> bool:
    """True iff strictly more than half the one-bit signals report a decrease.

    Ties count as 'no decrease', so the range schedule shrinks on a split
    vote (the conservative direction).
    """
    signals = list(signals)
    if not signals:
        raise ValueError("no signals to vote on")
    return sum(bool(s) for s in signals) * 2 > len(signals)


def deterministic_signs(delta: np.ndarray) -> np.ndarray:
    """sign(delta) with the zero coordinate mapped to +1 (fixed, documented)."""
    return np.where(delta >= 0, 1, -1).astype(np.int8)


def _build_data(cfg: ExperimentConfig):
    """Train partition plus a held-out test set from the same class geometry."""
    ds = cfg.data
    if ds.csv_path:
        train = load_csv(ds.csv_path)
        test = train  # external data: no generator to draw a fresh test set from
    else:
        train = synth_generate(ds.classes, ds.per_class, ds.features, ds.spread,
                               rng_from(cfg.seed, NS_DATA, 0))
        test = synth_generate(ds.classes, ds.test_per_class, ds.features, ds.spread,
                              rng_from(cfg.seed, NS_DATA, 0), noise_rng=rng_from(cfg.seed, NS_DATA, 1))
    parts = partition_label_skew(train, cfg.m_clients, ds.classes_per_client,
                                 rng_from(cfg.seed, NS_DATA, 2))
    return test, parts


def init_training(cfg: ExperimentConfig) -> TrainingState:
    cfg.validate()
    test, parts = _build_data(cfg)
    learner = Learner(kind=cfg.data.learner, p=test.p, n_classes=test.n_classes,
                      hidden=cfg.data.hidden)
    w0 = learner.init_params(rng_from(cfg.seed, NS_INIT))
    clients = [ClientState(id=i, params=w0.copy(), dataset=parts[i],
                           velocity=np.zeros_like(w0))
               for i in range(cfg.m_clients)]
    margin = cfg.privacy.margin if cfg.privacy.enabled else 0.0
    state = TrainingState(
        config=cfg, learner=learner, global_params=w0, clients=clients,
        test_set=test, quant=quantizer.uniform_params(cfg.quant.b_init, learner.dim, margin),
    )
    _refresh_broadcast(state)
    state.metrics.append(_metrics_row(state, theta_hat=None, inexact_mean=None))
    return state


def _refresh_broadcast(state: TrainingState) -> None:
    """Full-data loss and gradient of every client at the current global model."""
    w = state.global_params
    grads, losses = [], []
    for c in state.clients:
        loss, g = state.learner.loss_grad(w, c.dataset.features, c.dataset.labels)
        grads.append(g)
        losses.append(loss)
    state.broadcast_grads = grads
    state.broadcast_losses = np.array(losses)


def _dynamic_b_active(cfg: ExperimentConfig) -> bool:
    if cfg.scheme != "probit_plus" or not cfg.quant.dynamic_b:
        return False
    if cfg.attack.active and not cfg.quant.dynamic_b_under_attack:
        return False  # attacks freeze the range at b_init
    return True


def _metrics_row(state: TrainingState, theta_hat, inexact_mean) -> dict:
    cfg = state.config
    w = state.global_params
    return {
        "round": state.round_idx,
        "scheme": cfg.scheme,
        "beta": cfg.attack.beta,
        "attack": cfg.attack.kind,
        "epsilon": cfg.privacy.epsilon if cfg.privacy.enabled else "",
        "train_loss": float(state.broadcast_losses.mean()),
        "test_acc": state.learner.accuracy(w, state.test_set),
        "theta_hat_norm": "" if theta_hat is None else l2_norm(theta_hat),
        "b_mean": float(state.quant.b.mean()) if cfg.scheme == "probit_plus" else "",
        "B_dissimilarity": measure_dissimilarity(state.broadcast_grads),
        "inexactness_mean": "" if inexact_mean is None else float(inexact_mean),
    }


def run_round(state: TrainingState):
    """One communication round; returns the RoundReceipt on the probit path."""
    cfg = state.config
    sched = cfg.schedule
    w = state.global_params
    penalty = "l1" if cfg.scheme == "rsa" else "l2"
    t = state.round_idx + 1

    deltas, signals, inexact, rngs = [], [], [], []
    for m, c in enumerate(state.clients):
        rng = client_stream(cfg.seed, c.id, t)
        h_before, _ = proximal_loss_grad(state.learner, c.params, w, sched.lam, c.dataset)
        delta = local_solve(c, state.learner, w, sched, rng, penalty=penalty)
        h_after, _ = proximal_loss_grad(state.learner, c.params, w, sched.lam, c.dataset)
        signals.append(h_after < h_before)
        inexact.append(inexactness(c, state.learner, w, sched.lam, state.broadcast_grads[m]))
        deltas.append(delta)
        rngs.append(rng)

    if cfg.attack.kind in byzantine.UPDATE_KINDS and cfg.attack.byzantine_count(len(deltas)) > 0:
        deltas = byzantine.corrupt_updates(deltas, cfg.attack, rng_from(cfg.seed, NS_ATTACK, t))

    receipt = None
    if cfg.scheme == "probit_plus":
        q = state.quant
        bits = [quantizer.compress(quantizer.clamp_update(deltas[m], q), q, rngs[m])
                for m in range(len(deltas))]
        if cfg.attack.kind == "worst_case_bits":
            bits = byzantine.corrupt_bits(bits, cfg.attack)
        tally = aggregator.tally_bits(bits)
        theta_hat = aggregator.probit_aggregate(tally, q.b)
        receipt = aggregator.RoundReceipt(round_idx=t, tally=tally,
                                          theta_hat=theta_hat, b_used=q.b.copy())
        state.receipts.append(receipt)
    elif cfg.scheme == "fedavg":
        theta_hat = aggregator.fedavg_mean(deltas)
    elif cfg.scheme == "fed_gm":
        theta_hat = aggregator.geometric_median(deltas)
    else:  # signsgd_mv, rsa: deterministic sign transport
        bits = [quantizer.BitVector.from_signs(deterministic_signs(d)) for d in deltas]
        if cfg.attack.kind == "worst_case_bits":
            bits = byzantine.corrupt_bits(bits, cfg.attack)
        if cfg.scheme == "signsgd_mv":
            theta_hat = aggregator.majority_vote(bits, step=sched.agg_coef)
        else:
            theta_hat = aggregator.sign_accumulate(bits, coef=sched.agg_coef)

    state.global_params = w + sched.server_lr * theta_hat
    state.round_idx = t

    if _dynamic_b_active(cfg):
        vote_signals = list(signals)
        if cfg.attack.active and not cfg.attack.honest_loss_signal:
            for i in range(len(vote_signals) - cfg.attack.byzantine_count(len(vote_signals)),
                           len(vote_signals)):
                vote_signals[i] = not vote_signals[i]
        state.quant = quantizer.dynamic_b_update(state.quant, loss_signal_vote(vote_signals))

    _refresh_broadcast(state)
    state.metrics.append(_metrics_row(state, theta_hat=theta_hat,
                                      inexact_mean=float(np.mean(inexact))))
    return receipt


def run_training(cfg: ExperimentConfig, out_dir=None) -> TrainingResult:
    """T rounds of run_round; optionally persist CSV logs and the final model."""
    state = init_training(cfg)
    for _ in range(cfg.schedule.rounds):
        run_round(state)
    result = TrainingResult(
        metrics=state.metrics,
        receipts=state.receipts,
        final_global=state.global_params,
        clients=state.clients,
        final_test_acc=state.metrics[-1]["test_acc"],
    )
    if out_dir is not None:
        out_dir = str(out_dir)
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.metrics)
        if cfg.scheme == "probit_plus":
            aggregator.write_receipts_csv(os.path.join(out_dir, "receipts.csv"),
                                          result.receipts)
        np.save(os.path.join(out_dir, "final_model.npy"), result.final_global)
    return result


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in METRICS_COLUMNS])
