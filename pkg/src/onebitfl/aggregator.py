"""Server-side combination rules: bit-tally ML estimation and baselines.

The one-bit path counts +1 votes per coordinate and rescales:
theta_hat_i = ((2 N_i - M) / M) * b_i, the maximum-likelihood estimate of the
common update mean given M independent one-bit messages.  Baselines cover the
full-precision mean, its geometric-median robustification, sign majority
voting, and plain sign accumulation.
"""

from dataclasses import dataclass
import csv

import numpy as np

from .quantizer import BitVector


@dataclass
class BitTally:
    """Per-coordinate count of +1 votes among m received messages."""

    n_plus: np.ndarray  # int64, shape (d,)
    m: int

    def __post_init__(self):
        self.n_plus = np.asarray(self.n_plus, dtype=np.int64)
        if self.m <= 0:
            raise ValueError("tally needs at least one message")
        if np.any(self.n_plus < 0) or np.any(self.n_plus > self.m):
            raise ValueError("counts must lie in [0, m]")

    @property
    def fractions(self) -> np.ndarray:
        return self.n_plus / self.m


@dataclass
class RoundReceipt:
    """What the one-bit server saw and produced in one round."""

    round_idx: int
    tally: BitTally
    theta_hat: np.ndarray
    b_used: np.ndarray

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=np.float64)
        self.b_used = np.asarray(self.b_used, dtype=np.float64)
        if np.any(np.abs(self.theta_hat) > self.b_used):
            raise ValueError("estimate escapes the quantization range")


def _stack_signs(messages) -> np.ndarray:
    if len(messages) == 0:
        raise ValueError("no messages to aggregate")
    first = messages[0]
    if isinstance(first, BitVector):
        d = first.d
        if any(m.d != d for m in messages):
            raise ValueError("bit messages disagree on dimension")
        return np.stack([m.signs() for m in messages])
    signs = np.asarray(messages)
    if signs.ndim != 2:
        raise ValueError("expected a (clients, d) sign matrix")
    return signs


def tally_bits(messages) -> BitTally:
    """Count +1 votes per coordinate over a list of bit messages."""
    signs = _stack_signs(messages)
    return BitTally(n_plus=(signs > 0).sum(axis=0), m=signs.shape[0])


def probit_aggregate(t: BitTally, b) -> np.ndarray:
    """ML estimate from a tally: theta_hat_i = ((2 n_plus_i - m) / m) * b_i."""
    b = np.asarray(b, dtype=np.float64)
    if t.m <= 0:
        raise ValueError("empty tally")
    return (2.0 * t.n_plus - t.m) / t.m * b


def fedavg_mean(updates) -> np.ndarray:
    """Coordinatewise arithmetic mean of full-precision updates."""
    if len(updates) == 0:
        raise ValueError("no updates to average")
    pts = np.stack([np.asarray(u, dtype=np.float64) for u in updates])
    return pts.mean(axis=0)


def geometric_median(updates, tol: float = 1e-6, max_iter: int = 100) -> np.ndarray:
    """Weiszfeld iteration for the point minimizing the sum of distances.

    Starts at the mean, stops when the iterate moves less than tol, and
    returns the last iterate if max_iter is exhausted.  An iterate landing
    within 1e-12 of a data point would zero a denominator; it is perturbed
    by 1e-12 instead.
    """
    if len(updates) == 0:
        raise ValueError("no updates")
    pts = np.stack([np.asarray(u, dtype=np.float64) for u in updates])
    g = pts.mean(axis=0)
    for _ in range(max_iter):
        dist = np.linalg.norm(pts - g, axis=1)
        if np.any(dist < 1e-12):
            g = g + 1e-12
            dist = np.linalg.norm(pts - g, axis=1)
        w = 1.0 / dist
        new = (pts * w[:, None]).sum(axis=0) / w.sum()
        if np.linalg.norm(new - g) < tol:
            return new
        g = new
    return g


def majority_vote(messages, step: float = 0.01) -> np.ndarray:
    """step * majority sign per coordinate; exact ties give 0 (no update)."""
    t = tally_bits(messages)
    return step * np.sign(2.0 * t.n_plus - t.m)


def sign_accumulate(messages, coef: float = 0.01) -> np.ndarray:
    """coef * sum of signs per coordinate (equals coef * (2 n_plus - m))."""
    signs = _stack_signs(messages)
    return coef * signs.sum(axis=0).astype(np.float64)


def write_receipts_csv(path, receipts) -> None:
    """Round summaries: update norm and the spread of tally fractions."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "theta_hat_norm", "tally_frac_min", "tally_frac_max"])
        for r in receipts:
            frac = r.tally.fractions
            writer.writerow([
                r.round_idx,
                repr(float(np.sqrt(np.dot(r.theta_hat, r.theta_hat)))),
                repr(float(frac.min())),
                repr(float(frac.max())),
            ])
