"""Per-round local differential privacy: range calibration and an auditor.

The one-bit channel satisfies (eps, 0)-DP per round once every coordinate's
quantization range exceeds the largest admissible update magnitude by the
margin (1 + 1/eps) * delta1, where delta1 bounds the l1 change of a client's
update when one local record changes.  Only the single-round guarantee is
certified; multi-round composition is reported as the naive T*eps sum in run
logs and is NOT a tight accountant.

The auditor computes worst-case log-likelihood ratios of the channel on
adjacent inputs directly from the bit probabilities, so calibration claims
can be falsified numerically rather than trusted.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .core import ConfigError, l1_norm


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float  # per-round privacy loss bound
    delta1: float   # l1-sensitivity of one client update
    enabled: bool = True

    def __post_init__(self):
        if self.enabled:
            if not self.epsilon > 0:
                raise ConfigError("privacy epsilon must be positive")
            if not self.delta1 > 0:
                raise ConfigError("privacy delta1 must be positive")

    @property
    def margin(self) -> float:
        """Reserved slack (1 + 1/eps) * delta1; equals delta1 as eps -> inf."""
        return (1.0 + 1.0 / self.epsilon) * self.delta1


def required_b(max_abs_delta: float, spec: PrivacySpec) -> float:
    """Smallest compliant range: max |delta_i| + (1 + 1/eps) * delta1."""
    if not spec.enabled:
        raise ConfigError("required_b needs an enabled privacy spec")
    return float(max_abs_delta) + spec.margin


def _branch_loss(b: float, x_new: float, x_old: float, sign: int) -> float:
    # P(c|x) is proportional to b + c*x; the common 1/(2b) cancels in the ratio.
    p_new = b + sign * x_new
    p_old = b + sign * x_old
    if p_new <= 0.0 and p_old <= 0.0:
        # Outcome unrealizable under both inputs: contributes nothing.
        return 0.0
    if p_new <= 0.0 or p_old <= 0.0:
        return math.inf
    return abs(math.log(p_new / p_old))


def audit_privacy_loss(b: float, delta: float, v: float) -> float:
    """Worst |log P(c|delta+v) - log P(c|delta)| over the two outcomes c.

    Returns +inf when an outcome is possible under one input but not the
    other (unbounded loss).  An outcome impossible under both inputs never
    occurs and contributes nothing.
    """
    b = float(b)
    delta = float(delta)
    v = float(v)
    if abs(delta) > b or abs(delta + v) > b:
        raise ValueError("inadmissible pair: need |delta| <= b and |delta+v| <= b")
    return max(
        _branch_loss(b, delta + v, delta, +1),
        _branch_loss(b, delta + v, delta, -1),
    )


def audit_vector(b, delta, v, delta1: float) -> float:
    """Total worst-case privacy loss of an adjacent pair, summed over coordinates.

    Hard-errors when ||v||_1 exceeds delta1: such a pair is outside the
    sensitivity model and the calibration makes no claim about it.
    """
    delta = np.asarray(delta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), delta.shape)
    if delta.shape != v.shape:
        raise ValueError("delta and v must share a shape")
    if l1_norm(v) > delta1 * (1.0 + 1e-12):
        raise ValueError(f"sensitivity violated: ||v||_1 = {l1_norm(v):.6g} > {delta1:.6g}")
    return float(sum(audit_privacy_loss(b[i], delta[i], v[i]) for i in range(delta.size)))


def write_audit_csv(path, b, delta, v, spec: PrivacySpec) -> None:
    """Per-coordinate audit trace for one adjacent pair.

    Columns: coordinate, delta, v, loss, bound, pass.  The per-coordinate
    bound is (eps/delta1)*|v_i|, whose sum over coordinates is <= eps when
    ||v||_1 <= delta1.
    """
    delta = np.asarray(delta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), delta.shape)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "delta", "v", "loss", "bound", "pass"])
        for i in range(delta.size):
            loss = audit_privacy_loss(b[i], delta[i], v[i])
            bound = spec.epsilon * abs(v[i]) / spec.delta1
            writer.writerow([i, repr(float(delta[i])), repr(float(v[i])),
                             repr(float(loss)), repr(float(bound)),
                             bool(loss <= bound + 1e-12)])
