"""Update-level and bit-level adversaries for robustness experiments.

Byzantine clients are omniscient and colluding: they see every honest update
before choosing their own.  Identities are always the last floor(beta * M)
client ids; aggregation rules here are permutation-invariant, so placement is
immaterial and a fixed choice keeps runs reproducible.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import ConfigError
from .quantizer import BitVector

UPDATE_KINDS = ("gaussian", "sign_flip", "zero_gradient", "sample_duplicate")
ALL_KINDS = ("none",) + UPDATE_KINDS + ("worst_case_bits",)
BIT_MODES = ("all_plus", "flip")


@dataclass
class AttackSpec:
    kind: str = "none"
    beta: float = 0.0               # Byzantine fraction of M
    gaussian_variance: float = 100.0
    flip_factor: float = -5.0
    bit_mode: str = "all_plus"      # worst_case_bits variant
    honest_loss_signal: bool = True  # Byzantine clients vote truthfully unless off

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigError(f"unknown attack kind '{self.kind}'")
        # fractions >= 0.5 void the robustness guarantees but stay mechanically
        # valid (stress tests use them); >= 1 would leave no honest client
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"byzantine fraction must be in [0, 1), got {self.beta}")
        if self.bit_mode not in BIT_MODES:
            raise ConfigError(f"unknown bit_mode '{self.bit_mode}'")
        if self.gaussian_variance < 0:
            raise ConfigError("gaussian_variance must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.beta > 0.0

    def byzantine_count(self, m: int) -> int:
        count = int(math.floor(self.beta * m))
        if count >= m:
            raise ValueError(f"{count} Byzantine of {m} clients leaves no honest ones")
        return count


def corrupt_updates(honest, spec: AttackSpec, rng: np.random.Generator):
    """Replace the last floor(beta*M) updates with malicious ones.

    gaussian          iid noise per coordinate, N(0, variance)
    sign_flip         flip_factor times the client's own honest update
    zero_gradient     each sends -(sum of surviving honest updates)/|B|,
                      so the total sum over all M messages is zero
    sample_duplicate  copy of the first honest client's update
    """
    if spec.kind not in UPDATE_KINDS:
        raise ValueError(f"'{spec.kind}' is not an update-level attack")
    updates = [np.asarray(u, dtype=np.float64) for u in honest]
    m = len(updates)
    n_byz = spec.byzantine_count(m)
    if n_byz == 0:
        return updates
    d = updates[0].size
    honest_part = updates[:m - n_byz]
    out = list(honest_part)
    if spec.kind == "gaussian":
        noise = rng.normal(0.0, math.sqrt(spec.gaussian_variance), size=(n_byz, d))
        out.extend(noise[i] for i in range(n_byz))
    elif spec.kind == "sign_flip":
        out.extend(spec.flip_factor * updates[i] for i in range(m - n_byz, m))
    elif spec.kind == "zero_gradient":
        cancel = -np.sum(honest_part, axis=0) / n_byz
        out.extend(cancel.copy() for _ in range(n_byz))
    elif spec.kind == "sample_duplicate":
        out.extend(honest_part[0].copy() for _ in range(n_byz))
    return out


def corrupt_bits(honest_bits, spec: AttackSpec):
    """Replace Byzantine bit messages with a worst-case deterministic pattern.

    all_plus sends +1 everywhere; flip negates the client's honest bits.
    """
    if spec.kind != "worst_case_bits":
        raise ValueError(f"'{spec.kind}' is not a bit-level attack")
    messages = list(honest_bits)
    m = len(messages)
    n_byz = spec.byzantine_count(m)
    if n_byz == 0:
        return messages
    for i in range(m - n_byz, m):
        signs = messages[i].signs()
        if spec.bit_mode == "all_plus":
            new = np.ones_like(signs)
        else:
            new = -signs
        messages[i] = BitVector.from_signs(new)
    return messages
