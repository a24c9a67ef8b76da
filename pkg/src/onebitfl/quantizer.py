"""Client-side stochastic one-bit compressor, range clamping, dynamic range.

An update delta with |delta_i| <= b_i is transmitted as one bit per
coordinate: +1 with probability (b_i + delta_i) / (2 b_i), else -1.  The sign
times b_i is an unbiased estimate of delta_i, which is what lets the server
rescale bit tallies back into parameter space.

The range b doubles as the privacy lever: when local DP is on, a margin
(1 + 1/eps) * delta1 of the range is reserved and updates are clamped to
b - margin, so the channel's log-likelihood ratio stays bounded by eps.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .core import ConfigError

# Range schedule factors: grow when the loss-signal vote says the global loss
# fell, shrink (faster) when it did not.
B_GROW = 1.01
B_SHRINK = 0.98


@dataclass
class QuantParams:
    """Per-coordinate quantization range plus the reserved privacy margin."""

    b: np.ndarray          # positive, shape (d,)
    dp_margin: float = 0.0  # (1 + 1/eps) * delta1 when DP is on, else 0

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.ndim != 1:
            raise ValueError(f"quantization range must be 1-D, got {self.b.shape}")
        if not np.all(self.b > 0):
            raise ConfigError("quantization range must be positive everywhere")
        if self.dp_margin < 0:
            raise ConfigError("dp_margin must be nonnegative")


def uniform_params(b_init: float, d: int, dp_margin: float = 0.0) -> QuantParams:
    """Scalar range broadcast to every coordinate (the default setup)."""
    return QuantParams(b=np.full(d, float(b_init)), dp_margin=dp_margin)


@dataclass(frozen=True)
class BitVector:
    """A d-coordinate message of ±1 signs, stored bit-packed.

    Wire format: little-endian uint32 dimension header, then the signs packed
    little-endian within each byte (coordinate i at byte i//8, bit i%8),
    +1 encoded as bit value 1.
    """

    packed: bytes
    d: int

    @classmethod
    def from_signs(cls, signs) -> "BitVector":
        signs = np.asarray(signs)
        if signs.ndim != 1:
            raise ValueError("signs must be 1-D")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("bit message entries must be +1 or -1")
        bits = (signs > 0).astype(np.uint8)
        return cls(packed=np.packbits(bits, bitorder="little").tobytes(), d=int(signs.size))

    def signs(self) -> np.ndarray:
        """Unpack to an int8 array of ±1."""
        raw = np.frombuffer(self.packed, dtype=np.uint8)
        bits = np.unpackbits(raw, count=self.d, bitorder="little")
        return np.where(bits == 1, 1, -1).astype(np.int8)

    def to_bytes(self) -> bytes:
        return struct.pack("<I", self.d) + self.packed

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BitVector":
        if len(blob) < 4:
            raise ValueError("truncated bit message")
        (d,) = struct.unpack_from("<I", blob, 0)
        body = blob[4:]
        if len(body) != (d + 7) // 8:
            raise ValueError(f"bit message length {len(body)} does not match d={d}")
        return cls(packed=bytes(body), d=d)


def plus_probability(delta, b):
    """P(bit = +1) = (b + delta) / (2 b) for admissible updates.

    Hard-errors when |delta_i| > b_i: the formula would leave [0, 1] and the
    caller forgot to clamp.  Broadcasts over leading axes so Monte Carlo
    oracles can evaluate whole (trials, clients, d) blocks at once.
    """
    delta = np.asarray(delta, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(np.abs(delta) > b):
        raise ValueError("update exceeds quantization range; clamp first")
    return (b + delta) / (2.0 * b)


def compress_signs(delta, b, rng: np.random.Generator) -> np.ndarray:
    """Draw ±1 messages for an array of updates (last axis = coordinate).

    Uniform draws are consumed in C order, i.e. coordinate-ascending for a
    single update vector.
    """
    p = plus_probability(delta, b)
    u = rng.random(np.shape(p))
    return np.where(u < p, 1, -1).astype(np.int8)


def compress(delta: np.ndarray, q: QuantParams, rng: np.random.Generator) -> BitVector:
    """One client's stochastic one-bit message for its (clamped) update."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != q.b.shape:
        raise ValueError(f"dimension mismatch: {delta.shape} vs {q.b.shape}")
    return BitVector.from_signs(compress_signs(delta, q.b, rng))


def clamp_update(delta: np.ndarray, q: QuantParams) -> np.ndarray:
    """Clamp the update into the admissible band [-(b - margin), b - margin].

    With DP enabled this enforces the calibration precondition
    b_i >= |delta_i| + (1 + 1/eps) * delta1 by construction.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != q.b.shape:
        raise ValueError(f"dimension mismatch: {delta.shape} vs {q.b.shape}")
    limit = q.b - q.dp_margin
    if np.any(limit <= 0):
        raise ConfigError(
            "quantization range too small for the requested privacy margin "
            f"(min b = {q.b.min():.6g}, margin = {q.dp_margin:.6g})"
        )
    return np.clip(delta, -limit, limit)


def dynamic_b_update(q: QuantParams, loss_decreased: bool) -> QuantParams:
    """Next round's range: b * 1.01 after a loss decrease, else b * 0.98."""
    factor = B_GROW if loss_decreased else B_SHRINK
    new_b = q.b * factor
    if np.any(new_b <= q.dp_margin):
        raise ConfigError("dynamic range update would fall below the privacy margin")
    return QuantParams(b=new_b, dp_margin=q.dp_margin)


def expected_value(delta_i: float, b_i: float) -> float:
    """E[bit * b] = P(+1) b - P(-1) b, algebraically equal to delta_i."""
    p = float(plus_probability(delta_i, b_i))
    return p * b_i + (1.0 - p) * (-b_i)
