"""One-bit federated aggregation lab.

Clients train personalized models with a proximal pull toward the broadcast
model and transmit their updates as one stochastic bit per coordinate; the
server tallies bits and rescales them into an unbiased update estimate.  The
package bundles the compressor, DP range calibration, a Byzantine attack
suite, baseline aggregators, a simulation engine, and statistical oracles
that turn the scheme's guarantees into pass/fail checks.
"""

__version__ = "0.1.0"

from .core import ConfigError  # noqa: F401
