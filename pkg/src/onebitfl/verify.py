"""Statistical oracles: the protocol's guarantees as seeded pass/fail checks.

Each check simulates the one-bit pipeline with its own Monte Carlo budget and
compares against the closed-form prediction:

  unbiasedness   mean aggregate within 4 SE of the true update mean
  variance       E||theta - theta_hat||^2 vs sum_i (b_i^2 - theta_i^2)/M
  decay          log-log slope of MSE vs M close to -1
  byzantine      aggregate shift under attack <= 2 beta ||b|| (+3 SE slack)
  dp             adversarial search never exceeds the per-round epsilon

Standard errors come from the observed trial variance, never from the model
under test.  Every check is reproducible from its seed argument.

The sufficiency of the bit tally is a structural fact about the message
likelihood (it factorizes through the per-coordinate counts); it has no
finite-sample test and is therefore not in this suite.
"""

from dataclasses import dataclass
import math

import numpy as np

from .byzantine import AttackSpec, UPDATE_KINDS
from .core import rng_from
from .privacy import PrivacySpec, audit_vector, required_b
from .quantizer import compress_signs, plus_probability

DEFAULT_B = 0.01
# Update means used by the Theorem-1 style checks: mixed signs and sizes,
# capped at 0.5*b so the truncated client spread (sigma = b/10) keeps its
# boundary mass negligible next to Monte Carlo noise.
THETA_PATTERN = np.array([0.0, 0.1, -0.1, 0.25, -0.25, 0.4, -0.4, 0.5, -0.5, 0.3])


@dataclass
class OracleReport:
    name: str
    measured: float
    expected: float   # theoretical value, or the bound for one-sided checks
    tolerance: float
    passed: bool
    trials: int
    mode: str = "two_sided"
    note: str = ""

    def csv_line(self) -> str:
        return ",".join([
            self.name, repr(float(self.measured)), repr(float(self.expected)),
            repr(float(self.tolerance)), "pass" if self.passed else "FAIL",
            str(self.trials), self.mode, self.note,
        ])


CSV_HEADER = "name,measured,expected,tolerance,result,trials,mode,note"


def _chunks(trials: int, m: int, d: int):
    chunk = max(1, int(4_000_000 / max(1, m * d)))
    done = 0
    while done < trials:
        take = min(chunk, trials - done)
        done += take
        yield take


def _simulate_theta_hat_sums(theta, b, m, trials, rng, sigma_frac):
    """Accumulate per-coordinate sums of theta_hat and theta_hat^2 plus the
    per-trial squared error, via the real compressor path."""
    theta = np.asarray(theta, dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), theta.shape)
    d = theta.size
    s1 = np.zeros(d)
    s2 = np.zeros(d)
    sq1 = 0.0
    sq2 = 0.0
    for take in _chunks(trials, m, d):
        if sigma_frac > 0:
            delta = theta + rng.normal(0.0, 1.0, size=(take, m, d)) * (sigma_frac * b)
            np.clip(delta, -b, b, out=delta)
        else:
            delta = np.broadcast_to(theta, (take, m, d))
        signs = compress_signs(delta, b, rng)
        n_plus = (signs > 0).sum(axis=1)
        theta_hat = (2.0 * n_plus - m) / m * b
        s1 += theta_hat.sum(axis=0)
        s2 += (theta_hat * theta_hat).sum(axis=0)
        err = ((theta_hat - theta) ** 2).sum(axis=1)
        sq1 += err.sum()
        sq2 += (err * err).sum()
    return s1, s2, sq1, sq2


def check_unbiasedness(theta, b=DEFAULT_B, M=50, trials=100_000, seed=20,
                       sigma_frac=0.1) -> OracleReport:
    """Mean aggregate within 4 SE of theta, per coordinate.

    Client updates are drawn around theta with spread sigma_frac*b (truncated
    to the admissible band), then compressed and tallied; measured is the
    worst per-coordinate |mean - theta| / SE over the trials.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    rng = rng_from(seed)
    s1, s2, _, _ = _simulate_theta_hat_sums(theta, b, M, trials, rng, sigma_frac)
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean * mean, 0.0)
    se = np.sqrt(var / trials)
    diff = np.abs(mean - theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff <= 1e-12, 0.0, np.inf))
    worst = float(np.max(z))
    return OracleReport(
        name="unbiasedness", measured=worst, expected=0.0, tolerance=4.0,
        passed=worst <= 4.0, trials=trials, mode="max_abs_z",
        note=f"M={M} d={theta.size} sigma_frac={sigma_frac}",
    )


def _mse_estimate(theta, b, M, trials, rng):
    _, _, sq1, sq2 = _simulate_theta_hat_sums(theta, b, M, trials, rng, sigma_frac=0.0)
    mean = sq1 / trials
    var = max(sq2 / trials - mean * mean, 0.0)
    return mean, math.sqrt(var / trials)


def check_variance(theta, b=DEFAULT_B, M=10, trials=100_000, seed=21) -> OracleReport:
    """Empirical E||theta - theta_hat||^2 within 5% of sum (b_i^2-theta_i^2)/M.

    Clients hold delta = theta exactly, the case the closed form describes.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    bb = np.broadcast_to(np.asarray(b, dtype=np.float64), theta.shape)
    theory = float(((bb * bb - theta * theta) / M).sum())
    rng = rng_from(seed)
    mse, se = _mse_estimate(theta, bb, M, trials, rng)
    note = f"M={M} d={theta.size} mse={mse:.6g} se={se:.3g}"
    if theory == 0.0:
        return OracleReport("variance", measured=mse, expected=0.0, tolerance=0.0,
                            passed=(mse == 0.0), trials=trials, mode="exact",
                            note="degenerate: theta at the range boundary; " + note)
    rel = abs(mse - theory) / theory
    return OracleReport("variance", measured=rel, expected=0.0, tolerance=0.05,
                        passed=rel <= 0.05, trials=trials, mode="relative_error",
                        note=f"theory={theory:.6g} " + note)


def check_error_decay(theta, b=DEFAULT_B, M_list=(10, 20, 40, 80),
                      trials=20_000, seed=22) -> OracleReport:
    """Least-squares slope of log MSE vs log M must sit in [-1.15, -0.85]."""
    if len(M_list) < 3:
        raise ValueError("need at least 3 client counts to fit a decay slope")
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    rng = rng_from(seed)
    mses = [_mse_estimate(theta, np.broadcast_to(np.asarray(b, float), theta.shape),
                          m, trials, rng)[0] for m in M_list]
    if all(v == 0.0 for v in mses):
        return OracleReport("error_decay", measured=float("nan"), expected=-1.0,
                            tolerance=0.15, passed=True, trials=trials, mode="slope",
                            note="degenerate: zero MSE at every M (theta at boundary)")
    slope = float(np.polyfit(np.log(np.asarray(M_list, float)), np.log(mses), 1)[0])
    return OracleReport("error_decay", measured=slope, expected=-1.0, tolerance=0.15,
                        passed=-1.15 <= slope <= -0.85, trials=trials, mode="slope",
                        note=f"M_list={list(M_list)}")


def check_byzantine_bound(spec: AttackSpec, theta, b=DEFAULT_B, M=20,
                          trials=10_000, seed=23) -> OracleReport:
    """Aggregate mean shift under attack vs the 2 beta ||b|| ceiling.

    Honest updates are fixed across trials; the honest and attacked runs
    share uniform draws (common random numbers), so the estimated shift
    carries only the Byzantine rows' noise.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    d = theta.size
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), theta.shape)
    rng = rng_from(seed)

    honest = theta + rng.normal(0.0, 1.0, size=(M, d)) * (0.1 * b)
    np.clip(honest, -b, b, out=honest)
    n_byz = spec.byzantine_count(M)
    r_honest = M - n_byz
    p_honest = plus_probability(honest, b)

    fixed_mal = None
    if n_byz > 0 and spec.kind in UPDATE_KINDS and spec.kind != "gaussian":
        if spec.kind == "sign_flip":
            fixed_mal = spec.flip_factor * honest[r_honest:]
        elif spec.kind == "zero_gradient":
            fixed_mal = np.tile(-honest[:r_honest].sum(axis=0) / n_byz, (n_byz, 1))
        elif spec.kind == "sample_duplicate":
            fixed_mal = np.tile(honest[0], (n_byz, 1))
        fixed_mal = np.clip(fixed_mal, -b, b)

    s1 = np.zeros(d)
    s2 = np.zeros(d)
    for take in _chunks(trials, 2 * M, d):
        u = rng.random((take, M, d))
        signs_r = np.where(u < p_honest, 1, -1)
        signs_b = signs_r.copy()
        if n_byz > 0:
            if spec.kind == "worst_case_bits":
                if spec.bit_mode == "all_plus":
                    signs_b[:, r_honest:, :] = 1
                else:
                    signs_b[:, r_honest:, :] = -signs_r[:, r_honest:, :]
            elif spec.kind == "gaussian":
                mal = rng.normal(0.0, math.sqrt(spec.gaussian_variance),
                                 size=(take, n_byz, d))
                np.clip(mal, -b, b, out=mal)
                p_mal = plus_probability(mal, b)
                signs_b[:, r_honest:, :] = np.where(u[:, r_honest:, :] < p_mal, 1, -1)
            else:
                p_mal = plus_probability(fixed_mal, b)
                signs_b[:, r_honest:, :] = np.where(u[:, r_honest:, :] < p_mal, 1, -1)
        diff = 2.0 / M * b * ((signs_r > 0).sum(axis=1) - (signs_b > 0).sum(axis=1))
        s1 += diff.sum(axis=0)
        s2 += (diff * diff).sum(axis=0)

    mean = s1 / trials
    var = np.maximum(s2 / trials - mean * mean, 0.0)
    deviation = float(np.sqrt(mean @ mean))
    se_norm = float(np.sqrt(var.sum() / trials))  # upper bound on the norm's SE
    bound = 2.0 * spec.beta * float(np.sqrt(b @ b))
    return OracleReport(
        name=f"byzantine_{spec.kind}_beta{spec.beta:g}", measured=deviation,
        expected=bound, tolerance=3.0 * se_norm,
        passed=deviation <= bound + 3.0 * se_norm, trials=trials, mode="upper_bound",
        note=f"M={M} d={d} byz={n_byz} se={se_norm:.3g}",
    )


def check_worst_case_tightness(beta=0.25, M=20, b=DEFAULT_B, trials=200,
                               seed=24) -> OracleReport:
    """d=1 witness: all-+1 adversary against honest updates at -b.

    Honest bits are then deterministic (-1), so the attacked shift equals
    2*(floor(beta*M)/M)*b exactly; the check requires >= 1.9*beta*b.
    """
    spec = AttackSpec(kind="worst_case_bits", beta=beta, bit_mode="all_plus")
    theta = np.array([-float(b)])
    rng = rng_from(seed)
    n_byz = spec.byzantine_count(M)
    s = 0.0
    for _ in range(trials):
        u = rng.random((M, 1))
        signs_r = np.where(u < plus_probability(theta, b), 1, -1)
        signs_b = signs_r.copy()
        signs_b[M - n_byz:, :] = 1
        diff = 2.0 / M * b * ((signs_r > 0).sum(axis=0) - (signs_b > 0).sum(axis=0))
        s += abs(float(diff[0]))
    measured = s / trials
    floor_bound = 1.9 * beta * float(b)
    return OracleReport(
        name=f"byzantine_tightness_beta{beta:g}", measured=measured,
        expected=floor_bound, tolerance=0.0, passed=measured >= floor_bound,
        trials=trials, mode="lower_bound",
        note=f"M={M}, exact shift = 2*floor(beta*M)/M*b = {2 * n_byz / M * b:.6g}",
    )


def _dp_search(b: float, epsilon: float, delta1: float, max_abs: float,
               d: int, trials: int, rng) -> float:
    """Adversarial search for the worst audit_vector over adjacent pairs."""
    b_vec = np.full(d, b)
    worst = 0.0

    def consider(delta, v):
        nonlocal worst
        # keep the pair inside the channel domain; clipping only shrinks v
        v = np.clip(v, -b - delta, b - delta)
        loss = audit_vector(b_vec, delta, v, delta1)
        if loss > worst:
            worst = loss

    # structured corners: all sensitivity mass on one coordinate parked at
    # (or within a step of) the update boundary, both signs
    for j in range(d):
        for s in (+1.0, -1.0):
            for back_off in (0.0, delta1, 2.0 * delta1):
                delta = np.zeros(d)
                delta[j] = s * max(0.0, max_abs - back_off)
                v = np.zeros(d)
                v[j] = s * delta1
                consider(delta, v)
                consider(delta, -v)
    # randomized pairs: random updates, random l1 splits of the mass
    for i in range(trials):
        delta = rng.uniform(-max_abs, max_abs, size=d)
        if i % 2 == 0:
            v = np.zeros(d)
            v[rng.integers(d)] = delta1 * (1 if rng.random() < 0.5 else -1)
        else:
            v = rng.dirichlet(np.ones(d)) * delta1
            v *= np.where(rng.random(d) < 0.5, 1.0, -1.0)
        consider(delta, v)
    return worst


def check_dp(epsilon=0.1, delta1=0.0002, trials=10_000, seed=25,
             max_abs_delta=0.005, d=8, with_margin=True) -> OracleReport:
    """Search >= trials adjacent pairs for the worst privacy loss.

    with_margin=False drops the (1+1/eps)*delta1 slack from the range (the
    sabotage path); the check then reports the resulting violation as a
    failure, demonstrating the margin is load-bearing.
    """
    spec = PrivacySpec(epsilon=epsilon, delta1=delta1)
    b = required_b(max_abs_delta, spec) if with_margin else max_abs_delta
    worst = _dp_search(b, epsilon, delta1, max_abs_delta, d, trials, rng_from(seed))
    name = "dp_calibrated" if with_margin else "dp_no_margin"
    return OracleReport(
        name=name, measured=worst, expected=epsilon, tolerance=0.0,
        passed=worst <= epsilon + 1e-12, trials=trials, mode="upper_bound",
        note=f"b={b:.6g} max|delta|={max_abs_delta:g} d={d}",
    )


def check_dp_margin_necessity(epsilon=0.1, delta1=0.0002, trials=10_000,
                              seed=26, max_abs_delta=0.005, d=8) -> OracleReport:
    """Passes iff removing the margin lets the search find a violation."""
    rep = check_dp(epsilon, delta1, trials, seed, max_abs_delta, d, with_margin=False)
    return OracleReport(
        name="dp_margin_necessity", measured=rep.measured, expected=epsilon,
        tolerance=0.0, passed=rep.measured > epsilon, trials=trials,
        mode="violation_exists",
        note="loss above epsilon is the desired outcome here; " + rep.note,
    )


def suite_unbiasedness(trials=100_000, seed=0):
    theta = THETA_PATTERN * DEFAULT_B
    return [
        check_unbiasedness(theta, b=DEFAULT_B, M=50, trials=trials, seed=seed + 20),
        # boundary: updates pinned at +b compress deterministically
        check_unbiasedness(np.full(4, DEFAULT_B), b=DEFAULT_B, M=50,
                           trials=min(trials, 1000), seed=seed + 27, sigma_frac=0.0),
    ]


def suite_variance(trials=100_000, seed=0):
    theta = THETA_PATTERN * DEFAULT_B
    return [
        check_variance(theta, b=DEFAULT_B, M=10, trials=trials, seed=seed + 21),
        check_variance(theta, b=DEFAULT_B, M=100, trials=trials, seed=seed + 31),
        check_variance(np.zeros(1), b=1.0, M=100, trials=trials, seed=seed + 41),
    ]


def suite_decay(trials=20_000, seed=0):
    theta = THETA_PATTERN * DEFAULT_B
    return [check_error_decay(theta, b=DEFAULT_B, M_list=(10, 20, 40, 80),
                              trials=trials, seed=seed + 22)]


def suite_byzantine(trials=10_000, seed=0):
    theta = THETA_PATTERN[:5] * DEFAULT_B
    reports = []
    kinds = list(UPDATE_KINDS) + ["worst_case_bits"]
    for i, kind in enumerate(kinds):
        for j, beta in enumerate((0.1, 0.2, 0.3, 0.4)):
            spec = AttackSpec(kind=kind, beta=beta)
            reports.append(check_byzantine_bound(
                spec, theta, b=DEFAULT_B, M=20, trials=trials,
                seed=seed + 100 + 10 * i + j))
    reports.append(check_worst_case_tightness(beta=0.25, M=20, b=DEFAULT_B,
                                              seed=seed + 24))
    return reports


def suite_dp(trials=10_000, seed=0, with_margin=True):
    if not with_margin:
        # sabotage path: audit the uncalibrated range under normal semantics
        return [check_dp(trials=trials, seed=seed + 25, with_margin=False)]
    return [
        check_dp(trials=trials, seed=seed + 25, with_margin=True),
        check_dp_margin_necessity(trials=trials, seed=seed + 26),
    ]


SUITES = {
    "unbiasedness": suite_unbiasedness,
    "variance": suite_variance,
    "decay": suite_decay,
    "byzantine": suite_byzantine,
    "dp": suite_dp,
}


def run_suites(names, trials=None, seed=0, dp_with_margin=True):
    """Run the named suites (or 'all'); returns the flat report list."""
    expanded = []
    for name in names:
        if name == "all":
            expanded.extend(SUITES)
        elif name in SUITES:
            expanded.append(name)
        else:
            raise ValueError(f"unknown suite '{name}' (choose from {sorted(SUITES)} or all)")
    reports = []
    for name in expanded:
        kwargs = {}
        if trials is not None:
            kwargs["trials"] = trials
        if name == "dp":
            kwargs["with_margin"] = dp_with_margin
        reports.extend(SUITES[name](seed=seed, **kwargs))
    return reports
