"""Acceptance gate: every release-blocking property at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS/FAIL line
per criterion.  The Monte Carlo budgets follow the shipped defaults, so this
file takes a few minutes; the unit-test files cover the same code paths at
smaller budgets.
"""

import copy

import numpy as np
import pytest

from onebitfl.byzantine import AttackSpec, UPDATE_KINDS
from onebitfl.cli import main
from onebitfl.config import DataSpec, ExperimentConfig, QuantSpec, TrainSchedule
from onebitfl.core import rng_from
from onebitfl.engine import proximal_loss_grad, run_training
from onebitfl.learners import Learner, synth_generate
from onebitfl.verify import (check_byzantine_bound, check_dp,
                             check_dp_margin_necessity, check_error_decay,
                             check_unbiasedness, check_variance,
                             check_worst_case_tightness)

B = 0.01
THETA10 = np.array([0.0, 0.1, -0.1, 0.25, -0.25, 0.4, -0.4, 0.5, -0.5, 0.3]) * B


def report(n, ok, label, detail):
    print(f"ACCEPTANCE {n:02d} {'PASS' if ok else 'FAIL'} - {label}: {detail}")
    assert ok, f"criterion {n}: {label}: {detail}"


def experiment(scheme, seed, attack=None, dynamic_b=True):
    cfg = ExperimentConfig(scheme=scheme, seed=seed)
    if attack is not None:
        cfg.attack = attack
    cfg.quant = QuantSpec(b_init=0.01, dynamic_b=dynamic_b)
    cfg.validate()
    return cfg


def test_acceptance_01_unbiasedness():
    rep = check_unbiasedness(THETA10, b=B, M=50, trials=100_000, seed=20)
    report(1, rep.passed, "one-bit aggregate is unbiased",
           f"worst per-coordinate |z| = {rep.measured:.3f} (limit 4.0, "
           f"d=10, M=50, trials=1e5)")


def test_acceptance_02_variance_formula():
    reps = [check_variance(THETA10, b=B, M=m, trials=100_000, seed=21 + m)
            for m in (10, 100)]
    detail = ", ".join(f"M={m}: rel err {r.measured:.4f}"
                       for m, r in zip((10, 100), reps))
    report(2, all(r.passed for r in reps),
           "estimation error matches sum (b^2 - theta^2)/M within 5%", detail)


def test_acceptance_03_error_decay():
    rep = check_error_decay(THETA10, b=B, M_list=(10, 20, 40, 80),
                            trials=20_000, seed=22)
    report(3, rep.passed, "MSE decays like 1/M",
           f"log-log slope = {rep.measured:.4f} (required in [-1.15, -0.85])")


def test_acceptance_04_byzantine_bound():
    kinds = list(UPDATE_KINDS) + ["worst_case_bits"]
    betas = (0.1, 0.2, 0.3, 0.4)
    theta = THETA10[:5]
    failures = []
    worst_margin = np.inf
    for i, kind in enumerate(kinds):
        for j, beta in enumerate(betas):
            rep = check_byzantine_bound(AttackSpec(kind=kind, beta=beta), theta,
                                        b=B, M=20, trials=10_000,
                                        seed=300 + 10 * i + j)
            worst_margin = min(worst_margin,
                               rep.expected + rep.tolerance - rep.measured)
            if not rep.passed:
                failures.append(rep.name)
    tight = check_worst_case_tightness(beta=0.25, M=20, b=B, seed=24)
    ok = not failures and tight.passed
    report(4, ok, "every attack stays under 2*beta*||b|| and the bound is near-tight",
           f"20 attack/beta pairs, smallest slack {worst_margin:.2e}; d=1 "
           f"worst-case deviation {tight.measured:.6f} >= {tight.expected:.6f}"
           + (f"; failures: {failures}" if failures else ""))


def test_acceptance_05_dp_calibration():
    calibrated = check_dp(epsilon=0.1, delta1=0.0002, trials=10_000, seed=25)
    necessity = check_dp_margin_necessity(epsilon=0.1, delta1=0.0002,
                                          trials=10_000, seed=26)
    ok = calibrated.passed and necessity.passed
    report(5, ok, "calibrated range is (0.1, 0)-DP and the margin is necessary",
           f"worst loss {calibrated.measured:.6f} <= 0.1 over >=1e4 adjacent "
           f"pairs; margin removed -> worst loss {necessity.measured}")


def test_acceptance_06_gradient_correctness():
    worst = 0.0
    for kind in ("logistic", "mlp"):
        data = synth_generate(3, 12, 5, 2.0, rng_from(60))
        learner = Learner(kind=kind, p=5, n_classes=3, hidden=6)
        rng = rng_from(61)
        w_center = rng.normal(size=learner.dim)
        for _ in range(10):
            w = rng.normal(0.0, 0.5, size=learner.dim)
            _, g = proximal_loss_grad(learner, w, w_center, 0.2, data)
            h = 1e-5
            fd = np.zeros_like(w)
            for j in range(w.size):
                wp, wm = w.copy(), w.copy()
                wp[j] += h
                wm[j] -= h
                lp, _ = proximal_loss_grad(learner, wp, w_center, 0.2, data)
                lm, _ = proximal_loss_grad(learner, wm, w_center, 0.2, data)
                fd[j] = (lp - lm) / (2 * h)
            rel = np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-8)
            worst = max(worst, rel)
    report(6, worst <= 1e-6, "local objective gradients match finite differences",
           f"worst relative error {worst:.2e} over 10 points x 2 learners")


def test_acceptance_07_clean_accuracy_gap():
    probit = run_training(experiment("probit_plus", seed=1)).final_test_acc
    fedavg = run_training(experiment("fedavg", seed=1)).final_test_acc
    gap = abs(probit - fedavg)
    report(7, gap <= 0.05, "one-bit training keeps pace with uncompressed FedAvg",
           f"clean accuracy probit={probit:.4f} fedavg={fedavg:.4f} "
           f"gap={100 * gap:.2f} points (limit 5)")


def test_acceptance_08_robustness_under_sign_flip():
    attack = AttackSpec(kind="sign_flip", beta=0.1)
    pairs = []
    for seed in (1, 2, 3, 4, 5):
        p = run_training(experiment("probit_plus", seed, attack)).final_test_acc
        f = run_training(experiment("fedavg", seed, attack)).final_test_acc
        pairs.append((seed, p, f))
    wins = sum(1 for _, p, f in pairs if p > f)
    detail = "; ".join(f"seed {s}: {p:.3f} vs {f:.3f}" for s, p, f in pairs)
    report(8, wins == 5,
           "one-bit aggregation beats FedAvg under 10% sign-flip on all seeds",
           f"{wins}/5 strict wins ({detail})")


def test_acceptance_09_dynamic_range_schedule():
    diffs = []
    for seed in (1, 2, 3):
        dyn = run_training(experiment("probit_plus", seed)).final_test_acc
        fix = run_training(experiment("probit_plus", seed,
                                      dynamic_b=False)).final_test_acc
        diffs.append((seed, dyn, fix))
    ok = all(dyn >= fix - 0.02 for _, dyn, fix in diffs)
    detail = "; ".join(f"seed {s}: dynamic {d:.3f} vs fixed {f:.3f}"
                       for s, d, f in diffs)
    report(9, ok, "dynamic range schedule does not lose to fixed b", detail)


def test_acceptance_10_cli_determinism(tmp_path):
    cfg = """\
[run]
scheme = probit_plus
seed = 7

[topology]
clients = 20

[schedule]
rounds = 10

[data]
per_class = 100
test_per_class = 50
"""
    path = tmp_path / "exp.ini"
    path.write_text(cfg)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    code_a = main(["run", "--config", str(path), "--out", str(out_a)])
    code_b = main(["run", "--config", str(path), "--out", str(out_b)])
    same = (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
    ok = code_a == 0 and code_b == 0 and same
    report(10, ok, "repeated runs emit byte-identical metrics",
           f"exit codes ({code_a}, {code_b}), CSV bytes equal: {same}")
