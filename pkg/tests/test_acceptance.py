"""Acceptance gate: eight end-to-end criteria, each reporting one PASS/FAIL line.

Criteria 3, 4, 6 and 8 share one desk-scale KL sweep on the 2-D
Gaussian-vs-uniform pair (n in {1e3, 1e4, 1e5}, 10 replicas), computed once
per module.  Run just this gate with ``pytest tests/test_acceptance.py -v -s``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ONE_D_PAIRS
from neurfdiv.bounds import BoundInputs, estimation_constants, kappa_d
from neurfdiv.distributions import DistributionPair, ProductDistribution, Uniform1D, make_rng
from neurfdiv.divergences import DivergenceKind, exact_objective, ground_truth, witness_function
from neurfdiv.experiments import (
    SweepSummary,
    aggregate,
    config_from_dict,
    emit_csv,
    fit_rate,
    replica_seed,
    run_experiment,
)
from neurfdiv.network import NetParams, ParamBounds, Star, TruncatedStar, as_function, expand_bounds, raw_forward
from neurfdiv.training import TrainConfig, objective_grad, train

KINDS = list(DivergenceKind)

SWEEP = {
    "name": "gauss_box_2d_kl",
    "kind": "kl",
    "pair": "gauss_uniform_2d",
    "sweep": {"ns": [1_000, 10_000, 100_000]},
    "schedule_mode": "experiment",
    "replicas": 10,
    "master_seed": 0,
}


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


class SweepRun:
    def __init__(self, records, audits, seconds):
        self.records = records
        self.audits = audits
        self.seconds = seconds
        self.summaries = aggregate(records)


@pytest.fixture(scope="module")
def sweep():
    config = config_from_dict(SWEEP)
    audits = []
    t0 = time.perf_counter()
    records = run_experiment(config, workers=1, on_audit=lambda rec, audit: audits.append((rec, audit)))
    return SweepRun(records, audits, time.perf_counter() - t0)


def random_net(rng, kind, d):
    k = int(rng.integers(3, 11))
    bounds = expand_bounds(TruncatedStar() if kind is DivergenceKind.HELLINGER else Star(), k)
    lo, hi = bounds.box(k, d)
    return NetParams.from_flat(rng.uniform(lo, hi), k, d), bounds


# 1 -------------------------------------------------------------------------------


def test_c1_witness_duality_suite(report):
    t0 = time.perf_counter()
    worst_witness = 0.0
    worst_gap = -math.inf
    for i, kind in enumerate(KINDS):
        for j, make in enumerate(ONE_D_PAIRS.values()):
            pair = make()
            truth = ground_truth(kind, pair).value
            at_witness = exact_objective(kind, pair, witness_function(kind, pair))
            worst_witness = max(worst_witness, abs(at_witness - truth))
            rng = make_rng(2024, i, j)
            for _ in range(100):
                params, bounds = random_net(rng, kind, 1)
                gap = exact_objective(kind, pair, as_function(params, bounds)) - truth
                worst_gap = max(worst_gap, gap)
    seconds = time.perf_counter() - t0
    ok = worst_witness <= 1e-6 and worst_gap <= 1e-6 and seconds < 30
    report("C1", ok, f"max |obj(witness) - truth| = {worst_witness:.2e}, "
                     f"max obj(net) - truth = {worst_gap:.3e}, {seconds:.1f}s")


# 2 -------------------------------------------------------------------------------


def test_c2_gradient_finite_differences(report):
    t0 = time.perf_counter()
    worst = 0.0
    instances = {kind: 0 for kind in KINDS}
    truncated_active = 0
    rng = make_rng(77)
    h = 1e-5
    for kind in KINDS:
        while instances[kind] < 100:
            d = int(rng.integers(1, 3))
            params, bounds = random_net(rng, kind, d)
            bx = rng.uniform(-1.0, 2.0, size=(int(rng.integers(1, 20)), d))
            by = rng.uniform(-1.0, 2.0, size=(int(rng.integers(1, 20)), d))
            theta = params.flatten()
            if bounds.trunc is not None:
                # Keep every output (including under the perturbations) off the clipping kink.
                raw = raw_forward(params, np.vstack([bx, by]))
                margin = np.min(np.abs(raw - (1.0 - bounds.trunc)))
                if margin < 1e-3:
                    continue
                truncated_active += int(np.any(raw > 1.0 - bounds.trunc))
            _, grad = objective_grad(kind, params, bounds, bx, by)
            f = lambda th: objective_grad(kind, NetParams.from_flat(th, params.k, d), bounds, bx, by)[0]
            fd = np.empty_like(theta)
            for i in range(theta.size):
                step = np.zeros_like(theta)
                step[i] = h
                fd[i] = (f(theta + step) - f(theta - step)) / (2 * h)
            rel = np.linalg.norm(grad.flatten() - fd) / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, rel)
            instances[kind] += 1
    seconds = time.perf_counter() - t0
    ok = worst < 1e-5 and seconds < 10 and truncated_active > 0
    report("C2", ok, f"max relative error {worst:.2e} over {sum(instances.values())} instances "
                     f"({truncated_active} Hellinger instances with clipped outputs), {seconds:.1f}s")


# 3 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_c3_desk_scale_sweep(sweep, report):
    failed = [r for r in sweep.records if not r.ok]
    rows = sweep.summaries
    errors = [s.mean_abs_error for s in rows]
    decreasing = all(a > b for a, b in zip(errors, errors[1:]))
    last = rows[-1]
    rel = abs(last.mean_estimate - last.ground_truth) / last.ground_truth
    ok = (not failed and [s.n for s in rows] == [1000, 10000, 100000] and all(s.replicas == 10 for s in rows)
          and decreasing and rel <= 0.15 and sweep.seconds < 20 * 60)
    detail = ", ".join(f"n={s.n} k={s.k} err={s.mean_abs_error:.4g}" for s in rows)
    report("C3", ok, f"{detail}; relative error at n=1e5 {rel:.2%}; "
                     f"{len(failed)} failed records; {sweep.seconds:.0f}s")


# 4 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_c4_rate_fit(sweep, report):
    fit = fit_rate(sweep.summaries)
    ns = [10**3, 10**4, 10**5, 10**6]
    synthetic = [SweepSummary("synthetic", "kl", n, 1, 1, 0.0, 0.0, n**-0.5, 0.0) for n in ns]
    synth = fit_rate(synthetic)
    ok = fit.slope < 0 and abs(synth.slope + 0.5) <= 1e-9
    report("C4", ok, f"sweep slope {fit.slope:.3f} (r2 {fit.r_squared:.3f}); synthetic slope {synth.slope:.12f}")


# 5 -------------------------------------------------------------------------------


def test_c5_bounds_constants(report):
    t0 = time.perf_counter()
    checks = {}
    kl = estimation_constants(BoundInputs(DivergenceKind.KL, 1, ParamBounds(1.0, 1.0, 1.0), 2))
    checks["E(KL,k=1,a=1,n=2) = 4(e^2+1)"] = abs(kl.E - 4 * (math.e**2 + 1)) <= 1e-9
    rng = make_rng(5)
    halves, tails = True, True
    for _ in range(200):
        kind = KINDS[int(rng.integers(3))]
        k = int(rng.integers(1, 40))
        n = int(rng.integers(1, 10**6))
        C = float(rng.uniform(0.1, 5))
        bounds = ParamBounds(float(rng.uniform(0.1, 5)), float(rng.uniform(0.01, 1)), float(rng.uniform(0, 2)),
                             float(rng.uniform(0.05, 0.95)))
        base = estimation_constants(BoundInputs(kind, k, bounds, n, C))
        quad = estimation_constants(BoundInputs(kind, k, bounds, 4 * n, C))
        halves &= quad.E == base.E / 2
        deltas = np.sort(rng.uniform(0, 3, size=5))
        vals = [base.tail(x) for x in deltas]
        tails &= all(0 <= v <= 2 * C for v in vals)
        tails &= all(a >= b for a, b in zip(vals, vals[1:]))
        tails &= all(quad.tail(x) <= base.tail(x) for x in deltas)
    checks["E halves when n quadruples"] = halves
    checks["tail <= 2C, monotone in delta and n"] = tails
    checks["kappa_1 = sqrt(2 pi)"] = abs(kappa_d(1) - math.sqrt(2 * math.pi)) <= 1e-8
    checks["kappa_2 = sqrt(5 pi^2)"] = abs(kappa_d(2) - math.sqrt(5 * math.pi**2)) <= 1e-8
    seconds = time.perf_counter() - t0
    failed = [name for name, good in checks.items() if not good]
    report("C5", not failed and seconds < 5,
           f"{len(checks) - len(failed)}/{len(checks)} checks hold ({', '.join(failed) or 'all'}), {seconds:.2f}s")


# 6 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_c6_class_constraints_during_training(sweep, report):
    # The KL sweep has no truncation, so a Hellinger run of the same sweep
    # (fewer replicas) exercises the truncated-output half of the invariant.
    hel_config = config_from_dict({**SWEEP, "name": "gauss_box_2d_h2", "kind": "hellinger",
                                   "sweep": {"ns": [1_000, 10_000]}, "replicas": 3})
    hel_audits = []
    run_experiment(hel_config, on_audit=lambda rec, audit: hel_audits.append((rec, audit)))
    audits = [a for _, a in sweep.audits + hel_audits]
    missing = sum(a is None for a in audits)
    steps = sum(a.steps for a in audits if a is not None)
    box = sum(a.box_violations for a in audits if a is not None)
    trunc = sum(a.trunc_violations for a in audits if a is not None)
    cap_ok = all(a.max_truncated_output <= 1 - 1 / math.log(rec.k) for rec, a in hel_audits if a is not None)
    ok = missing == 0 and len(sweep.audits) == 30 and box == 0 and trunc == 0 and cap_ok and steps > 0
    report("C6", ok, f"{steps} audited optimizer steps over {len(audits)} runs; "
                     f"{box} box violations, {trunc} truncation violations")


# 7 -------------------------------------------------------------------------------


def test_c7_null_pair(report):
    t0 = time.perf_counter()
    u = ProductDistribution([Uniform1D(0.0, 1.0)])
    pair = DistributionPair(u, u)
    means = {}
    for kind in KINDS:
        estimates = [train(TrainConfig(kind, k=5, n=2000, seed=replica_seed(0, r)), pair).estimate for r in range(10)]
        means[kind.value] = float(np.mean(estimates))
    seconds = time.perf_counter() - t0
    ok = all(abs(m) <= 0.05 for m in means.values()) and seconds < 120
    report("C7", ok, ", ".join(f"{k}: {m:+.4f}" for k, m in means.items()) + f", {seconds:.1f}s")


# 8 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_c8_reproducible_across_workers(sweep, report, tmp_path):
    config = config_from_dict(SWEEP)
    again = run_experiment(config, workers=2)
    serial = emit_csv(sweep.records, tmp_path / "serial.csv", timing=False).read_bytes()
    parallel = emit_csv(again, tmp_path / "parallel.csv", timing=False).read_bytes()
    ok = serial == parallel and len(again) == 30
    report("C8", ok, f"serial vs 2-worker CSV: {'identical' if ok else 'DIFFERENT'} ({len(serial)} bytes)")
