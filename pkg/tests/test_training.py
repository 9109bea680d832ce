import math

import numpy as np
import pytest

from neurfdiv import _kernels
from neurfdiv.distributions import DistributionPair, ProductDistribution, Uniform1D, make_rng, preset_pair
from neurfdiv.divergences import DivergenceKind, empirical_objective, ground_truth
from neurfdiv.errors import ConfigError
from neurfdiv.network import NetParams, ParamBounds, Generic, Star, TruncatedStar, as_function, project
from neurfdiv.training import (
    AdamState,
    TrainConfig,
    adam_step,
    default_batch_size,
    draw_samples,
    lr_at,
    objective_grad,
    train,
)

KINDS = list(DivergenceKind)


def uniform_pair():
    u = ProductDistribution([Uniform1D(0.0, 1.0)])
    return DistributionPair(u, u)


def test_default_batch_size():
    assert default_batch_size(500) == 1
    assert default_batch_size(1000) == 1
    assert default_batch_size(2000) == 2
    assert default_batch_size(100_000) == 100


def test_lr_schedule():
    cfg = TrainConfig("kl", k=3, n=100)
    assert lr_at(cfg, 0) == 1e-2
    assert lr_at(cfg, 99) == 1e-2
    assert lr_at(cfg, 100) == 1e-3
    assert lr_at(cfg, 199) == 1e-3
    with pytest.raises(ValueError):
        lr_at(cfg, 200)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig("kl", k=3, n=100, epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig("kl", k=3, n=100, batch_size=101)
    with pytest.raises(ConfigError):
        TrainConfig("kl", k=0, n=100)
    # Hellinger without a truncation level is rejected before training.
    cfg = TrainConfig("hellinger", k=4, n=100, class_spec=Star())
    with pytest.raises(ConfigError):
        cfg.bounds
    with pytest.raises(ConfigError):
        train(cfg, uniform_pair())


def test_hellinger_defaults_to_truncated_class():
    assert isinstance(TrainConfig("h2", k=4, n=100).class_spec, TruncatedStar)


@pytest.mark.parametrize("kind", KINDS)
def test_objective_grad_finite_difference(kind):
    rng = make_rng(2)
    k, d = 4, 2
    bd = ParamBounds(2.0, 0.2, 0.2, 0.3 if kind is DivergenceKind.HELLINGER else None)
    lo, hi = bd.box(k, d)
    params = NetParams.from_flat(rng.uniform(lo, hi), k, d)
    bx, by = rng.normal(size=(7, d)), rng.normal(size=(9, d))
    value, grad = objective_grad(kind, params, bd, bx, by)
    assert value == pytest.approx(empirical_objective(kind, as_function(params, bd), bx, by), abs=1e-15)
    theta = params.flatten()
    f = lambda th: objective_grad(kind, NetParams.from_flat(th, k, d), bd, bx, by)[0]
    fd = np.array([(f(theta + e * 1e-5) - f(theta - e * 1e-5)) / 2e-5 for e in np.eye(len(theta))])
    np.testing.assert_allclose(grad.flatten(), fd, rtol=1e-6, atol=1e-10)


def test_adam_first_step_is_sign_times_lr():
    params = NetParams.zeros(1, 1)
    grad = NetParams(np.array([[2.0]]), np.array([-3.0]), np.array([0.0]), 1e-3)
    state, new = adam_step(AdamState.zeros(params.size), params, grad, lr=0.01)
    assert state.step == 1
    # mhat = g and sqrt(vhat) = |g| after one step, so the move is lr * g / (|g| + eps).
    g = np.array([2.0, -3.0, 0.0, 1e-3])
    np.testing.assert_allclose(new.flatten(), 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_kernel_epoch_matches_numpy_reference(kind):
    """The compiled epoch loop reproduces objective_grad + adam_step + project."""
    pair = preset_pair("gauss_uniform_2d")
    spec = TruncatedStar() if kind is DivergenceKind.HELLINGER else Star()
    cfg = TrainConfig(kind, k=5, n=60, class_spec=spec, batch_size=7, epochs=1, seed=3)
    bd = cfg.bounds
    X, Y = draw_samples(cfg, pair)
    rng = make_rng(8)
    lo, hi = bd.box(5, 2)
    params = NetParams.from_flat(rng.uniform(lo, hi) * 0.5, 5, 2)
    perm_x, perm_y = rng.permutation(60), rng.permutation(60)

    theta = params.flatten().copy()
    m, v = np.zeros_like(theta), np.zeros_like(theta)
    audit = np.array([0.0, 0.0, -np.inf])
    step, status = _kernels.run_epoch(theta, m, v, 0, X, Y, perm_x, perm_y, 7, 0.05,
                                      _kernels.KIND_CODES[kind.value], 5, 2, lo, hi,
                                      bd.trunc is not None, bd.trunc or 0.0, audit)
    assert status == _kernels.OK and step == 9

    state, ref = AdamState.zeros(params.size), params
    for start in range(0, 60, 7):
        bx, by = X[perm_x[start:start + 7]], Y[perm_y[start:start + 7]]
        _, g = objective_grad(kind, ref, bd, bx, by)
        state, ref = adam_step(state, ref, g, 0.05)
        ref = project(ref, bd)
    np.testing.assert_allclose(theta, ref.flatten(), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(m, state.m, rtol=1e-10, atol=1e-14)
    assert audit[0] == 0 and audit[1] == 0


def test_kernel_full_objective_matches_numpy():
    pair = preset_pair("gauss_uniform_2d")
    cfg = TrainConfig("hellinger", k=6, n=200, seed=1)
    bd = cfg.bounds
    X, Y = draw_samples(cfg, pair)
    lo, hi = bd.box(6, 2)
    theta = make_rng(4).uniform(lo, hi)
    got = _kernels.full_objective(theta, X, Y, 2, 6, 2, True, bd.trunc)
    ref = empirical_objective(DivergenceKind.HELLINGER, as_function(NetParams.from_flat(theta, 6, 2), bd), X, Y)
    assert got == pytest.approx(ref, rel=1e-12)


def test_train_deterministic():
    pair = preset_pair("gauss_uniform_2d")
    cfg = TrainConfig("kl", k=3, n=500, epochs=5, seed=11)
    a, b = train(cfg, pair), train(cfg, pair)
    assert a.estimate == b.estimate
    assert a.params == b.params
    assert np.array_equal(a.trajectory, b.trajectory)
    c = train(TrainConfig("kl", k=3, n=500, epochs=5, seed=12), pair)
    assert c.estimate != a.estimate


def test_train_hook_and_audit():
    pair = preset_pair("gauss_uniform_2d")
    cfg = TrainConfig("hellinger", k=4, n=3000, epochs=4, seed=2)
    seen = []
    res = train(cfg, pair, on_epoch=lambda e, p, a: seen.append((e, a.steps)))
    assert [e for e, _ in seen] == [0, 1, 2, 3]
    assert seen[-1][1] == 4 * 1000
    assert res.audit.steps == 4000
    assert res.audit.box_violations == 0 and res.audit.trunc_violations == 0
    assert res.audit.max_truncated_output <= 1 - res.bounds.trunc
    assert len(res.trajectory) == 4
    assert res.trajectory[-1] == pytest.approx(res.estimate, rel=1e-10)


def test_estimate_is_near_lower_bound():
    pair = preset_pair("gauss_uniform_2d")
    truth = ground_truth(DivergenceKind.KL, pair).value
    res = train(TrainConfig("kl", k=4, n=4000, epochs=40, seed=0), pair)
    # Sample estimate of a lower bound: cannot exceed the truth by much at n=4000.
    assert res.estimate <= truth + 0.05
    assert res.estimate > 0.5 * truth


@pytest.mark.parametrize("kind", KINDS)
def test_null_pair_small(kind):
    res = train(TrainConfig(kind, k=5, n=2000, seed=0), uniform_pair())
    assert abs(res.estimate) < 0.05


def test_generic_class_training_stays_in_box():
    bd = ParamBounds(0.5, 0.05, 0.05)
    res = train(TrainConfig("chisq", k=3, n=1000, epochs=3, class_spec=Generic(bd)), preset_pair("gauss_uniform_2d"))
    lo, hi = bd.box(3, 2)
    theta = res.params.flatten()
    assert np.all((theta >= lo) & (theta <= hi))
    assert math.isfinite(res.estimate)
