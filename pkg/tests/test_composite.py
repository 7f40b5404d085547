"""Composite two-fidelity network: structure, losses, gradients, training."""

import numpy as np
import pytest

from vibefuse import nn
from vibefuse.composite_net import (
    LOSS_SEPARABLE,
    LOSS_SQUARED_NORM_SUM,
    CompositeNetConfig,
    FusedTrainingSet,
    Standardizer,
    TrainingPlan,
    build_composite,
    composite_forward,
    fill_pseudo_high_fidelity,
    load_composite,
    predict_both,
    predict_high_fidelity,
    save_composite,
    train_composite,
    training_loss,
)

TOY = CompositeNetConfig(
    n_inputs=2,
    n_outputs=1,
    stage1_hidden=(3,),
    linear_hidden=(2,),
    nonlinear_hidden=(2,),
    alpha=0.6,
)


def zeroed(config, seed=0):
    net = build_composite(config, seed)
    for p in net.parameters():
        p[...] = 0.0
    return net


def plain_fused(x, y_low, y_high, beta_low=1.0, beta_high=1.0):
    r = x.shape[0]
    return FusedTrainingSet(
        x=np.asarray(x, dtype=float),
        y_low=np.asarray(y_low, dtype=float),
        y_high=np.asarray(y_high, dtype=float),
        is_real=np.ones(r, dtype=bool),
        beta_low=np.full(r, beta_low),
        beta_high=np.full(r, beta_high),
    )


def test_parameter_count_small_by_hand():
    net = build_composite(TOY, seed=0)
    # stage 1: 2->3->1 is (3*2+3) + (1*3+1) = 17... counted per stack below
    stage1 = (3 * 2 + 3) + (1 * 3 + 1)
    passage = (2 * 3 + 2) + (1 * 2 + 1)
    assert net.parameter_count() == stage1 + 2 * passage


def test_parameter_count_default_architecture():
    net = build_composite(CompositeNetConfig(), seed=0)
    stage1 = (512 * 12 + 512) + (512 * 512 + 512) * 2 + (10 * 512 + 10)
    linear = (256 * 22 + 256) + (256 * 256 + 256) + (10 * 256 + 10)
    nonlinear = (256 * 22 + 256) + (256 * 256 + 256) * 2 + (10 * 256 + 10)
    assert stage1 == 537098 and linear == 74250 and nonlinear == 140042
    assert net.parameter_count() == 751390


def test_merge_is_convex_combination():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 2))
    for alpha in (0.0, 0.3, 1.0):
        cfg = CompositeNetConfig(
            n_inputs=2, n_outputs=1, stage1_hidden=(3,),
            linear_hidden=(2,), nonlinear_hidden=(2,), alpha=alpha,
        )
        net = build_composite(cfg, seed=4)
        y1, y2 = composite_forward(net, x)
        c = np.hstack([x, y1])
        v_lin = nn.forward(net.linear, c)
        v_non = nn.forward(net.nonlinear, c)
        np.testing.assert_allclose(y2, alpha * v_lin + (1 - alpha) * v_non, atol=1e-15)


def test_linear_passage_has_no_relu():
    net = build_composite(TOY, seed=1)
    assert all(l.activation == nn.ACT_LINEAR for l in net.linear)
    assert [l.activation for l in net.nonlinear] == [
        nn.ACT_RELU, nn.ACT_LINEAR,
    ]


def test_loss_values_by_hand():
    """Zero network against fixed targets gives closed-form loss values."""
    net = zeroed(TOY)
    x = np.zeros((1, 2))
    fused = plain_fused(x, [[2.0]], [[1.0]], beta_low=0.5, beta_high=2.0)
    plan = TrainingPlan(gamma=0.8, loss_form=LOSS_SEPARABLE)
    loss, _ = training_loss(net, fused, [0], plan, with_grads=False)
    # 0.8 * 0.5 * 2^2 + 0.2 * 2.0 * 1^2
    assert loss == pytest.approx(2.0, abs=1e-14)

    plan = TrainingPlan(gamma=0.8, loss_form=LOSS_SQUARED_NORM_SUM)
    loss, _ = training_loss(net, fused, [0], plan, with_grads=False)
    # (0.8 * 0.5 * 2 + 0.2 * 2.0 * 1)^2
    assert loss == pytest.approx(1.44, abs=1e-14)


def test_norm_sum_gradient_zero_error_branch():
    """A zero stage-2 error sends no gradient into either passage."""
    net = zeroed(TOY)
    x = np.zeros((1, 2))
    fused = plain_fused(x, [[1.0]], [[0.0]])
    plan = TrainingPlan(loss_form=LOSS_SQUARED_NORM_SUM)
    _, grads = training_loss(net, fused, [0], plan)
    n1 = len(net.stage1) * 2
    assert any(np.any(g != 0.0) for g in grads[:n1])
    assert all(np.all(g == 0.0) for g in grads[n1:])


@pytest.mark.parametrize("loss_form", [LOSS_SEPARABLE, LOSS_SQUARED_NORM_SUM])
def test_training_gradients_match_finite_differences(loss_form):
    rng = np.random.default_rng(6)
    cfg = CompositeNetConfig(
        n_inputs=2, n_outputs=2, stage1_hidden=(3,),
        linear_hidden=(3,), nonlinear_hidden=(3,), alpha=0.4,
    )
    net = build_composite(cfg, seed=9)
    x = rng.standard_normal((4, 2))
    y_low = rng.standard_normal((4, 2))
    fused = fill_pseudo_high_fidelity(
        x, y_low, y_low[:2] + 0.3, [0, 1],
        TrainingPlan(),
    )
    plan = TrainingPlan(alpha=0.4, loss_form=loss_form)
    rows = np.arange(4)

    loss, grads = training_loss(net, fused, rows, plan)
    params = net.parameters()
    assert len(grads) == len(params)
    h = 1e-6
    for p, g in zip(params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = p[idx]
            p[idx] = keep + h
            lp = training_loss(net, fused, rows, plan, with_grads=False)[0]
            p[idx] = keep - h
            lm = training_loss(net, fused, rows, plan, with_grads=False)[0]
            p[idx] = keep
            fd = (lp - lm) / (2.0 * h)
            assert abs(fd - g[idx]) < 2e-5 * max(1.0, abs(fd))


def test_fill_pseudo_high_fidelity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 3))
    y_low = rng.standard_normal((6, 2))
    y_high = rng.standard_normal((2, 2))
    plan = TrainingPlan(beta_low=0.5, beta_high_real=2.0, beta_high_pseudo=1e-5)
    fused = fill_pseudo_high_fidelity(x, y_low, y_high, [1, 4], plan)
    assert fused.n_rows == 6
    np.testing.assert_array_equal(fused.is_real, [False, True, False, False, True, False])
    np.testing.assert_array_equal(fused.y_high[[1, 4]], y_high)
    np.testing.assert_array_equal(fused.y_high[[0, 2, 3, 5]], y_low[[0, 2, 3, 5]])
    np.testing.assert_array_equal(fused.beta_low, np.full(6, 0.5))
    np.testing.assert_array_equal(
        fused.beta_high, [1e-5, 2.0, 1e-5, 1e-5, 2.0, 1e-5]
    )


def test_fill_pseudo_validation():
    plan = TrainingPlan()
    x = np.zeros((4, 2))
    y = np.ones((4, 2))
    with pytest.raises(ValueError, match="duplicates"):
        fill_pseudo_high_fidelity(x, y, np.ones((2, 2)), [1, 1], plan)
    with pytest.raises(ValueError, match="range"):
        fill_pseudo_high_fidelity(x, y, np.ones((1, 2)), [4], plan)
    with pytest.raises(ValueError, match="shape"):
        fill_pseudo_high_fidelity(x, y, np.ones((1, 3)), [0], plan)
    with pytest.raises(ValueError, match="row counts"):
        fill_pseudo_high_fidelity(x, np.ones((3, 2)), np.ones((1, 2)), [0], plan)


def test_plan_and_config_validation():
    with pytest.raises(ValueError, match="alpha"):
        TrainingPlan(alpha=1.5).validate()
    with pytest.raises(ValueError, match="gamma"):
        TrainingPlan(gamma=1.0).validate()
    with pytest.raises(ValueError, match="beta_high_pseudo"):
        TrainingPlan(beta_high_pseudo=0.0).validate()
    with pytest.raises(ValueError, match="loss_form"):
        TrainingPlan(loss_form="absolute").validate()
    with pytest.raises(ValueError, match="positive integers"):
        CompositeNetConfig(stage1_hidden=()).validate()
    with pytest.raises(ValueError, match="alpha"):
        CompositeNetConfig(alpha=-0.1).validate()


def test_standardizer_round_trip():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 3)) * 5 + 2
    y = rng.standard_normal((30, 2)) * 1e-7
    s = Standardizer.fit(x, y)
    xs = s.scale_x(x)
    np.testing.assert_allclose(xs.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(xs.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(s.unscale_y(s.scale_y(y)), y, atol=1e-20)
    # constant columns are guarded, not divided to nan
    s2 = Standardizer.fit(np.ones((5, 1)), np.ones((5, 1)))
    assert np.all(np.isfinite(s2.scale_x(np.ones((5, 1)))))


def test_training_learns_linear_fusion():
    """Linear LF map plus linear correction is recovered to a few percent.

    Stage 1 sees 60 dense low-fidelity rows while only 20 rows carry the
    high-fidelity response, so beating the low-fidelity baseline requires
    the second stage to pick up the correction from sparse data.
    """
    rng = np.random.default_rng(5)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal(2)
    lf = lambda x: x @ a.T + b
    hf = lambda x: 1.5 * lf(x) + 0.5

    x = rng.uniform(-1, 1, size=(60, 3))
    real = np.arange(0, 60, 3)
    cfg = CompositeNetConfig(
        n_inputs=3, n_outputs=2, stage1_hidden=(16, 16),
        linear_hidden=(8,), nonlinear_hidden=(8, 8),
        alpha=0.6, standardize=True,
    )
    plan = TrainingPlan(
        alpha=0.6, gamma=0.8, epochs=300, batch_size=8,
        learning_rate=0.01, seed=1,
    )
    net = build_composite(cfg, seed=2)
    fused = fill_pseudo_high_fidelity(x, lf(x), hf(x[real]), real, plan)
    history = train_composite(net, fused, plan)
    assert history[-1] < history[0] * 0.01

    xt = rng.uniform(-1, 1, size=(40, 3))
    truth = hf(xt)
    pred = predict_high_fidelity(net, xt)
    rel = np.linalg.norm(pred - truth, axis=1) / np.linalg.norm(truth, axis=1)
    lf_rel = np.linalg.norm(lf(xt) - truth, axis=1) / np.linalg.norm(truth, axis=1)
    assert rel.mean() < 0.05
    assert rel.mean() < 0.2 * lf_rel.mean()

    y1, _ = predict_both(net, xt)
    rel1 = np.linalg.norm(y1 - lf(xt), axis=1) / np.linalg.norm(lf(xt), axis=1)
    assert rel1.mean() < 0.05


def test_training_is_deterministic():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((12, 2))
    y_low = rng.standard_normal((12, 1))
    plan = TrainingPlan(epochs=3, batch_size=4, seed=3)
    fused = fill_pseudo_high_fidelity(x, y_low, y_low[:4] * 1.1, np.arange(4), plan)
    outs = []
    for _ in range(2):
        net = build_composite(TOY, seed=5)
        train_composite(net, fused, plan)
        outs.append(predict_high_fidelity(net, x))
    np.testing.assert_array_equal(outs[0], outs[1])


def test_train_applies_plan_alpha_and_scaler():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 2))
    y = rng.standard_normal((8, 1))
    cfg = CompositeNetConfig(
        n_inputs=2, n_outputs=1, stage1_hidden=(3,),
        linear_hidden=(2,), nonlinear_hidden=(2,),
        alpha=0.6, standardize=True,
    )
    net = build_composite(cfg, seed=0)
    assert net.scaler is None
    plan = TrainingPlan(alpha=0.25, epochs=1, batch_size=4)
    fused = fill_pseudo_high_fidelity(x, y, y[:2], [0, 1], plan)
    train_composite(net, fused, plan)
    assert net.alpha == 0.25
    np.testing.assert_allclose(net.scaler.x_mean, x.mean(axis=0))
    np.testing.assert_allclose(net.scaler.y_mean, y.mean(axis=0))


def test_save_load_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(21)
    cfg = CompositeNetConfig(
        n_inputs=2, n_outputs=1, stage1_hidden=(3,),
        linear_hidden=(2,), nonlinear_hidden=(2,),
        alpha=0.35, standardize=True,
    )
    net = build_composite(cfg, seed=13)
    net.scaler = Standardizer.fit(
        rng.standard_normal((9, 2)), np.abs(rng.standard_normal((9, 1))) * 1e-7
    )
    path = tmp_path / "net.npz"
    save_composite(net, path)
    back = load_composite(path)
    assert back.alpha == net.alpha
    assert back.config == cfg
    for name in ("x_mean", "x_std", "y_mean", "y_std"):
        np.testing.assert_array_equal(getattr(back.scaler, name), getattr(net.scaler, name))
    x = rng.standard_normal((6, 2))
    np.testing.assert_array_equal(
        predict_high_fidelity(net, x), predict_high_fidelity(back, x)
    )
