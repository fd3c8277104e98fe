"""Pixel losses, the composite objective, the poly schedule and momentum SGD."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from crosscbam.errors import ConfigurationError, DataError, InternalError
from crosscbam.models.training import LossConfig, OptimConfig
from crosscbam.nn.losses import composite_loss, cross_entropy, focal_loss
from crosscbam.nn.network import ModelOutput
from crosscbam.nn.optim import SGD, decays, poly_lr, sgd_step
from crosscbam.nn.reference import pixel_losses_ref
from crosscbam.nn.tensor import Precision, Tensor


def _logits(array):
    return Tensor(np.asarray(array, dtype=np.float64), requires_grad=True, dtype=Precision.DOUBLE)


def test_uniform_logits_give_closed_form_losses():
    logits = _logits(np.zeros((1, 4, 2, 2)))
    target = np.array([[[0, 1], [2, 3]]])
    assert cross_entropy(logits, target).item() == pytest.approx(math.log(4))
    assert focal_loss(logits, target, 2.0).item() == pytest.approx(0.75 ** 2 * math.log(4))


def test_losses_match_scalar_reference():
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((2, 5, 3, 4))
    target = rng.integers(0, 5, size=(2, 3, 4))
    target[0, 0, 0] = 255
    for gamma in (0.0, 0.5, 2.0, 5.0):
        got = focal_loss(_logits(raw), target, gamma).item()
        assert got == pytest.approx(pixel_losses_ref(raw, target, gamma), rel=1e-10)


def test_focal_with_zero_gamma_is_cross_entropy():
    rng = np.random.default_rng(1)
    logits = _logits(rng.standard_normal((1, 3, 4, 4)))
    target = rng.integers(0, 3, size=(1, 4, 4))
    assert focal_loss(logits, target, 0.0).item() == pytest.approx(cross_entropy(logits, target).item(), abs=1e-14)


def test_loss_is_scalar_shaped_and_finite_for_extreme_logits():
    logits = _logits(np.array([[[[1000.0]], [[-1000.0]]]]))
    loss = cross_entropy(logits, np.array([[[1]]]))
    assert loss.shape == (1, 1, 1, 1)
    assert loss.item() == pytest.approx(2000.0)
    loss.backward()
    assert np.isfinite(logits.grad).all()


def test_all_ignored_pixels_give_zero_loss_and_gradient():
    logits = _logits(np.random.default_rng(2).standard_normal((1, 3, 2, 2)))
    loss = focal_loss(logits, np.full((1, 2, 2), 255))
    assert loss.item() == 0.0
    loss.backward()
    assert_allclose(logits.grad, 0.0)


def test_ignored_pixels_do_not_contribute():
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((1, 3, 1, 2))
    kept = cross_entropy(_logits(raw[:, :, :, :1]), np.array([[[2]]])).item()
    assert cross_entropy(_logits(raw), np.array([[[2, 255]]])).item() == pytest.approx(kept)


def test_bad_targets():
    logits = _logits(np.zeros((1, 3, 2, 2)))
    with pytest.raises(DataError):
        cross_entropy(logits, np.array([[[0, 1], [3, 0]]]))
    with pytest.raises(DataError):
        cross_entropy(logits, np.zeros((1, 2, 2), dtype=np.float32))
    with pytest.raises(ConfigurationError):
        cross_entropy(logits, np.zeros((1, 3, 3), dtype=np.int64))
    with pytest.raises(ConfigurationError):
        focal_loss(logits, np.zeros((1, 2, 2), dtype=np.int64), gamma=-1.0)


def test_composite_loss_weights_and_aux_term():
    rng = np.random.default_rng(4)
    raw = rng.standard_normal((1, 4, 3, 3))
    target = rng.integers(0, 4, size=(1, 3, 3))
    ce = cross_entropy(_logits(raw), target).item()
    fl = focal_loss(_logits(raw), target, 2.0).item()
    main = composite_loss(_logits(raw), target, LossConfig(alpha=0.7)).item()
    assert main == pytest.approx(0.7 * ce + 0.3 * fl)
    assert composite_loss(_logits(raw), target, LossConfig(alpha=1.0)).item() == pytest.approx(ce, abs=1e-14)
    assert composite_loss(_logits(raw), target, LossConfig(alpha=0.0)).item() == pytest.approx(fl, abs=1e-14)

    output = ModelOutput(logits=_logits(raw), aux_logits=_logits(raw))
    assert composite_loss(output, target, LossConfig(alpha=0.7, aux_weight=0.4)).item() == pytest.approx(1.4 * main)
    output = ModelOutput(logits=_logits(raw), aux_logits=_logits(raw))
    assert composite_loss(output, target, LossConfig(alpha=0.7, aux_weight=0.0)).item() == pytest.approx(main)


@pytest.mark.parametrize("kwargs", [{"alpha": 1.5}, {"gamma": 6.0}, {"aux_weight": -0.1}])
def test_loss_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        LossConfig(**kwargs)


def test_poly_schedule():
    cfg = OptimConfig(base_lr=0.01, min_lr=1e-4, power=0.9, max_iter=100)
    assert poly_lr(0, cfg) == 0.01
    assert poly_lr(50, cfg) == pytest.approx(0.01 * 0.5 ** 0.9)
    assert poly_lr(99, cfg) == pytest.approx(0.01 * 0.01 ** 0.9)
    assert poly_lr(100, cfg) == 1e-4
    assert poly_lr(1000, cfg) == 1e-4
    rates = [poly_lr(i, cfg) for i in range(120)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


@pytest.mark.parametrize("kwargs", [{"min_lr": 0.1}, {"power": 0.0}, {"momentum": 1.0}, {"max_iter": 0}])
def test_optim_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        OptimConfig(**kwargs)


def test_decay_skips_biases_and_norm_affines():
    assert decays("backbone.convx1.conv.weight")
    assert not decays("head.classifier.bias")
    assert not decays("context.project.bn.gamma")
    assert not decays("context.project.bn.beta")


def test_single_sgd_step_is_exact():
    cfg = OptimConfig(momentum=0.9, weight_decay=0.1)
    weight = Tensor(np.array([1.0, -2.0]), dtype=Precision.DOUBLE)
    bias = Tensor(np.array([0.5]), dtype=Precision.DOUBLE)
    velocities = {}
    grads = [np.array([0.2, 0.2]), np.array([1.0])]
    sgd_step([("conv.weight", weight), ("conv.bias", bias)], grads, velocities, 0.5, cfg)
    assert_allclose(velocities["conv.weight"], [0.3, 0.0])
    assert_allclose(weight.data, [0.85, -2.0])
    assert_allclose(bias.data, [0.0])

    sgd_step([("conv.weight", weight), ("conv.bias", bias)], grads, velocities, 0.5, cfg)
    assert_allclose(velocities["conv.bias"], [1.9])
    assert_allclose(bias.data, [-0.95])


def test_sgd_step_shape_checks():
    p = Tensor(np.zeros(3), dtype=Precision.DOUBLE)
    with pytest.raises(InternalError):
        sgd_step([("w", p)], [], {}, 0.1, OptimConfig())
    with pytest.raises(InternalError):
        sgd_step([("w", p)], [np.zeros(2)], {}, 0.1, OptimConfig())


def test_momentum_sgd_converges_on_a_quadratic():
    cfg = OptimConfig(momentum=0.9, weight_decay=0.0)
    p = Tensor(np.array([1.0, -3.0, 2.0]), dtype=Precision.DOUBLE)
    velocities = {}
    for _ in range(300):
        sgd_step([("w", p)], [p.data.copy()], velocities, 0.1, cfg)
    assert np.abs(p.data).max() < 1e-4


def test_sgd_optimizer_advances_the_schedule():
    cfg = OptimConfig(base_lr=0.1, min_lr=0.0, max_iter=10)
    p = Tensor(np.ones(2), requires_grad=True, dtype=Precision.DOUBLE)
    opt = SGD([("w", p)], cfg)
    p.grad = np.ones(2)
    assert opt.step() == 0.1
    assert opt.iteration == 1
    assert opt.lr == pytest.approx(0.1 * 0.9 ** 0.9)


def main():
    print("Loss and optimizer tests")
    print("=" * 50)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn) and not hasattr(fn, "pytestmark"):
            print(f"  {name}")
            fn()
    print("\nAll loss and optimizer tests passed")


if __name__ == "__main__":
    main()
