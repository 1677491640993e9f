import math

import pytest
import torch
from torch import nn

from salcolor.features import FeatureExtractor, PerceptualConfig
from salcolor.losses import (
    LossBreakdown,
    LossWeights,
    attention_loss,
    critic_loss,
    generator_adv_loss,
    gradient_penalty,
    perceptual_loss,
    pixel_loss,
    scalar,
    total_generator_loss,
)


class SumCritic(nn.Module):
    """D(x) = gain * sum(x); its input gradient is constant everywhere."""

    def __init__(self, gain: float = 1.0):
        super().__init__()
        self.gain = gain

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.gain * x.sum(dim=tuple(range(1, x.dim())), keepdim=False).reshape(
            x.shape[0], 1, 1, 1
        )


def test_pixel_loss_values():
    pred = torch.zeros(1, 3, 2, 2)
    target = torch.full((1, 3, 2, 2), 0.5)
    assert pixel_loss(pred, target).item() == pytest.approx(0.5)
    assert pixel_loss(pred, target, "l2").item() == pytest.approx(0.25)


def test_pixel_loss_validation():
    with pytest.raises(ValueError):
        pixel_loss(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 4, 4))
    with pytest.raises(ValueError):
        pixel_loss(torch.zeros(1), torch.zeros(1), mode="huber")


def test_attention_loss_value():
    pred = torch.ones(1, 3, 4, 4)
    gt = torch.zeros(1, 3, 4, 4)
    sal = torch.full((1, 1, 4, 4), 0.5)
    # |0.5 * 1 - 0.5 * 0| everywhere
    assert attention_loss(pred, sal, gt, sal).item() == pytest.approx(0.5)


def test_attention_never_exceeds_pixel_with_shared_saliency():
    gen = torch.Generator().manual_seed(0)
    for _ in range(50):
        pred = torch.rand(2, 3, 6, 6, generator=gen) * 2 - 1
        gt = torch.rand(2, 3, 6, 6, generator=gen) * 2 - 1
        sal = torch.rand(2, 1, 6, 6, generator=gen)
        assert attention_loss(pred, sal, gt, sal) <= pixel_loss(pred, gt) + 1e-7


def test_generator_adv_loss_wgan():
    color = torch.tensor([[1.0, 3.0]])
    weighted = torch.tensor([[2.0]])
    assert generator_adv_loss(color).item() == pytest.approx(-2.0)
    assert generator_adv_loss(color, weighted).item() == pytest.approx(-4.0)


def test_generator_adv_loss_lsgan():
    color = torch.tensor([[0.0, 2.0]])
    # 0.5 * mean((s - 1)^2) = 0.5 * 1.0
    assert generator_adv_loss(color, mode="lsgan").item() == pytest.approx(0.5)
    weighted = torch.tensor([[3.0]])
    assert generator_adv_loss(color, weighted, mode="lsgan").item() == pytest.approx(2.5)


def test_adv_mode_validation():
    with pytest.raises(ValueError):
        generator_adv_loss(torch.zeros(1), mode="hinge")
    with pytest.raises(ValueError):
        critic_loss(torch.zeros(1), torch.zeros(1), mode="hinge")


def test_critic_loss_wgan_adds_penalties():
    real = torch.tensor([2.0, 4.0])
    fake = torch.tensor([1.0, 1.0])
    base = critic_loss(real, fake)
    assert base.item() == pytest.approx(1.0 - 3.0)
    with_gp = critic_loss(real, fake, gp_color=torch.tensor(0.7), gp_weighted=0.3)
    assert with_gp.item() == pytest.approx(-2.0 + 1.0)


def test_critic_loss_lsgan_ignores_penalties():
    real = torch.tensor([1.0])
    fake = torch.tensor([0.0])
    out = critic_loss(real, fake, gp_color=torch.tensor(100.0), mode="lsgan")
    assert out.item() == pytest.approx(0.0)


def test_critic_loss_weighted_pair_validation():
    with pytest.raises(ValueError):
        critic_loss(torch.zeros(1), torch.zeros(1), weighted_real=torch.zeros(1))


def test_gradient_penalty_zero_lambda_short_circuits():
    out = gradient_penalty(None, torch.zeros(2, 3, 4, 4), torch.ones(2, 3, 4, 4), gp_lambda=0.0)
    assert out.item() == 0.0
    assert not out.requires_grad


def test_gradient_penalty_known_value():
    critic = SumCritic()
    real = torch.zeros(4, 3, 5, 5, dtype=torch.float64)
    fake = torch.ones(4, 3, 5, 5, dtype=torch.float64)
    n = 3 * 5 * 5
    expected = 10.0 * (math.sqrt(n) - 1.0) ** 2
    out = gradient_penalty(critic, real, fake, rng=0)
    assert out.item() == pytest.approx(expected, rel=1e-9)


def test_gradient_penalty_deterministic_per_seed():
    critic = SumCritic(gain=0.3)
    real = torch.randn(3, 3, 6, 6, generator=torch.Generator().manual_seed(1))
    fake = torch.randn(3, 3, 6, 6, generator=torch.Generator().manual_seed(2))
    a = gradient_penalty(critic, real, fake, rng=7)
    b = gradient_penalty(critic, real, fake, rng=7)
    assert torch.equal(a, b)


def test_gradient_penalty_validation():
    with pytest.raises(ValueError):
        gradient_penalty(None, torch.zeros(1, 2), torch.zeros(1, 3))
    with pytest.raises(ValueError):
        gradient_penalty(None, torch.zeros(1, 2), torch.zeros(1, 2), gp_lambda=-1.0)


def test_gradient_penalty_backpropagates_to_critic():
    critic = nn.Sequential(nn.Conv2d(3, 1, 3, padding=1))
    real = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(3))
    fake = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(4))
    gp = gradient_penalty(critic, real, fake, rng=5)
    gp.backward()
    assert critic[0].weight.grad is not None
    assert torch.isfinite(critic[0].weight.grad).all()


def test_perceptual_loss_zero_on_identical_inputs():
    fx = FeatureExtractor(PerceptualConfig(base_channels=4, seed=2))
    x = torch.randn(1, 3, 32, 32)
    assert perceptual_loss(fx, x, x.clone()).item() == 0.0


def test_perceptual_loss_gradient_reaches_prediction_only():
    fx = FeatureExtractor(PerceptualConfig(base_channels=4, seed=2))
    pred = torch.randn(1, 3, 32, 32, requires_grad=True)
    target = torch.randn(1, 3, 32, 32, requires_grad=True)
    loss = perceptual_loss(fx, pred, target)
    loss.backward()
    assert pred.grad is not None
    assert target.grad is None  # target features are computed without grad


def test_perceptual_loss_validation():
    fx = FeatureExtractor(PerceptualConfig(base_channels=4, seed=2))
    with pytest.raises(ValueError):
        perceptual_loss(fx, torch.zeros(1, 3, 32, 32), torch.zeros(1, 3, 16, 16))


def test_loss_weights_reject_negative():
    with pytest.raises(ValueError):
        LossWeights(lambda_a=-0.1)
    with pytest.raises(ValueError):
        LossWeights(gp_lambda=-1.0)


def test_total_generator_loss_stage1_zeroes_adv_and_perceptual():
    bd = total_generator_loss(0.4, 9.0, 0.2, 9.0, LossWeights(), stage=1)
    assert bd.adv_g == 0.0
    assert bd.perceptual == 0.0
    assert bd.total == pytest.approx(0.4 + 0.5 * 0.2)


def test_total_generator_loss_stage2_weighting():
    bd = total_generator_loss(1.0, 2.0, 3.0, 4.0, LossWeights(), stage=2)
    assert bd.total == pytest.approx(1.0 + 0.05 * 2.0 + 0.5 * 3.0 + 5.0 * 4.0)


def test_total_generator_loss_stage_validation():
    with pytest.raises(ValueError):
        total_generator_loss(1.0, 0.0, 0.0, 0.0, LossWeights(), stage=3)


def test_breakdown_as_floats_handles_tensors():
    bd = LossBreakdown(
        l1=torch.tensor(0.5, requires_grad=True),
        attention=0.25,
        adv_g=torch.tensor(-1.0),
        perceptual=0.0,
        total=torch.tensor(2.0, requires_grad=True),
    )
    flat = bd.as_floats()
    assert flat.l1 == 0.5 and flat.adv_g == -1.0 and flat.total == 2.0
    assert isinstance(flat.l1, float)


def test_scalar_helper():
    assert scalar(1.5) == 1.5
    assert scalar(torch.tensor(2.0, requires_grad=True)) == 2.0
