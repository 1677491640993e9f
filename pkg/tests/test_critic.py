import numpy as np
import pytest
import torch
from torch import nn

from salcolor.critic import CriticConfig, PatchCritic, SpectralNormConv2d, spectral_normalize


def top_singular_value(weight: torch.Tensor) -> float:
    return float(np.linalg.svd(weight.detach().numpy(), compute_uv=False)[0])


def test_patch_map_shape():
    critic = PatchCritic(CriticConfig(base_channels=4))
    out = critic(torch.randn(2, 3, 256, 256))
    assert out.shape == (2, 1, 30, 30)
    # smaller inputs shrink the map but still work
    assert critic(torch.randn(1, 3, 64, 64)).shape == (1, 1, 6, 6)


def test_unbatched_input():
    critic = PatchCritic(CriticConfig(base_channels=4))
    assert critic(torch.randn(3, 64, 64)).shape == (1, 6, 6)


def test_input_validation():
    critic = PatchCritic(CriticConfig(base_channels=4))
    with pytest.raises(ValueError):
        critic(torch.randn(1, 1, 64, 64))
    with pytest.raises(ValueError):
        critic(torch.randn(1, 3, 16, 16))
    # 24 is the smallest size the stack reduces to a single score
    assert critic(torch.randn(1, 3, 24, 24)).shape == (1, 1, 1, 1)


def test_architecture_plan():
    critic = PatchCritic(CriticConfig(base_channels=8))
    convs = [m.conv for m in critic.modules() if isinstance(m, SpectralNormConv2d)]
    assert [c.stride[0] for c in convs] == [2, 2, 2, 1, 1]
    assert [c.out_channels for c in convs] == [8, 16, 32, 64, 1]
    assert all(c.kernel_size == (4, 4) for c in convs)
    assert all(c.padding == (1, 1) for c in convs)
    # critics carry no normalization layers of their own
    assert not any(isinstance(m, nn.BatchNorm2d) for m in critic.modules())


def test_spectral_norm_can_be_disabled():
    critic = PatchCritic(CriticConfig(base_channels=4, spectral_norm=False))
    assert not any(isinstance(m, SpectralNormConv2d) for m in critic.modules())
    assert sum(isinstance(m, nn.Conv2d) for m in critic.modules()) == 5


def test_config_validation():
    with pytest.raises(ValueError):
        CriticConfig(base_channels=2).validate()
    with pytest.raises(ValueError):
        CriticConfig(power_iterations=0).validate()


# ---------------------------------------------------------------------------
# spectral normalization


def test_spectral_normalize_zero_matrix_passes_through():
    w = torch.zeros(6, 4)
    out, _, _ = spectral_normalize(w)
    assert torch.equal(out, w)


def test_spectral_normalize_unit_top_singular_value():
    gen = torch.Generator().manual_seed(4)
    w = torch.randn(12, 20, generator=gen, dtype=torch.float64)
    normalized, _, _ = spectral_normalize(w, n_iterations=30)
    assert top_singular_value(normalized) == pytest.approx(1.0, abs=1e-6)


def test_spectral_normalize_deterministic_start():
    w = torch.randn(8, 8, generator=torch.Generator().manual_seed(2))
    a, ua, va = spectral_normalize(w, n_iterations=3)
    b, ub, vb = spectral_normalize(w, n_iterations=3)
    assert torch.equal(a, b) and torch.equal(ua, ub) and torch.equal(va, vb)


def test_spectral_normalize_warm_start_converges():
    gen = torch.Generator().manual_seed(9)
    w = torch.randn(10, 14, generator=gen, dtype=torch.float64)
    _, u, _ = spectral_normalize(w, n_iterations=1)
    for _ in range(200):
        _, u, _ = spectral_normalize(w, u=u, n_iterations=1)
    normalized, _, _ = spectral_normalize(w, u=u, n_iterations=1)
    assert top_singular_value(normalized) == pytest.approx(1.0, abs=1e-9)


def test_spectral_normalize_validation():
    with pytest.raises(ValueError):
        spectral_normalize(torch.zeros(3, 3, 3))
    with pytest.raises(ValueError):
        spectral_normalize(torch.zeros(3, 3), n_iterations=0)


def test_spectral_normalize_gradient_matches_finite_differences():
    # gradients flow through the division only; u and v act as constants
    torch.manual_seed(0)
    w = torch.randn(3, 3, dtype=torch.float64, requires_grad=True)
    out = spectral_normalize(w, n_iterations=50)[0].sum()
    out.backward()
    h = 1e-6
    for idx in [(0, 0), (1, 2), (2, 1)]:
        wp = w.detach().clone()
        wp[idx] += h
        wm = w.detach().clone()
        wm[idx] -= h
        fd = (spectral_normalize(wp, n_iterations=50)[0].sum()
              - spectral_normalize(wm, n_iterations=50)[0].sum()) / (2 * h)
        assert float(w.grad[idx]) == pytest.approx(float(fd), rel=1e-4)


def test_conv_power_iteration_updates_only_in_train_mode():
    conv = SpectralNormConv2d(3, 8, 4, stride=2, padding=1)
    x = torch.randn(1, 3, 16, 16)
    u0 = conv.u.clone()
    conv.eval()
    conv(x)
    assert torch.equal(conv.u, u0)
    conv.train()
    conv(x)
    assert not torch.equal(conv.u, u0)


def test_conv_effective_weight_is_normalized():
    torch.manual_seed(3)
    conv = SpectralNormConv2d(3, 8, 4, stride=1, padding=1)
    # large raw weights make the contrast with the normalized form obvious
    with torch.no_grad():
        conv.conv.weight.normal_(0.0, 0.5)
    x = torch.randn(1, 3, 16, 16)
    conv.train()
    for _ in range(30):
        conv(x)
    w_mat = conv.conv.weight.detach().view(8, -1)
    raw_sigma = top_singular_value(w_mat)
    est = float(torch.dot(conv.u, torch.mv(w_mat, conv.v)))
    assert raw_sigma > 2.0
    assert est == pytest.approx(raw_sigma, rel=1e-2)


def test_reset_power_iteration_is_seedable():
    conv_a = SpectralNormConv2d(3, 8, 4)
    conv_b = SpectralNormConv2d(3, 8, 4)
    conv_a.reset_power_iteration(torch.Generator().manual_seed(5))
    conv_b.reset_power_iteration(torch.Generator().manual_seed(5))
    assert torch.equal(conv_a.u, conv_b.u)
    assert torch.equal(conv_a.v, conv_b.v)
    conv_b.reset_power_iteration(torch.Generator().manual_seed(6))
    assert not torch.equal(conv_a.u, conv_b.u)


def test_repeated_forward_is_stable_in_eval():
    critic = PatchCritic(CriticConfig(base_channels=4))
    critic.eval()
    x = torch.randn(1, 3, 64, 64)
    first = critic(x)
    second = critic(x)
    assert torch.equal(first, second)
