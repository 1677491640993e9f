"""Patch critics with spectral weight normalization.

Both critics (one scoring color images, one scoring saliency-weighted
images) share the same topology: C64-C128-C256 with stride 2, then C512 and a
1-channel conv at stride 1, all 4x4 kernels with LeakyReLU(0.2) between them
and no normalization layers inside the network itself. Each output unit sees
a 70x70 input patch; a 256x256 input yields a 30x30 score map.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

SN_EPS = 1e-12


@dataclass
class CriticConfig:
    in_channels: int = 3
    base_channels: int = 64
    spectral_norm: bool = True
    power_iterations: int = 1
    leaky_slope: float = 0.2

    def validate(self) -> None:
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")


def spectral_normalize(
    weight: torch.Tensor,
    u: torch.Tensor | None = None,
    n_iterations: int = 1,
    eps: float = SN_EPS,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Divide a 2-D weight matrix by its top singular value estimate.

    Runs ``n_iterations`` of power iteration from ``u`` (a deterministic
    all-ones start when omitted) and returns ``(weight / sigma, u, v)``.
    The sigma estimate is floored at ``eps``, so a zero matrix passes
    through unchanged. Gradients flow through the division only; the
    iteration itself is detached.
    """
    if weight.dim() != 2:
        raise ValueError(f"expected a 2-D weight matrix, got {weight.dim()}-D")
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    out_dim, in_dim = weight.shape
    if u is None:
        u = torch.full((out_dim,), 1.0, dtype=weight.dtype, device=weight.device)
        u = u / u.norm()
    with torch.no_grad():
        w = weight.detach()
        v = torch.zeros(in_dim, dtype=weight.dtype, device=weight.device)
        for _ in range(n_iterations):
            v = F.normalize(torch.mv(w.t(), u), dim=0, eps=eps)
            u = F.normalize(torch.mv(w, v), dim=0, eps=eps)
    sigma = torch.dot(u, torch.mv(weight, v))
    return weight / sigma.clamp_min(eps), u, v


class SpectralNormConv2d(nn.Module):
    """Conv2d whose weight is spectrally normalized on every forward.

    The left/right singular vector estimates live in persistent buffers and
    are advanced by ``power_iterations`` steps per forward while in training
    mode; eval mode reuses the stored estimates.
    """

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        power_iterations: int = 1,
        eps: float = SN_EPS,
    ):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride, padding)
        self.power_iterations = power_iterations
        self.eps = eps
        flat = in_ch * kernel * kernel
        self.register_buffer("u", F.normalize(torch.ones(out_ch), dim=0))
        self.register_buffer("v", F.normalize(torch.ones(flat), dim=0))

    def reset_power_iteration(self, generator: torch.Generator | None = None) -> None:
        with torch.no_grad():
            self.u.copy_(F.normalize(torch.randn(self.u.shape, generator=generator), dim=0))
            self.v.copy_(F.normalize(torch.randn(self.v.shape, generator=generator), dim=0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        weight = self.conv.weight
        w_mat = weight.view(weight.shape[0], -1)
        if self.training:
            with torch.no_grad():
                u, v = self.u, self.v
                for _ in range(self.power_iterations):
                    v = F.normalize(torch.mv(w_mat.t().detach(), u), dim=0, eps=self.eps)
                    u = F.normalize(torch.mv(w_mat.detach(), v), dim=0, eps=self.eps)
                self.u.copy_(u)
                self.v.copy_(v)
        # clones keep this forward's graph valid when a later forward
        # advances the power-iteration buffers in place
        u, v = self.u.clone(), self.v.clone()
        sigma = torch.dot(u, torch.mv(w_mat, v))
        w_sn = weight / sigma.clamp_min(self.eps)
        return F.conv2d(x, w_sn, self.conv.bias, self.conv.stride, self.conv.padding)


def _critic_conv(cfg: CriticConfig, in_ch: int, out_ch: int, stride: int) -> nn.Module:
    if cfg.spectral_norm:
        return SpectralNormConv2d(
            in_ch, out_ch, 4, stride, padding=1, power_iterations=cfg.power_iterations
        )
    return nn.Conv2d(in_ch, out_ch, 4, stride, padding=1)


class PatchCritic(nn.Module):
    """70x70 patch critic producing an unbounded per-patch score map."""

    def __init__(self, config: CriticConfig | None = None):
        super().__init__()
        config = config or CriticConfig()
        config.validate()
        self.config = config
        b = config.base_channels
        self.layers = nn.Sequential(
            _critic_conv(config, config.in_channels, b, 2),    # 256 -> 128
            nn.LeakyReLU(config.leaky_slope, inplace=True),
            _critic_conv(config, b, b * 2, 2),                 # 128 -> 64
            nn.LeakyReLU(config.leaky_slope, inplace=True),
            _critic_conv(config, b * 2, b * 4, 2),             # 64 -> 32
            nn.LeakyReLU(config.leaky_slope, inplace=True),
            _critic_conv(config, b * 4, b * 8, 1),             # 32 -> 31
            nn.LeakyReLU(config.leaky_slope, inplace=True),
            _critic_conv(config, b * 8, 1, 1),                 # 31 -> 30
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        unbatched = x.dim() == 3
        if unbatched:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected (B, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        # the five-conv stack needs 24 input pixels to yield one score
        if x.shape[-2] < 24 or x.shape[-1] < 24:
            raise ValueError(f"input {tuple(x.shape[-2:])} is too small for the patch stack")
        scores = self.layers(x)
        return scores.squeeze(0) if unbatched else scores
