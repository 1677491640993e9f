"""Frozen feature extractor backing the perceptual loss.

The trunk follows the VGG-16 conv layout (13 convs in five blocks with 2x2
max pooling between blocks); layers are addressed by the usual names
(conv1_1 .. conv5_3) and features are taken after the ReLU of the named
conv. Weights come from a manifest when one is supplied; otherwise a
fixed-seed scaled-Gaussian init keeps the extractor self-contained and
reproducible. Parameters never receive gradients; inputs are expected in
the network range [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .weights import load_module_from_manifest

DEFAULT_LAYER = "conv3_3"

# (block multiplier, convs per block) for blocks 1..5
_BLOCKS = [(1, 2), (2, 2), (4, 3), (8, 3), (8, 3)]


@dataclass
class PerceptualConfig:
    layer: str = DEFAULT_LAYER
    base_channels: int = 64
    in_channels: int = 3
    seed: int = 101
    weights_manifest: str | None = None


class FeatureExtractor(nn.Module):
    """VGG-16-plan conv trunk with named, ReLU-activated taps."""

    def __init__(self, config: PerceptualConfig | None = None):
        super().__init__()
        config = config or PerceptualConfig()
        self.config = config
        self.convs = nn.ModuleDict()
        self.layer_names: list[str] = []
        in_ch = config.in_channels
        for block, (mult, n_convs) in enumerate(_BLOCKS, start=1):
            out_ch = config.base_channels * mult
            for i in range(1, n_convs + 1):
                name = f"conv{block}_{i}"
                self.convs[name] = nn.Conv2d(in_ch, out_ch, 3, padding=1)
                self.layer_names.append(name)
                in_ch = out_ch
        if config.layer not in self.layer_names:
            raise ValueError(
                f"unknown feature layer '{config.layer}'; valid layers: {self.layer_names}"
            )
        if config.weights_manifest:
            load_module_from_manifest(self, config.weights_manifest, what="feature extractor")
        else:
            self._random_init(config.seed)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _random_init(self, seed: int) -> None:
        # fan-in scaled Gaussian keeps activation magnitudes stable in depth
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name in self.layer_names:
                conv = self.convs[name]
                fan_in = conv.weight.shape[1] * conv.weight.shape[2] * conv.weight.shape[3]
                conv.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                conv.bias.zero_()

    def forward(self, x: torch.Tensor, layer: str | None = None) -> torch.Tensor:
        layer = layer or self.config.layer
        if layer not in self.layer_names:
            raise ValueError(
                f"unknown feature layer '{layer}'; valid layers: {self.layer_names}"
            )
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected (B, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        feat = x
        prev_block = 1
        for name in self.layer_names:
            block = int(name[4])
            if block != prev_block:
                feat = F.max_pool2d(feat, 2, 2)
                prev_block = block
            feat = F.relu(self.convs[name](feat))
            if name == layer:
                return feat
        raise AssertionError("unreachable: layer membership checked above")
