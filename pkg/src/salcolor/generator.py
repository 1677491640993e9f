"""Colorization generator: U-Net mainstream, global feature encoder, saliency branch.

The mainstream is a U-Net over the grayscale input. A second encoder with a
VGG-16 layer plan (1-channel input, stride-2 convs instead of pooling) runs in
parallel and its bottleneck-resolution features are concatenated into the
mainstream bottleneck. The decoder ends in two heads: a tanh color head at
full resolution, and a saliency head that fuses the three highest-resolution
decoder features through a 1x1 conv and a sigmoid.

All convolutions use reflection padding (edge replication on maps too small
to mirror); BatchNorm + LeakyReLU(0.2) follow every conv except the input
stems and the two output heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class GeneratorConfig:
    input_size: int = 256
    base_channels: int = 64
    width_multiplier: float = 1.0
    encoder_depth: int = 5
    global_feature_channels: int = 512
    use_global_encoder: bool = True
    leaky_slope: float = 0.2

    def validate(self) -> None:
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.width_multiplier <= 0:
            raise ValueError("width_multiplier must be positive")
        if self.encoder_depth < 3:
            raise ValueError("encoder_depth must be >= 3 (saliency head needs three decoder scales)")
        factor = 2 ** self.encoder_depth
        if self.input_size % factor != 0 or self.input_size < factor:
            raise ValueError(
                f"input_size must be a positive multiple of {factor}, got {self.input_size}"
            )
        if self.use_global_encoder and self.encoder_depth != 5:
            raise ValueError("the global encoder's /32 grid requires encoder_depth=5")

    def stage_channels(self) -> list[int]:
        """Output channels of the stride-2 encoder stages (64,128,256,512,512 at defaults)."""
        return [
            _scaled(self.base_channels * min(2 ** i, 8), self.width_multiplier)
            for i in range(self.encoder_depth)
        ]

    def stem_channels(self) -> int:
        return _scaled(self.base_channels, self.width_multiplier)


def _scaled(channels: float, multiplier: float) -> int:
    return max(4, int(round(channels * multiplier)))


class ReflectOrReplicatePad2d(nn.Module):
    """Reflection padding, replicating edges when the map is too small to mirror.

    Reflection requires pad < spatial size, which a 1x1 bottleneck (the
    smallest input size the encoder admits) cannot satisfy; replicating the
    single pixel is what mirroring degenerates to there.
    """

    def __init__(self, pad: int):
        super().__init__()
        self.pad = pad

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.pad == 0:
            return x
        mode = "reflect" if min(x.shape[-2], x.shape[-1]) > self.pad else "replicate"
        return F.pad(x, (self.pad,) * 4, mode=mode)

    def extra_repr(self) -> str:
        return f"pad={self.pad}"


def conv_block(
    in_ch: int,
    out_ch: int,
    kernel: int = 3,
    stride: int = 1,
    norm: bool = True,
    act: bool = True,
    slope: float = 0.2,
) -> nn.Sequential:
    """Reflection-padded conv, optionally followed by BatchNorm and LeakyReLU."""
    layers: list[nn.Module] = [
        ReflectOrReplicatePad2d((kernel - 1) // 2),
        nn.Conv2d(in_ch, out_ch, kernel, stride, padding=0, bias=not norm),
    ]
    if norm:
        layers.append(nn.BatchNorm2d(out_ch))
    if act:
        layers.append(nn.LeakyReLU(slope, inplace=True))
    return nn.Sequential(*layers)


def up_block(in_ch: int, out_ch: int, slope: float = 0.2) -> nn.Sequential:
    """Stride-2 transposed conv that doubles the spatial size."""
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(slope, inplace=True),
    )


class GlobalEncoder(nn.Module):
    """VGG-16 layer plan on a 1-channel input, stride-2 convs replacing the pools.

    Output is a feature grid at 1/32 of the input resolution with
    ``out_channels`` channels (512 at defaults).
    """

    def __init__(self, out_channels: int = 512, slope: float = 0.2):
        super().__init__()
        c1 = max(4, out_channels // 8)
        c2 = max(4, out_channels // 4)
        c3 = max(4, out_channels // 2)
        blocks = [(2, c1), (2, c2), (3, c3), (3, out_channels), (3, out_channels)]
        layers: list[nn.Module] = []
        in_ch = 1
        first = True
        for n_convs, ch in blocks:
            for _ in range(n_convs):
                # the very first conv is the network input layer: no norm
                layers.append(conv_block(in_ch, ch, kernel=3, norm=not first, slope=slope))
                in_ch = ch
                first = False
            layers.append(conv_block(ch, ch, kernel=4, stride=2, slope=slope))
        self.features = nn.Sequential(*layers)
        self.out_channels = out_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-3] != 1:
            raise ValueError(f"global encoder expects 1 input channel, got {x.shape[-3]}")
        if x.shape[-1] % 32 != 0 or x.shape[-2] % 32 != 0:
            raise ValueError("global encoder input size must be divisible by 32")
        return self.features(x)


class Generator(nn.Module):
    """Grayscale-to-color generator with a joint saliency prediction branch.

    forward(x) takes ``(B, 1, H, W)`` (or unbatched ``(1, H, W)``) with H and W
    divisible by ``2 ** encoder_depth`` and returns ``(color, saliency)``:
    color in [-1, 1] with 3 channels, saliency in [0, 1] with 1 channel, both
    at the input resolution.
    """

    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        config = config or GeneratorConfig()
        config.validate()
        self.config = config

        slope = config.leaky_slope
        stages = config.stage_channels()          # e.g. [64, 128, 256, 512, 512]
        c0 = config.stem_channels()
        enc_ch = [c0] + stages

        # -------- mainstream encoder --------
        self.stem = conv_block(1, c0, kernel=3, norm=False, slope=slope)
        self.encoders = nn.ModuleList(
            conv_block(enc_ch[i], enc_ch[i + 1], kernel=4, stride=2, slope=slope)
            for i in range(config.encoder_depth)
        )

        # -------- global feature encoder and bottleneck fusion --------
        if config.use_global_encoder:
            self.global_encoder: GlobalEncoder | None = GlobalEncoder(
                config.global_feature_channels, slope=slope
            )
            fuse_in = stages[-1] + config.global_feature_channels
        else:
            self.global_encoder = None
            fuse_in = stages[-1]
        self.fuse = conv_block(fuse_in, stages[-1], kernel=3, slope=slope)

        # -------- decoder (mirrors the encoder, concat skips) --------
        dec_ch = list(reversed(enc_ch[:-1]))      # [512, 256, 128, 64, 64] at defaults
        ups = []
        merges = []
        in_ch = stages[-1]
        for out_ch in dec_ch:
            ups.append(up_block(in_ch, out_ch, slope=slope))
            merges.append(conv_block(out_ch * 2, out_ch, kernel=3, slope=slope))
            in_ch = out_ch
        self.ups = nn.ModuleList(ups)
        self.merges = nn.ModuleList(merges)

        # -------- output heads --------
        self.color_head = nn.Sequential(
            ReflectOrReplicatePad2d(1),
            nn.Conv2d(dec_ch[-1], 3, 3),
            nn.Tanh(),
        )
        sal_in = sum(dec_ch[-3:])                 # three highest-resolution decoder features
        self.saliency_head = nn.Sequential(
            nn.Conv2d(sal_in, 1, 1),
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        unbatched = x.dim() == 3
        if unbatched:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (B, 1, H, W) input, got shape {tuple(x.shape)}")
        factor = 2 ** self.config.encoder_depth
        h, w = x.shape[-2], x.shape[-1]
        if h % factor != 0 or w % factor != 0 or h < factor or w < factor:
            raise ValueError(f"input size {h}x{w} is not a positive multiple of {factor}")

        s0 = self.stem(x)
        skips = [s0]
        feat = s0
        for enc in self.encoders:
            feat = enc(feat)
            skips.append(feat)

        if self.global_encoder is not None:
            feat = torch.cat([feat, self.global_encoder(x)], dim=1)
        feat = self.fuse(feat)

        dec_feats = []
        for i, (up, merge) in enumerate(zip(self.ups, self.merges)):
            feat = up(feat)
            skip = skips[-(i + 2)]
            feat = merge(torch.cat([feat, skip], dim=1))
            dec_feats.append(feat)

        color = self.color_head(feat)
        full = dec_feats[-1].shape[-2:]
        sal_feats = [
            F.interpolate(f, size=full, mode="bilinear", align_corners=False)
            if f.shape[-2:] != full
            else f
            for f in dec_feats[-3:]
        ]
        saliency = self.saliency_head(torch.cat(sal_feats, dim=1))

        if unbatched:
            return color.squeeze(0), saliency.squeeze(0)
        return color, saliency
