"""Network contracts: heatmap FCN, segmentation FCN, patch discriminator.

Both FCNs share a decoder-free, deeply-supervised backbone: each stage
emits a side output at its own resolution, side outputs are upsampled to
the input grid and progressively summed, and every partial sum is exposed
for deep supervision.  The final partial sum is the prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class StageNetConfig:
    in_channels: int
    out_channels: int
    stage_channels: tuple[int, ...] = (8, 16, 32, 48)
    blocks_per_stage: tuple[int, ...] = (1, 1, 2, 2)
    deep_supervision: bool = True
    norm_groups: int = 4

    def __post_init__(self):
        if len(self.stage_channels) < 2:
            raise InvalidArgumentError("need at least 2 stages")
        if len(self.blocks_per_stage) != len(self.stage_channels):
            raise InvalidArgumentError("blocks_per_stage must match stage_channels")

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def stride_product(self) -> int:
        return 2 ** (self.n_stages - 1)


def heatmap_net_config(**overrides) -> StageNetConfig:
    """Extreme-point regressor: image in, six heatmap channels out."""
    return StageNetConfig(in_channels=1, out_channels=6, **overrides)


def seg_net_config(**overrides) -> StageNetConfig:
    """Mask predictor: image + summed heatmap channel in, one channel out."""
    return StageNetConfig(in_channels=2, out_channels=1, **overrides)


def _conv_block(in_ch: int, out_ch: int, groups: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(in_ch, out_ch, kernel_size=3, padding=1, bias=False),
        nn.GroupNorm(min(groups, out_ch), out_ch),
        nn.ReLU(inplace=True),
    )


class ProgressiveFCN(nn.Module):
    """Deeply-supervised FCN with progressively summed side outputs."""

    def __init__(self, config: StageNetConfig):
        super().__init__()
        self.config = config
        stages = []
        in_ch = config.in_channels
        for ch, blocks in zip(config.stage_channels, config.blocks_per_stage):
            layers = []
            for b in range(blocks):
                layers.append(_conv_block(in_ch if b == 0 else ch, ch, config.norm_groups))
            stages.append(nn.Sequential(*layers))
            in_ch = ch
        self.stages = nn.ModuleList(stages)
        self.pool = nn.MaxPool3d(2)
        self.side_outputs = nn.ModuleList(
            nn.Conv3d(ch, config.out_channels, kernel_size=1)
            for ch in config.stage_channels
        )
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.normal_(m.weight, 0.0, 0.02)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.config.in_channels:
            raise InvalidArgumentError(
                f"expected (batch, {self.config.in_channels}, nx, ny, nz), "
                f"got {tuple(x.shape)}"
            )
        stride = self.config.stride_product
        if any(int(n) % stride for n in x.shape[2:]):
            raise InvalidArgumentError(
                f"spatial dims {tuple(x.shape[2:])} must be divisible by {stride}"
            )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns ``(final, partial_sums)`` where ``partial_sums`` are the
        earlier progressive aggregates for deep supervision (empty when
        deep supervision is off)."""
        self._check_input(x)
        size = x.shape[2:]
        partial = None
        partials = []
        feat = x
        for i, (stage, side) in enumerate(zip(self.stages, self.side_outputs)):
            if i > 0:
                feat = self.pool(feat)
            feat = stage(feat)
            out = side(feat)
            if out.shape[2:] != size:
                out = F.interpolate(out, size=size, mode="trilinear", align_corners=False)
            partial = out if partial is None else partial + out
            partials.append(partial)
        final = partials[-1]
        aux = partials[:-1] if self.config.deep_supervision else []
        return final, aux


class HeatmapNet(ProgressiveFCN):
    """Predicts six extreme-point heatmap channels (unbounded regression)."""

    def __init__(self, config: StageNetConfig | None = None):
        super().__init__(config or heatmap_net_config())


def summed_channel(heatmaps: torch.Tensor) -> torch.Tensor:
    """Collapse six heatmap channels to the single clamped input channel."""
    return heatmaps.sum(dim=1, keepdim=True).clamp(0.0, 1.0)


class SegNet(ProgressiveFCN):
    """Predicts a foreground probability map from (image, summed heatmap)."""

    def __init__(self, config: StageNetConfig | None = None):
        super().__init__(config or seg_net_config())

    def forward(self, x: torch.Tensor, heatmap: torch.Tensor | None = None):
        if heatmap is not None:
            if heatmap.shape[0] != x.shape[0] or heatmap.shape[2:] != x.shape[2:]:
                raise InvalidArgumentError(
                    f"image {tuple(x.shape)} and heatmap {tuple(heatmap.shape)} misaligned"
                )
            x = torch.cat([x, heatmap], dim=1)
        final, aux = super().forward(x)
        return torch.sigmoid(final), [torch.sigmoid(a) for a in aux]


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 2  # mask probability + summed heatmap
    base_channels: int = 16
    dilations: tuple[int, ...] = (2, 4)

    @property
    def downsample_factor(self) -> int:
        return 4


class PatchDiscriminator(nn.Module):
    """Atrous patch classifier over (mask, heatmap) prediction pairs.

    Two stride-2 convolutions downsample by 4, dilated convolutions widen
    the context, and a final 1-channel convolution emits patch logits (no
    activation; the loss applies it).
    """

    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        c = self.config.base_channels
        layers = [
            nn.Conv3d(self.config.in_channels, c, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(c, c * 2, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        ch = c * 2
        for d in self.config.dilations:
            layers += [
                nn.Conv3d(ch, c * 4, 3, padding=d, dilation=d),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            ch = c * 4
        layers.append(nn.Conv3d(ch, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.normal_(m.weight, 0.0, 0.02)
                nn.init.zeros_(m.bias)

    def forward(
        self, mask_prob: torch.Tensor, heatmap: torch.Tensor | None = None
    ) -> torch.Tensor:
        if heatmap is not None:
            if heatmap.shape[2:] != mask_prob.shape[2:]:
                raise InvalidArgumentError(
                    f"mask {tuple(mask_prob.shape)} and heatmap "
                    f"{tuple(heatmap.shape)} misaligned"
                )
            x = torch.cat([mask_prob, heatmap], dim=1)
        else:
            x = mask_prob
        if x.shape[1] != self.config.in_channels:
            raise InvalidArgumentError(
                f"expected {self.config.in_channels} input channels, got {x.shape[1]}"
            )
        return self.body(x)


def count_parameters(*modules: nn.Module) -> int:
    return sum(p.numel() for m in modules for p in m.parameters())
