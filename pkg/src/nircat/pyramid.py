"""Segmentation network: dense backbone + pyramid fusion of two-channel maps.

The backbone is a densely connected stack (each layer consumes the
concatenation of everything before it inside its block) whose block
outputs form a resolution hierarchy: block i emits features at
input / 2^(i-1).  Each block output is reduced to two channels by a
learned 1x1 convolution; the resulting column of maps is then fused
level by level, always combining a map with the 2x-upsampled map one
hierarchy below it, until a single full-resolution two-channel map
remains.  Per-pixel softmax over those two channels gives the mask.

Fusion of one pair = learned 2x deconvolution of the coarser map,
channel concatenation (2+2=4), a 3x3 convolution against upsampling
alias, and a 1x1 convolution back down to two channels.  With
``structural_levels`` < n_blocks the fusion stops early and the
hierarchy-1 map of the truncated level is carried to input resolution
by repeated learned 2x deconvolutions (a no-op chain under the stride-1
stem, where hierarchy 1 is already at input resolution).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

DEFAULT_LAYERS = (1, 1, 2, 4, 11)
DEFAULT_GROWTH = (6, 8, 16, 24, 40)
DEFAULT_INIT_CHANNELS = 12
DEFAULT_BOTTLENECK_MULT = 3
DEFAULT_COMPRESSION = 0.5
DEFAULT_INPUT_SIZE = 224


class ConfigError(ValueError):
    """Network configuration violates a structural invariant."""


@dataclass
class PyramidConfig:
    """Structural description of the segmentation network.

    growth_rate may be a single int (uniform) or one value per block.
    structural_levels limits how many fusion levels are built (for the
    level ablation); None means all n_blocks levels.
    """

    n_blocks: int = 5
    layers_per_block: tuple[int, ...] | None = None
    growth_rate: int | tuple[int, ...] | None = None
    init_channels: int = DEFAULT_INIT_CHANNELS
    bottleneck_mult: int = DEFAULT_BOTTLENECK_MULT
    compression: float = DEFAULT_COMPRESSION
    input_size: int = DEFAULT_INPUT_SIZE
    structural_levels: int | None = None

    def resolved(self) -> "PyramidConfig":
        layers = self.layers_per_block
        if layers is None:
            if self.n_blocks != 5:
                raise ConfigError("layers_per_block required when n_blocks != 5")
            layers = DEFAULT_LAYERS
        layers = tuple(int(x) for x in layers)
        growth = self.growth_rate
        if growth is None:
            if self.n_blocks != 5:
                raise ConfigError("growth_rate required when n_blocks != 5")
            growth = DEFAULT_GROWTH
        if isinstance(growth, int):
            growth = (growth,) * self.n_blocks
        growth = tuple(int(g) for g in growth)
        cfg = PyramidConfig(
            n_blocks=self.n_blocks,
            layers_per_block=layers,
            growth_rate=growth,
            init_channels=self.init_channels,
            bottleneck_mult=self.bottleneck_mult,
            compression=self.compression,
            input_size=self.input_size,
            structural_levels=(
                self.n_blocks if self.structural_levels is None else self.structural_levels
            ),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n_blocks < 2:
            raise ConfigError(f"n_blocks must be >= 2, got {self.n_blocks}")
        if len(self.layers_per_block) != self.n_blocks:
            raise ConfigError(
                f"layers_per_block has {len(self.layers_per_block)} entries "
                f"for n_blocks={self.n_blocks}"
            )
        if any(l < 1 for l in self.layers_per_block):
            raise ConfigError("every block needs at least one layer")
        if len(self.growth_rate) != self.n_blocks or any(g < 1 for g in self.growth_rate):
            raise ConfigError(f"bad growth rates: {self.growth_rate}")
        if self.init_channels < 1 or self.bottleneck_mult < 1:
            raise ConfigError("init_channels and bottleneck_mult must be >= 1")
        if not 0.0 < self.compression <= 1.0:
            raise ConfigError(f"compression must be in (0,1], got {self.compression}")
        if not 2 <= self.structural_levels <= self.n_blocks:
            raise ConfigError(
                f"structural_levels must be in [2, n_blocks], got {self.structural_levels}"
            )
        if self.input_size % (2 ** (self.n_blocks - 1)) != 0:
            raise ConfigError(
                f"input_size {self.input_size} not divisible by 2^{self.n_blocks - 1}"
            )

    def conv_layer_count(self) -> int:
        """Backbone convolution count: stem + 2 per dense layer + transitions."""
        layers = self.layers_per_block if self.layers_per_block is not None else DEFAULT_LAYERS
        return 1 + 2 * sum(layers) + (self.n_blocks - 1)


@dataclass
class FeatureMapSet:
    """All two-channel maps of one fusion level: maps[i-1] is hierarchy i."""

    level_j: int
    maps: list[torch.Tensor]
    resolutions: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.resolutions:
            self.resolutions = [tuple(m.shape[-2:]) for m in self.maps]


class DenseLayer(nn.Module):
    """BN-ReLU-1x1 bottleneck, BN-ReLU-3x3; appends growth channels."""

    def __init__(self, c_in: int, width: int, growth: int):
        super().__init__()
        self.norm1 = nn.BatchNorm2d(c_in)
        self.conv1 = nn.Conv2d(c_in, width, kernel_size=1, bias=False)
        self.norm2 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, growth, kernel_size=3, padding=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv1(torch.relu(self.norm1(x)))
        y = self.conv2(torch.relu(self.norm2(y)))
        return torch.cat([x, y], dim=1)


class Transition(nn.Module):
    """BN-ReLU-1x1 channel compression followed by 2x2 average pooling."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.norm = nn.BatchNorm2d(c_in)
        self.conv = nn.Conv2d(c_in, c_out, kernel_size=1, bias=False)
        self.pool = nn.AvgPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.conv(torch.relu(self.norm(x))))


class FusionBlock(nn.Module):
    """Combine a map with the 2x-upsampled map one hierarchy below it.

    deconv: learned transposed convolution, kernel 2, stride 2 (2ch -> 2ch);
    conv3: 3x3 on the 4-channel concatenation; conv1: 1x1 back to 2 channels.
    No normalization inside: the block supports an exact hand-set identity.
    """

    def __init__(self):
        super().__init__()
        self.deconv = nn.ConvTranspose2d(2, 2, kernel_size=2, stride=2, bias=True)
        self.conv3 = nn.Conv2d(4, 4, kernel_size=3, padding=1, bias=True)
        self.conv1 = nn.Conv2d(4, 2, kernel_size=1, bias=True)

    def forward(self, high: torch.Tensor, low: torch.Tensor) -> torch.Tensor:
        if high.shape[-3] != 2 or low.shape[-3] != 2:
            raise ValueError("fusion inputs must both have 2 channels")
        if (high.shape[-2] != 2 * low.shape[-2]) or (high.shape[-1] != 2 * low.shape[-1]):
            raise ValueError(
                f"low-resolution map {tuple(low.shape[-2:])} must be exactly half of "
                f"{tuple(high.shape[-2:])}"
            )
        up = self.deconv(low)
        fused = torch.cat([high, up], dim=1)
        return self.conv1(self.conv3(fused))


class PyramidFusionNet(nn.Module):
    """Dense backbone + channel reduction + pyramid fusion + per-pixel logits."""

    def __init__(self, config: PyramidConfig):
        super().__init__()
        cfg = config.resolved()
        self.config = cfg

        self.stem = nn.Conv2d(1, cfg.init_channels, kernel_size=3, padding=1, bias=False)
        self.blocks = nn.ModuleList()
        self.transitions = nn.ModuleList()
        c = cfg.init_channels
        self.block_channels: list[int] = []
        for b in range(cfg.n_blocks):
            growth = cfg.growth_rate[b]
            width = cfg.bottleneck_mult * growth
            layers = nn.Sequential(
                *[
                    DenseLayer(c + i * growth, width, growth)
                    for i in range(cfg.layers_per_block[b])
                ]
            )
            self.blocks.append(layers)
            c += cfg.layers_per_block[b] * growth
            self.block_channels.append(c)
            if b < cfg.n_blocks - 1:
                c_out = int(c * cfg.compression)
                self.transitions.append(Transition(c, c_out))
                c = c_out

        # one 2-channel reduction tap per block output
        self.reducers = nn.ModuleList(
            nn.Conv2d(ch, 2, kernel_size=1, bias=True) for ch in self.block_channels
        )
        # fusion blocks indexed [level j - 2][hierarchy i - 1]
        self.fusions = nn.ModuleList()
        for j in range(2, cfg.structural_levels + 1):
            row = nn.ModuleList(FusionBlock() for _ in range(cfg.n_blocks - (j - 1)))
            self.fusions.append(row)
        # carry a truncated level's hierarchy-1 map up to input resolution by
        # repeated learned 2x deconvolution; the stride-1 stem keeps hierarchy 1
        # at input resolution already, so the chain is empty under every
        # supported config
        res_h1 = cfg.input_size
        n_up = 0
        while res_h1 < cfg.input_size:
            res_h1 *= 2
            n_up += 1
        self.final_upsample = nn.ModuleList(
            nn.ConvTranspose2d(2, 2, kernel_size=2, stride=2, bias=True) for _ in range(n_up)
        )

        self.reset_parameters()

    def reset_parameters(self) -> None:
        """Fan-in scaled normal init for conv weights; zero biases throughout."""
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def conv_layer_count(self) -> int:
        return self.config.conv_layer_count()

    def _check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        if x.dim() != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) input, got {tuple(x.shape)}")
        s = self.config.input_size
        if x.shape[-2] != s or x.shape[-1] != s:
            raise ValueError(f"expected {s}x{s} input, got {tuple(x.shape[-2:])}")
        return x

    def backbone_forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Block outputs, one per block, at input / 2^(i-1) resolution."""
        x = self._check_input(x)
        outs: list[torch.Tensor] = []
        h = self.stem(x)
        for b, block in enumerate(self.blocks):
            h = block(h)
            outs.append(h)
            if b < len(self.transitions):
                h = self.transitions[b](h)
        return outs

    def reduce_channels(self, block_outputs: list[torch.Tensor]) -> list[torch.Tensor]:
        return [red(out) for red, out in zip(self.reducers, block_outputs)]

    def forward_pyramid(self, x: torch.Tensor) -> list[FeatureMapSet]:
        """All fusion levels j = 1..structural_levels; level j holds n_blocks-(j-1) maps."""
        maps = self.reduce_channels(self.backbone_forward(x))
        levels = [FeatureMapSet(level_j=1, maps=maps)]
        for j in range(2, self.config.structural_levels + 1):
            row = self.fusions[j - 2]
            prev = levels[-1].maps
            maps = [row[i](prev[i], prev[i + 1]) for i in range(len(prev) - 1)]
            levels.append(FeatureMapSet(level_j=j, maps=maps))
        return levels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Per-pixel 2-channel logits at input resolution (channel 0 = foreground)."""
        levels = self.forward_pyramid(x)
        out = levels[-1].maps[0]
        for up in self.final_upsample:
            out = up(out)
        return out
