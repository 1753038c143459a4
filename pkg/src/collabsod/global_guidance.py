"""Global perception module (multi-dilation context) and the global guidance module.

GGM runs the perception module top-down over the three high-level features,
feeding each level the sum of its own input and every higher-level output,
then fuses the three outputs with a 1x1 convolution and upsamples to the
input resolution.
"""

from typing import NamedTuple

import torch
import torch.nn as nn

from .layers import ConvBNPReLU, check_channels, upsample
from .errors import ShapeError

GPM_DILATIONS = (1, 6, 12, 18)


class HighLevelFeature(NamedTuple):
    f_h: torch.Tensor
    g3: torch.Tensor
    g4: torch.Tensor
    g5: torch.Tensor


class GPM(nn.Module):
    """Four dilated 3x3 branches + one 1x1 branch, concatenated and fused to `ch`."""

    def __init__(self, ch=64):
        super().__init__()
        self.ch = ch
        self.branches = nn.ModuleList(ConvBNPReLU(ch, ch, 3, dilation=d) for d in GPM_DILATIONS)
        self.branches.append(ConvBNPReLU(ch, ch, 1))
        self.fuse = ConvBNPReLU(ch * len(self.branches), ch, 1)

    def forward(self, x):
        check_channels(x, self.ch, "GPM input")
        return self.fuse(torch.cat([b(x) for b in self.branches], dim=1))


class HighLevelFusion(nn.Module):
    """f_h = Up(W_h * concat(a, b, c) + b_h): plain 1x1 conv, no norm."""

    def __init__(self, ch=64, scale=4):
        super().__init__()
        self.scale = scale
        self.conv = nn.Conv2d(3 * ch, ch, 1)

    def forward(self, a, b, c):
        return upsample(self.conv(torch.cat([a, b, c], dim=1)), self.scale)


class GGM(nn.Module):
    def __init__(self, ch=64, scale=4):
        super().__init__()
        self.gpm3, self.gpm4, self.gpm5 = GPM(ch), GPM(ch), GPM(ch)
        self.fusion = HighLevelFusion(ch, scale)

    def forward(self, t3, t4, t5) -> HighLevelFeature:
        if not (t3.shape == t4.shape == t5.shape):
            raise ShapeError(
                f"t3/t4/t5 shapes differ: {tuple(t3.shape)}, {tuple(t4.shape)}, {tuple(t5.shape)}"
            )
        g5 = self.gpm5(t5)
        g4 = self.gpm4(t4 + g5)
        g3 = self.gpm3(t3 + g4 + g5)
        return HighLevelFeature(self.fusion(g3, g4, g5), g3, g4, g5)


class PlainHighLevel(nn.Module):
    """Baseline without GGM: f_h straight from concat(t3, t4, t5)."""

    def __init__(self, ch=64, scale=4):
        super().__init__()
        self.fusion = HighLevelFusion(ch, scale)

    def forward(self, t3, t4, t5) -> HighLevelFeature:
        if not (t3.shape == t4.shape == t5.shape):
            raise ShapeError("t3/t4/t5 shapes differ")
        return HighLevelFeature(self.fusion(t3, t4, t5), t3, t4, t5)
