"""Backbone side outputs, the five transition layers and the low-level fusion.

All tensors are NCHW. For a 256x256 input at full scale the side outputs are
128/64/32/16/16 pixels wide with 64/256/512/1024/2048 channels; the transitions
bring f1, f2 to input resolution and f3..f5 to a quarter of it with 64 channels.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn
import torchvision

from .errors import ConfigError, ShapeError
from .layers import ConvBNPReLU, check_channels, check_same_spatial, upsample

FULL_WIDTHS = (64, 256, 512, 1024, 2048)
TINY_WIDTHS = (8, 16, 32, 64, 64)

# side-out spatial divisors relative to the input side
SIDE_DIVISORS = (2, 4, 8, 16, 16)
# Upsample factors of trans1..trans5
TRANSITION_SCALES = (2, 4, 2, 4, 4)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class BackboneConfig:
    scale: str = "tiny"
    input_side: int = 256
    channel_widths: Optional[tuple] = None
    pretrained_weights_path: Optional[str] = None
    feature_width: int = 64

    def __post_init__(self):
        if self.scale not in ("full", "tiny"):
            raise ConfigError(f"unknown backbone scale {self.scale!r}")
        if self.channel_widths is None:
            self.channel_widths = FULL_WIDTHS if self.scale == "full" else TINY_WIDTHS
        self.channel_widths = tuple(int(w) for w in self.channel_widths)
        if len(self.channel_widths) != 5 or min(self.channel_widths) <= 0:
            raise ConfigError("channel_widths needs five positive integers")
        if self.scale == "full" and self.channel_widths != FULL_WIDTHS:
            raise ConfigError(f"full scale is a ResNet-50; widths must be {FULL_WIDTHS}")
        if self.input_side <= 0 or self.input_side % 16:
            raise ConfigError("input_side must be a positive multiple of 16")


class SideOutFeatures(NamedTuple):
    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor
    f5: torch.Tensor


class TransitionedFeatures(NamedTuple):
    t1: torch.Tensor
    t2: torch.Tensor
    t3: torch.Tensor
    t4: torch.Tensor
    t5: torch.Tensor


def normalize_image(rgb, pretrained=False):
    """uint8 HxWx3 array -> float 1x3xHxW tensor.

    Values are scaled to [0, 1]; with a pretrained backbone the ImageNet
    per-channel mean/std are applied on top.
    """
    x = torch.from_numpy(np.ascontiguousarray(rgb, dtype=np.float32) / 255.0)
    x = x.permute(2, 0, 1).unsqueeze(0)
    if pretrained:
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        x = (x - mean) / std
    return x


class TinyBackbone(nn.Module):
    """Five plain conv stages with strides 2,2,2,2,1 (last stage dilated)."""

    def __init__(self, widths):
        super().__init__()
        stages = []
        in_ch = 3
        for i, w in enumerate(widths):
            if i < 4:
                first = nn.Sequential(
                    nn.Conv2d(in_ch, w, 3, stride=2, padding=1),
                    nn.BatchNorm2d(w),
                    nn.ReLU(inplace=True),
                )
                second = ConvBNPReLU(w, w)
            else:
                first = ConvBNPReLU(in_ch, w, dilation=2)
                second = ConvBNPReLU(w, w, dilation=2)
            stages.append(nn.Sequential(first, second))
            in_ch = w
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return SideOutFeatures(*feats)


class ResNetBackbone(nn.Module):
    """ResNet-50 truncated before pooling/fc; layer4 keeps stride 1 (dilation 2)."""

    def __init__(self):
        super().__init__()
        net = torchvision.models.resnet50(
            weights=None, replace_stride_with_dilation=[False, False, True]
        )
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu)
        self.maxpool = net.maxpool
        self.layer1, self.layer2 = net.layer1, net.layer2
        self.layer3, self.layer4 = net.layer3, net.layer4

    def forward(self, x):
        f1 = self.stem(x)
        f2 = self.layer1(self.maxpool(f1))
        f3 = self.layer2(f2)
        f4 = self.layer3(f3)
        f5 = self.layer4(f4)
        return SideOutFeatures(f1, f2, f3, f4, f5)

    def load_torchvision_state(self, state):
        # Accepts a torchvision resnet50 state dict (fc.* keys are dropped).
        remap = {}
        for key, value in state.items():
            if key.startswith("fc."):
                continue
            if key.startswith(("conv1.", "bn1.")):
                key = "stem." + ("0." if key.startswith("conv1.") else "1.") + key.split(".", 1)[1]
            remap[key] = value
        self.load_state_dict(remap)


class Backbone(nn.Module):
    """Image -> five side-out features, with input shape checks."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.net = ResNetBackbone() if cfg.scale == "full" else TinyBackbone(cfg.channel_widths)

    def load_pretrained(self):
        path = self.cfg.pretrained_weights_path
        if not path:
            return
        if not Path(path).is_file():
            raise ConfigError(f"pretrained weights not found: {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        if isinstance(self.net, ResNetBackbone) and "conv1.weight" in state:
            self.net.load_torchvision_state(state)
        else:
            self.net.load_state_dict(state)

    def forward(self, image):
        side = self.cfg.input_side
        if image.dim() != 4 or image.shape[1] != 3 or tuple(image.shape[-2:]) != (side, side):
            raise ShapeError(f"expected N x 3 x {side} x {side} image, got {tuple(image.shape)}")
        return self.net(image)


class Transitions(nn.Module):
    """trans1/trans2 upsample only; trans3..5 upsample then Conv3x3+BN+PReLU."""

    def __init__(self, widths, out_ch=64):
        super().__init__()
        self.widths = tuple(widths)
        self.trans3 = ConvBNPReLU(widths[2], out_ch)
        self.trans4 = ConvBNPReLU(widths[3], out_ch)
        self.trans5 = ConvBNPReLU(widths[4], out_ch)

    def forward(self, s: SideOutFeatures) -> TransitionedFeatures:
        for i, (f, w) in enumerate(zip(s, self.widths)):
            check_channels(f, w, f"f{i + 1}")
        t1 = upsample(s.f1, TRANSITION_SCALES[0])
        t2 = upsample(s.f2, TRANSITION_SCALES[1])
        t3 = self.trans3(upsample(s.f3, TRANSITION_SCALES[2]))
        t4 = self.trans4(upsample(s.f4, TRANSITION_SCALES[3]))
        t5 = self.trans5(upsample(s.f5, TRANSITION_SCALES[4]))
        return TransitionedFeatures(t1, t2, t3, t4, t5)


class LowLevelFusion(nn.Module):
    """f_l = Conv3x3+BN+PReLU(concat(t1, t2))."""

    def __init__(self, c1, c2, out_ch=64):
        super().__init__()
        self.c1, self.c2 = c1, c2
        self.fuse = ConvBNPReLU(c1 + c2, out_ch)

    def forward(self, t1, t2):
        check_same_spatial(t1, t2, ("t1", "t2"))
        check_channels(t1, self.c1, "t1")
        check_channels(t2, self.c2, "t2")
        return self.fuse(torch.cat([t1, t2], dim=1))
