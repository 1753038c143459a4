import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError


class ConvBNPReLU(nn.Sequential):
    """KxK convolution + batch norm + PReLU, spatial size preserved."""

    def __init__(self, in_ch, out_ch, kernel_size=3, dilation=1):
        pad = dilation * (kernel_size // 2)
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size, padding=pad, dilation=dilation),
            nn.BatchNorm2d(out_ch),
            nn.PReLU(),
        )


def upsample(x, scale=None, size=None):
    """Bilinear resize with align_corners=False. Identity when nothing changes."""
    if size is None:
        size = (int(x.shape[-2] * scale), int(x.shape[-1] * scale))
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def two_way_head(conv, x):
    """Run a 2-channel 1x1 head; return (foreground logit, foreground probability)."""
    logits = conv(x)
    prob = torch.softmax(logits, dim=1)[:, 1:2]
    return logits[:, 1:2], prob


def check_channels(x, expected, name):
    if x.dim() != 4 or x.shape[1] != expected:
        raise ShapeError(f"{name}: expected N x {expected} x H x W, got {tuple(x.shape)}")


def check_same_spatial(a, b, names):
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(
            f"{names[0]} and {names[1]} differ spatially: "
            f"{tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}"
        )
