"""Edge, coarse-saliency and depth collaborator heads.

Each two-class head is a single 1x1 convolution producing (background,
foreground) logits. The foreground logit is the pre-softmax attention map and
the foreground softmax channel is the probability map that gets supervised.
"""

from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .layers import ConvBNPReLU, check_channels, two_way_head


class EdgeOutputs(NamedTuple):
    att_edge: torch.Tensor
    m_edge: torch.Tensor


class SaliencyStageOutputs(NamedTuple):
    att_sal: torch.Tensor
    s_coarse: torch.Tensor
    f_h_tilde: torch.Tensor


class DepthStageOutputs(NamedTuple):
    att_depth: torch.Tensor
    m_c: Optional[torch.Tensor]
    f_hc: torch.Tensor


def spatial_residual(att, feat):
    """att (Nx1xHxW) broadcast over channels: att * feat + feat."""
    return att * feat + feat


def channel_residual(weights, feat):
    """weights (NxCx1x1) broadcast over space: weights * feat + feat."""
    return weights * feat + feat


class EdgeHead(nn.Module):
    def __init__(self, ch=64):
        super().__init__()
        self.ch = ch
        self.conv = nn.Conv2d(ch, 2, 1)

    def forward(self, f_l) -> EdgeOutputs:
        check_channels(f_l, self.ch, "f_l")
        return EdgeOutputs(*two_way_head(self.conv, f_l))


class SaliencyStage(nn.Module):
    """Coarse saliency on f_h; its foreground logit re-weights f_h spatially.

    With ``spatial_attention=False`` the head is supervised only and f_h passes
    through unchanged.
    """

    def __init__(self, ch=64, spatial_attention=True):
        super().__init__()
        self.ch = ch
        self.spatial_attention = spatial_attention
        self.conv = nn.Conv2d(ch, 2, 1)

    def forward(self, f_h) -> SaliencyStageOutputs:
        check_channels(f_h, self.ch, "f_h")
        att_sal, s_coarse = two_way_head(self.conv, f_h)
        f_h_tilde = spatial_residual(att_sal, f_h) if self.spatial_attention else f_h
        return SaliencyStageOutputs(att_sal, s_coarse, f_h_tilde)


class DepthStage(nn.Module):
    """Depth head (three conv layers + 1x1 regression) and depth-driven channel attention."""

    def __init__(self, ch=64, channel_attention=True):
        super().__init__()
        self.ch = ch
        self.psi = nn.Sequential(ConvBNPReLU(ch, ch), ConvBNPReLU(ch, ch), ConvBNPReLU(ch, ch))
        self.regress = nn.Conv2d(ch, 1, 1)
        self.channel_conv = nn.Conv2d(1, ch, 1) if channel_attention else None

    def channel_weights(self, att_depth):
        # conv first, then global mean pooling, softmax over channels
        pooled = self.channel_conv(att_depth).mean(dim=(2, 3), keepdim=True)
        return torch.softmax(pooled, dim=1)

    def forward(self, f_h_tilde) -> DepthStageOutputs:
        check_channels(f_h_tilde, self.ch, "f_h_tilde")
        att_depth = self.regress(self.psi(f_h_tilde))
        if self.channel_conv is None:
            return DepthStageOutputs(att_depth, None, f_h_tilde)
        m_c = self.channel_weights(att_depth)
        return DepthStageOutputs(att_depth, m_c, channel_residual(m_c, f_h_tilde))
