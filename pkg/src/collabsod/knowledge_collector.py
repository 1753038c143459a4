"""Knowledge collector: triple attention with residual protection over F_g = [f_l, f_hc]."""

from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .collaborators import spatial_residual
from .errors import ShapeError
from .layers import check_channels, two_way_head, upsample


class CollectorOutputs(NamedTuple):
    att_f: Optional[torch.Tensor]
    f_g: torch.Tensor
    f_g_tilde: torch.Tensor
    fused: torch.Tensor
    s_final: torch.Tensor


class KnowledgeCollector(nn.Module):
    """Fuse low/high features with edge, saliency and depth knowledge.

    Any subset of the three attentions can be switched off; with all three off
    this is just the concat + 1x1 prediction head of the plain baseline.
    ``out_size`` resizes S_final (no-op at the default full-resolution decode).
    """

    def __init__(self, ch=64, use_att_edge=True, use_att_sal=True, use_att_depth=True):
        super().__init__()
        self.ch = ch
        self.use_att_edge = use_att_edge
        self.use_att_sal = use_att_sal
        self.use_att_depth = use_att_depth
        n_att = int(use_att_sal) + int(use_att_edge)
        self.att_conv = nn.Conv2d(n_att, 2, 1) if n_att else None
        self.head = nn.Conv2d(2 * ch, 2, 1)

    def fused_attention(self, att_sal, att_edge):
        maps = []
        if self.use_att_sal:
            maps.append(att_sal)
        if self.use_att_edge:
            maps.append(att_edge)
        return two_way_head(self.att_conv, torch.cat(maps, dim=1))[1]

    def forward(self, f_l, f_hc, att_edge=None, att_sal=None, att_depth=None, out_size=None):
        check_channels(f_l, self.ch, "f_l")
        check_channels(f_hc, self.ch, "f_hc")
        f_hc = upsample(f_hc, size=f_l.shape[-2:])
        f_g = torch.cat([f_l, f_hc], dim=1)
        for name, used, att in (
            ("att_edge", self.use_att_edge, att_edge),
            ("att_sal", self.use_att_sal, att_sal),
            ("att_depth", self.use_att_depth, att_depth),
        ):
            if not used:
                continue
            if att is None:
                raise ShapeError(f"{name} is enabled but was not provided")
            if att.shape[1] != 1 or att.shape[-2:] != f_l.shape[-2:]:
                raise ShapeError(f"{name} must be N x 1 x {tuple(f_l.shape[-2:])}, got {tuple(att.shape)}")

        f_g_tilde = spatial_residual(att_depth, f_g) if self.use_att_depth else f_g
        att_f = None
        fused = f_g_tilde
        if self.att_conv is not None:
            att_f = self.fused_attention(att_sal, att_edge)
            fused = spatial_residual(att_f, f_g_tilde)
        _, s_final = two_way_head(self.head, fused)
        if out_size is not None:
            s_final = upsample(s_final, size=out_size)
        return CollectorOutputs(att_f, f_g, f_g_tilde, fused, s_final)
