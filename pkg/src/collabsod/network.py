"""Full network assembly and the ablation switches.

The network consumes an RGB batch only. Depth maps appear solely as training
targets in the loss, never as a forward input.
"""

import zlib
from dataclasses import dataclass, fields
from typing import Optional

import torch
import torch.nn as nn

from .backbone import Backbone, BackboneConfig, LowLevelFusion, Transitions
from .collaborators import DepthStage, EdgeHead, SaliencyStage
from .errors import ConfigError
from .global_guidance import GGM, PlainHighLevel
from .knowledge_collector import KnowledgeCollector
from .layers import two_way_head


@dataclass(frozen=True)
class Toggles:
    use_ggm: bool = True
    use_edge: bool = True
    use_low_sal: bool = False
    use_coarse_sal: bool = True
    use_depth: bool = True
    use_sal_sa: bool = True
    use_depth_ca: bool = True
    use_kc: bool = True
    kc_use_att_edge: bool = True
    kc_use_att_sal: bool = True
    kc_use_att_depth: bool = True

    def __post_init__(self):
        needs = [
            ("use_sal_sa", "use_coarse_sal"),
            ("use_depth_ca", "use_depth"),
        ]
        if self.use_kc:
            needs += [
                ("kc_use_att_edge", "use_edge"),
                ("kc_use_att_sal", "use_coarse_sal"),
                ("kc_use_att_depth", "use_depth"),
            ]
        for flag, requirement in needs:
            if getattr(self, flag) and not getattr(self, requirement):
                raise ConfigError(f"{flag} requires {requirement}")

    @property
    def use_mutual_sa_ca(self):
        return self.use_sal_sa and self.use_depth_ca

    @property
    def kc_flags(self):
        on = self.use_kc
        return (on and self.kc_use_att_edge, on and self.kc_use_att_sal, on and self.kc_use_att_depth)

    @classmethod
    def from_flags(cls, **flags):
        """Unlisted flags default to False; ``use_mutual_sa_ca`` expands to depth + SA + CA."""
        values = {f.name: False for f in fields(cls)}
        if flags.pop("use_mutual_sa_ca", False):
            values.update(use_depth=True, use_sal_sa=True, use_depth_ca=True)
        values.update(flags)
        return cls(**values)


_B = {}
_BG = dict(_B, use_ggm=True)
_C = dict(_BG, use_edge=True)
_D = dict(_C, use_coarse_sal=True)
_E = dict(_D, use_mutual_sa_ca=True)
_KC = dict(use_kc=True)

# Rows of the main ablation table (a)-(f) and the collaborator-interaction table.
ABLATIONS = {
    "a": _B,
    "b": _BG,
    "c": _C,
    "b+E+Sl": dict(_C, use_low_sal=True),
    "d": _D,
    "c+S+D": dict(_D, use_depth=True),
    "c+S+Dca": dict(_D, use_depth=True, use_depth_ca=True),
    "e": _E,
    "e+Ae": dict(_E, **_KC, kc_use_att_edge=True),
    "e+As": dict(_E, **_KC, kc_use_att_sal=True),
    "e+Ae+As": dict(_E, **_KC, kc_use_att_edge=True, kc_use_att_sal=True),
    "f": dict(_E, **_KC, kc_use_att_edge=True, kc_use_att_sal=True, kc_use_att_depth=True),
}

MAIN_TABLE_ROWS = ("a", "b", "c", "d", "e", "f")
# ordered so that every step only adds modules
PARAMETER_ORDER = (
    "a", "b", "c", "b+E+Sl", "d", "c+S+D", "c+S+Dca", "e", "e+Ae", "e+As", "e+Ae+As", "f",
)


def ablation(name) -> Toggles:
    try:
        return Toggles.from_flags(**ABLATIONS[name])
    except KeyError:
        raise ConfigError(f"unknown ablation row {name!r}; known: {sorted(ABLATIONS)}") from None


@dataclass
class NetworkOutputs:
    s_final: torch.Tensor
    f_l: torch.Tensor
    f_h: torch.Tensor
    att_f: Optional[torch.Tensor] = None
    att_edge: Optional[torch.Tensor] = None
    m_edge: Optional[torch.Tensor] = None
    s_low: Optional[torch.Tensor] = None
    att_sal: Optional[torch.Tensor] = None
    s_coarse: Optional[torch.Tensor] = None
    att_depth: Optional[torch.Tensor] = None
    m_c: Optional[torch.Tensor] = None

    def maps(self):
        """Name -> tensor for every prediction/attention produced by this configuration."""
        skip = ("f_l", "f_h")
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in skip and getattr(self, f.name) is not None}


class CollaborativeSOD(nn.Module):
    def __init__(self, backbone_cfg: BackboneConfig = None, toggles: Toggles = None, seed=0):
        super().__init__()
        self.backbone_cfg = backbone_cfg = backbone_cfg or BackboneConfig()
        self.toggles = toggles = toggles or Toggles()
        fw = backbone_cfg.feature_width
        w = backbone_cfg.channel_widths

        self.backbone = Backbone(backbone_cfg)
        self.transitions = Transitions(w, fw)
        self.low_fusion = LowLevelFusion(w[0], w[1], fw)
        self.high = GGM(fw) if toggles.use_ggm else PlainHighLevel(fw)
        self.edge = EdgeHead(fw) if toggles.use_edge else None
        self.low_sal = nn.Conv2d(fw, 2, 1) if toggles.use_low_sal else None
        self.saliency = SaliencyStage(fw, toggles.use_sal_sa) if toggles.use_coarse_sal else None
        self.depth = DepthStage(fw, toggles.use_depth_ca) if toggles.use_depth else None
        kc_edge, kc_sal, kc_depth = toggles.kc_flags
        self.collector = KnowledgeCollector(fw, kc_edge, kc_sal, kc_depth)

        seeded_reset(self, seed)
        self.backbone.load_pretrained()

    def forward(self, image) -> NetworkOutputs:
        side = self.backbone(image)
        t = self.transitions(side)
        f_l = self.low_fusion(t.t1, t.t2)
        f_h = self.high(t.t3, t.t4, t.t5).f_h
        out = NetworkOutputs(s_final=None, f_l=f_l, f_h=f_h)

        if self.edge is not None:
            out.att_edge, out.m_edge = self.edge(f_l)
        if self.low_sal is not None:
            out.s_low = two_way_head(self.low_sal, f_l)[1]
        f_high = f_h
        if self.saliency is not None:
            out.att_sal, out.s_coarse, f_high = self.saliency(f_h)
        if self.depth is not None:
            out.att_depth, out.m_c, f_high = self.depth(f_high)

        kc = self.collector(f_l, f_high, out.att_edge, out.att_sal, out.att_depth,
                            out_size=image.shape[-2:])
        out.att_f, out.s_final = kc.att_f, kc.s_final
        return out


def seeded_reset(model: nn.Module, seed: int):
    """Re-initialise every parametrised submodule from a seed derived from its path.

    Submodules shared by two ablation variants therefore start from identical
    weights, and adding a head never shifts the initialisation of the others.
    """
    for name, module in model.named_modules():
        if not hasattr(module, "reset_parameters"):
            continue
        sub_seed = zlib.crc32(f"{seed}/{name}".encode()) & 0x7FFFFFFF
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(sub_seed)
            module.reset_parameters()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def build_network(backbone_cfg=None, toggles=None, seed=0, dtype=torch.float32):
    return CollaborativeSOD(backbone_cfg, toggles, seed).to(dtype)

