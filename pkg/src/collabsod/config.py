"""Run configuration: a flat ``key = value`` file mirroring :class:`RunConfig`.

Lines starting with ``#`` are comments. Booleans accept true/false/yes/no/1/0,
``channel_widths`` is a comma-separated list, and ``none`` clears an optional
path. ``ablation = <row>`` presets all module toggles to a table row (see
``collabsod.network.ABLATIONS``); explicit toggle keys later override it.

Any field can be overridden from the environment as ``COLLABSOD_<KEY>``
(e.g. ``COLLABSOD_LR=0.01``), and those win over the file.
"""

import configparser
import dataclasses
import os
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .backbone import BackboneConfig
from .errors import ConfigError
from .losses import REDUCTIONS, LossWeights
from .network import ABLATIONS, Toggles, ablation

ENV_PREFIX = "COLLABSOD_"
TOGGLE_NAMES = tuple(f.name for f in fields(Toggles))


@dataclass
class RunConfig:
    # model
    scale: str = "full"
    input_side: int = 256
    channel_widths: Optional[tuple] = None
    feature_width: int = 64
    pretrained_weights_path: Optional[str] = None
    ablation: Optional[str] = None
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
    # loss
    w_edge: float = 1.0
    w_coarse: float = 1.0
    w_depth: float = 3.0
    w_final: float = 1.0
    reduction: str = "mean"
    # optimisation
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0005
    epochs: int = 50
    batch_size: int = 2
    max_steps: Optional[int] = None
    augment: bool = True
    seed: int = 0
    precision: str = "float32"
    # data / output
    train_data: Optional[str] = None
    invert_depth: bool = False
    out_dir: str = "runs/default"

    def __post_init__(self):
        if isinstance(self.channel_widths, str):
            self.channel_widths = tuple(int(x) for x in self.channel_widths.split(",") if x.strip())
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.ablation is not None and self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation row {self.ablation!r}")
        self.toggles()
        self.loss_weights()
        self.backbone_config()

    def toggles(self) -> Toggles:
        return Toggles(**{name: getattr(self, name) for name in TOGGLE_NAMES})

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_edge, self.w_coarse, self.w_depth, self.w_final)

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            self.scale, self.input_side, self.channel_widths,
            self.pretrained_weights_path, self.feature_width,
        )

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["channel_widths"] is not None:
            d["channel_widths"] = list(d["channel_widths"])
        return d

    def to_text(self):
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                value = "none"
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, mapping):
        mapping = dict(mapping)
        unknown = set(mapping) - {f.name for f in fields(cls)} - {"use_mutual_sa_ca"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = {}
        row = mapping.get("ablation")
        if row not in (None, "", "none"):
            preset = ablation(str(row))
            values.update({name: getattr(preset, name) for name in TOGGLE_NAMES})
        if "use_mutual_sa_ca" in mapping:
            on = _coerce(mapping.pop("use_mutual_sa_ca"), bool)
            values.update(use_sal_sa=on, use_depth_ca=on, use_depth=on or values.get("use_depth", True))
        hints = typing.get_type_hints(cls)
        for key, raw in mapping.items():
            values[key] = _coerce(raw, hints[key])
        return cls(**values)

    @classmethod
    def from_file(cls, path=None, env=None, **overrides):
        mapping = {}
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
            parser.optionxform = str
            try:
                parser.read_string("[run]\n" + text)
            except configparser.Error as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from exc
            mapping.update(parser["run"])
        env = os.environ if env is None else env
        for key, value in env.items():
            if key.startswith(ENV_PREFIX):
                mapping[key[len(ENV_PREFIX):].lower()] = value
        mapping.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(mapping)


def _coerce(raw, hint):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        if raw.lower() in ("", "none", "null"):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if hint is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if hint is tuple:
        return tuple(int(x) for x in raw.split(",") if x.strip())
    try:
        return hint(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {hint.__name__}") from exc
