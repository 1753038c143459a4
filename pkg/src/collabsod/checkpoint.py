"""Versioned checkpoint container (safetensors with JSON metadata)."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch
from safetensors.torch import load as st_load
from safetensors.torch import save as st_save

from .config import RunConfig
from .errors import ConfigError
from .network import build_network

FORMAT_VERSION = 1
META_KEY = "collabsod"


@dataclass
class Checkpoint:
    config: dict
    state: dict
    epoch: int = 0
    history: list = field(default_factory=list)
    version: int = FORMAT_VERSION

    def to_bytes(self):
        # one metadata entry: safetensors does not keep the order of several keys stable
        meta = {META_KEY: json.dumps({
            "format_version": self.version,
            "config": self.config,
            "epoch": self.epoch,
            "history": self.history,
        }, sort_keys=True)}
        tensors = {k: v.detach().cpu().contiguous() for k, v in self.state.items()}
        return st_save(tensors, metadata=meta)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)
        return path

    @classmethod
    def from_bytes(cls, blob):
        tensors = st_load(blob)
        header_len = int.from_bytes(blob[:8], "little")
        header = json.loads(blob[8:8 + header_len]).get("__metadata__", {})
        meta = json.loads(header.get(META_KEY, "{}"))
        version = int(meta.get("format_version", -1))
        if version != FORMAT_VERSION:
            raise ConfigError(f"checkpoint format {version} is not supported (expected {FORMAT_VERSION})")
        return cls(
            config=meta["config"],
            state=tensors,
            epoch=int(meta["epoch"]),
            history=meta["history"],
            version=version,
        )

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())

    def run_config(self) -> RunConfig:
        cfg = dict(self.config)
        # pretrained weights are already inside the state dict
        cfg["pretrained_weights_path"] = None
        return RunConfig.from_mapping(cfg)


def snapshot(model, cfg: RunConfig, epoch, history):
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(cfg.to_dict(), state, epoch, list(history))


def restore_model(ckpt: Checkpoint):
    """Rebuild the network described by the checkpoint and load its weights (eval mode)."""
    cfg = ckpt.run_config()
    dtype = torch.float64 if cfg.precision == "float64" else torch.float32
    model = build_network(cfg.backbone_config(), cfg.toggles(), cfg.seed, dtype)
    try:
        model.load_state_dict(ckpt.state)
    except RuntimeError as exc:
        raise ConfigError(f"checkpoint does not match its configuration: {exc}") from exc
    return model.eval(), cfg
