"""Central finite differences against autograd over the whole network + loss."""

from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch

from .config import RunConfig
from .data import derive_edge_gt, normalize_depth, normalize_image
from .engine import compute_losses
from .errors import ConfigError, GradCheckError
from .network import build_network
from .synthetic import make_scene

FAIL_TOL = 1e-3
# below this magnitude gradients are compared absolutely (relative error is noise)
ABS_FLOOR = 1e-6


@dataclass
class GradEntry:
    param: str
    index: int
    analytic: float
    numeric: float
    step: float = 0.0

    @property
    def rel_err(self):
        a, n = self.analytic, self.numeric
        return abs(a - n) / max(abs(a), abs(n), ABS_FLOOR)


@dataclass
class GradCheckReport:
    entries: List[GradEntry] = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((e.rel_err for e in self.entries), default=0.0)

    @property
    def worst(self):
        return max(self.entries, key=lambda e: e.rel_err)

    def modules(self):
        return sorted({e.param.rsplit(".", 1)[0] for e in self.entries})

    def summary(self):
        w = self.worst
        return (
            f"checked {len(self.entries)} parameters in {len(self.modules())} modules; "
            f"max relative error {self.max_rel_err:.3e} at {w.param}[{w.index}] "
            f"(analytic {w.analytic:.6e}, numeric {w.numeric:.6e})"
        )


def synthetic_batch(side, n=2, seed=0, dtype=torch.float64):
    rng = np.random.default_rng(seed)
    images, sals, edges, depths = [], [], [], []
    for _ in range(n):
        rgb, depth, mask = make_scene(rng, side)
        sal = (mask > 0).astype(np.uint8)
        images.append(normalize_image(rgb)[0])
        sals.append(torch.from_numpy(sal).float()[None])
        edges.append(torch.from_numpy(derive_edge_gt(sal)).float()[None])
        depths.append(torch.from_numpy(normalize_depth(depth)).float()[None])
    batch = {k: torch.stack(v).to(dtype) for k, v in
             (("image", images), ("sal", sals), ("edge", edges), ("depth", depths))}
    return batch


def _loss(model, batch, weights, reduction):
    return compute_losses(model(batch["image"]), batch, weights, reduction).total


def analytic_gradients(model, batch, weights, reduction="mean"):
    """name -> gradient tensor (zeros for parameters the loss does not reach)."""
    model.zero_grad(set_to_none=True)
    _loss(model, batch, weights, reduction).backward()
    return {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }


def calibrate_batchnorm(model, images):
    """Set BN running statistics from one pass over ``images`` and switch to eval mode.

    Batch-statistics mode is degenerate at 16x16 inputs (the deepest maps are
    1x1, so each channel is normalised over a handful of values) and default
    running stats let activations decay toward zero through the stack; fixed
    statistics from a calibration batch keep the function smooth and well scaled.
    """
    bns = [m for m in model.modules() if isinstance(m, torch.nn.BatchNorm2d)]
    for m in bns:
        m.reset_running_stats()
        m.momentum = None
    model.train()
    with torch.no_grad():
        model(images)
    for m in bns:
        m.momentum = 0.1
    return model.eval()


def _choose(model, n_samples, rng):
    """At least one entry from every parameter tensor, the rest drawn by size."""
    params = list(model.named_parameters())
    picks = [(name, int(rng.integers(p.numel()))) for name, p in params]
    sizes = np.array([p.numel() for _, p in params], dtype=np.float64)
    extra = max(0, n_samples - len(picks))
    for k in rng.choice(len(params), size=extra, p=sizes / sizes.sum()):
        name, p = params[k]
        picks.append((name, int(rng.integers(p.numel()))))
    return picks


class KinkMonitor:
    """Records the sign pattern of every (P)ReLU input during a forward pass.

    A central difference is only valid if no activation crosses its kink
    between the +h and -h evaluations; comparing the two sign patterns detects
    that without looking at the analytic gradient.
    """

    def __init__(self, model):
        self.signs = []
        self.handles = [
            m.register_forward_hook(self._hook)
            for m in model.modules() if isinstance(m, (torch.nn.ReLU, torch.nn.PReLU))
        ]

    def _hook(self, module, inputs, output):
        self.signs.append(inputs[0] > 0)

    def take(self):
        signs, self.signs = self.signs, []
        return signs

    def close(self):
        for h in self.handles:
            h.remove()


def _crossed(a, b):
    return any(not torch.equal(x, y) for x, y in zip(a, b))


def central_difference(f, flat, index, step, monitor, max_refine=3):
    """(numeric derivative, step used); the step shrinks 10x while a kink is crossed."""
    original = flat[index].item()
    for _ in range(max_refine + 1):
        flat[index] = original + step
        up = f()
        s_up = monitor.take()
        flat[index] = original - step
        down = f()
        s_down = monitor.take()
        flat[index] = original
        if not _crossed(s_up, s_down):
            break
        step /= 10
    return (up - down) / (2 * step), step


def grad_check(cfg: RunConfig, n_samples=200, step=1e-5, seed=0, batch=None):
    """Compare autograd to central differences on a tiny float64 model.

    Raises GradCheckError when any sampled relative error exceeds 1e-3.
    """
    if cfg.scale != "tiny" or cfg.input_side > 16:
        raise ConfigError("grad_check needs scale=tiny and input_side <= 16")
    torch.manual_seed(seed)
    model = build_network(cfg.backbone_config(), cfg.toggles(), cfg.seed, torch.float64)
    weights = cfg.loss_weights()
    if batch is None:
        batch = synthetic_batch(cfg.input_side, n=2, seed=seed)
    calibrate_batchnorm(model, synthetic_batch(cfg.input_side, n=8, seed=seed + 1)["image"])
    grads = analytic_gradients(model, batch, weights, cfg.reduction)
    params = dict(model.named_parameters())
    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    monitor = KinkMonitor(model)
    f = lambda: _loss(model, batch, weights, cfg.reduction).item()  # noqa: E731
    try:
        with torch.no_grad():
            for name, index in _choose(model, n_samples, rng):
                flat = params[name].view(-1)
                numeric, used = central_difference(f, flat, index, step, monitor)
                analytic = grads[name].view(-1)[index].item()
                report.entries.append(GradEntry(name, index, analytic, numeric, used))
    finally:
        monitor.close()
    bad = [e for e in report.entries if e.rel_err > FAIL_TOL]
    if bad:
        listing = ", ".join(f"{e.param}[{e.index}] ({e.rel_err:.2e})" for e in bad[:10])
        raise GradCheckError(f"{len(bad)} gradients disagree beyond {FAIL_TOL}: {listing}")
    return report
