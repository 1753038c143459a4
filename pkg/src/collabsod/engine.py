"""Training, evaluation and inference loops."""

import logging
import random
import time
from pathlib import Path

import cv2
import numpy as np
import torch

from .backbone import normalize_image
from .checkpoint import Checkpoint, restore_model, snapshot
from .config import RunConfig
from .data import (
    SaliencyDataset,
    build_manifest,
    depth_free,
    read_image,
)
from .errors import ConfigError, IngestionError, NonFiniteLossError
from .losses import LossBreakdown, bce_loss, smooth_l1_depth_loss, total_loss
from .metrics import MetricAccumulator, MetricReport, write_pr_csv
from .network import build_network
from .plotting import plot_loss_history, plot_pr_curve

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.safetensors"
LOG_NAME = "train.log"
LOSS_TERMS = ("edge", "coarse", "depth", "final")


def seed_everything(seed):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _dtype(cfg):
    return torch.float64 if cfg.precision == "float64" else torch.float32


def compute_losses(out, batch, weights, reduction="mean") -> LossBreakdown:
    """Loss terms for whatever heads the network has; absent heads contribute 0."""
    zero = out.s_final.new_zeros(())
    sal = batch["sal"].to(out.s_final.dtype)
    edge = coarse = depth = zero
    if out.m_edge is not None:
        edge = bce_loss(out.m_edge, batch["edge"].to(sal.dtype), reduction)
    if out.s_coarse is not None:
        coarse = coarse + bce_loss(out.s_coarse, sal, reduction)
    if out.s_low is not None:
        coarse = coarse + bce_loss(out.s_low, sal, reduction)
    if out.att_depth is not None:
        if "depth" not in batch:
            raise IngestionError("depth supervision enabled but batch has no depth maps")
        depth = smooth_l1_depth_loss(out.att_depth, batch["depth"].to(sal.dtype), reduction)
    final = bce_loss(out.s_final, sal, reduction)
    total = total_loss(edge, coarse, depth, final, weights)
    return LossBreakdown(edge, coarse, depth, final, total)


def _check_finite(losses: LossBreakdown, epoch, step):
    for name in LOSS_TERMS + ("total",):
        value = getattr(losses, name)
        if not torch.isfinite(value):
            raise NonFiniteLossError(
                f"loss term '{name}' became {float(value.detach())} at epoch {epoch} step {step}"
            )


def train(cfg: RunConfig, on_step=None) -> Checkpoint:
    """SGD training; writes train.log, checkpoint.safetensors and loss.png into cfg.out_dir."""
    if not cfg.train_data:
        raise ConfigError("train_data is not set")
    seed_everything(cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    toggles = cfg.toggles()
    manifest = build_manifest(
        cfg.train_data, "train", with_depth=toggles.use_depth,
        require_depth=toggles.use_depth, invert_depth=cfg.invert_depth,
    )
    dataset = SaliencyDataset(
        manifest, cfg.input_side, load_depth=toggles.use_depth,
        augment_seed=cfg.seed if cfg.augment else None,
        pretrained_norm=bool(cfg.pretrained_weights_path),
    )
    gen = torch.Generator().manual_seed(cfg.seed)
    loader = torch.utils.data.DataLoader(
        dataset, batch_size=cfg.batch_size, shuffle=True, generator=gen, num_workers=0,
    )

    dtype = _dtype(cfg)
    model = build_network(cfg.backbone_config(), toggles, cfg.seed, dtype).train()
    opt = torch.optim.SGD(
        model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    weights = cfg.loss_weights()
    history = []
    step = 0
    ckpt_path = out_dir / CHECKPOINT_NAME
    ckpt = snapshot(model, cfg, 0, history)

    with open(out_dir / LOG_NAME, "w") as log_fh:
        for epoch in range(1, cfg.epochs + 1):
            dataset.epoch = epoch
            sums = dict.fromkeys(LOSS_TERMS + ("total",), 0.0)
            n_batches = 0
            for batch in loader:
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
                image = batch["image"].to(dtype)
                out = model(image)
                losses = compute_losses(out, batch, weights, cfg.reduction)
                _check_finite(losses, epoch, step)
                opt.zero_grad(set_to_none=True)
                losses.total.backward()
                opt.step()
                step += 1
                n_batches += 1
                values = losses.as_floats()
                for k in sums:
                    sums[k] += values[k]
                log_fh.write(
                    f"epoch={epoch} step={step} "
                    + " ".join(f"{k}={values[k]!r}" for k in LOSS_TERMS + ("total",))
                    + "\n"
                )
                if on_step is not None:
                    on_step(step, values)
            if n_batches == 0:
                break
            history.append({k: v / n_batches for k, v in sums.items()})
            log.info("epoch %d: %s", epoch, history[-1])
            ckpt = snapshot(model, cfg, epoch, history)
            ckpt.save(ckpt_path)
    ckpt.save(ckpt_path)
    if history:
        plot_loss_history(history, out_dir / "loss.png")
    return ckpt


def _restore(ckpt):
    ckpt = ckpt if isinstance(ckpt, Checkpoint) else Checkpoint.load(ckpt)
    model, cfg = restore_model(ckpt)
    pretrained_norm = bool(ckpt.config.get("pretrained_weights_path"))
    return model, cfg, pretrained_norm


@torch.no_grad()
def predict(model, rgb, dtype=torch.float32, pretrained_norm=False):
    """uint8 HxWx3 (already at input_side) -> float64 HxW saliency in [0, 1]."""
    x = normalize_image(rgb, pretrained_norm).to(dtype)
    return model(x).s_final[0, 0].double().numpy()


def evaluate(ckpt, data_root, split="test", out_dir=None, bypass_with_gt=False,
             e_binarize=True, pooled_pr=False):
    """Score a checkpoint on ``<data_root>/<split>``; RGB + GT only, depth never read."""
    model, cfg, pretrained_norm = _restore(ckpt)
    acc = MetricAccumulator(e_binarize=e_binarize, pooled_pr=pooled_pr)
    latencies = []
    with depth_free():
        manifest = build_manifest(data_root, split, with_depth=False)
        dataset = SaliencyDataset(manifest, cfg.input_side, load_depth=False)
        for i in range(len(dataset)):
            sample = dataset.sample(i)
            if bypass_with_gt:
                pred = sample.sal_gt.astype(np.float64)
            else:
                t0 = time.perf_counter()
                pred = predict(model, sample.rgb, _dtype(cfg), pretrained_norm)
                latencies.append(time.perf_counter() - t0)
            acc.add(pred, sample.sal_gt, sample.id)
    report = acc.report()
    if latencies:
        log.info("mean inference latency %.4fs over %d images", np.mean(latencies), len(latencies))
    if out_dir is not None:
        report.write(out_dir)
        plot_pr_curve(report.pr_curve, Path(out_dir) / "metrics_pr.png", label=split)
    return report


def infer(ckpt, image_path, out_path):
    """Write an 8-bit saliency map for one RGB image, at the image's own resolution."""
    model, cfg, pretrained_norm = _restore(ckpt)
    with depth_free():
        rgb = read_image(image_path, "rgb")
    h, w = rgb.shape[:2]
    side = cfg.input_side
    resized = cv2.resize(rgb, (side, side), interpolation=cv2.INTER_LINEAR)
    pred = predict(model, resized, _dtype(cfg), pretrained_norm)
    if not np.all(np.isfinite(pred)):
        raise RuntimeError(f"non-finite prediction for {image_path}")
    if (h, w) != (side, side):
        pred = cv2.resize(pred, (w, h), interpolation=cv2.INTER_LINEAR)
    out = np.clip(np.rint(pred * 255.0), 0, 255).astype(np.uint8)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(out_path), out):
        raise IOError(f"could not write {out_path}")
    return out_path


def export_pr(report_path, out_csv, out_plot):
    report = MetricReport.read(report_path)
    curve = np.asarray(report.pr_curve)
    if curve.size == 0:
        raise ValueError(f"report {report_path} has an empty PR curve")
    write_pr_csv(curve, out_csv)
    plot_pr_curve(curve, out_plot)
    return Path(out_csv), Path(out_plot)

