"""Dataset layout, sample loading, edge ground truth and augmentation.

Directory layout (files matched by stem)::

    <root>/<split>/RGB/*.jpg|png
    <root>/<split>/depth/*.png      8- or 16-bit, optional for test splits
    <root>/<split>/GT/*.png
"""

import contextlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import cv2
import numpy as np
import torch

from .backbone import normalize_image
from .errors import DepthAccessError, IngestionError, ValidationError

log = logging.getLogger(__name__)

RGB_DIR, DEPTH_DIR, GT_DIR = "RGB", "depth", "GT"
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")
MASK_THRESHOLD = 128
CANNY_LOW, CANNY_HIGH = 100, 200
CROP_AREA_RANGE = (0.875, 1.0)


# -- IO with a depth guard -------------------------------------------------

_guard = {"active": False}
read_log = {"rgb": 0, "depth": 0, "gt": 0}


@contextlib.contextmanager
def depth_free():
    """Inside this block any attempt to read a depth file raises DepthAccessError."""
    previous = _guard["active"]
    _guard["active"] = True
    try:
        yield
    finally:
        _guard["active"] = previous


def read_image(path, kind):
    """Decode an image file. ``kind`` is one of rgb/depth/gt and selects decoding."""
    path = Path(path)
    if kind == "depth" or path.parent.name == DEPTH_DIR:
        if _guard["active"]:
            raise DepthAccessError(f"depth read attempted on a depth-free path: {path}")
    if not path.is_file():
        raise IngestionError(f"missing file: {path}")
    flags = {"rgb": cv2.IMREAD_COLOR, "depth": cv2.IMREAD_UNCHANGED, "gt": cv2.IMREAD_UNCHANGED}[kind]
    img = cv2.imread(str(path), flags)
    if img is None:
        raise IngestionError(f"cannot decode image: {path}")
    read_log[kind] += path.stat().st_size
    if kind == "rgb":
        return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    if img.ndim == 3:
        img = img[..., 0] if img.shape[2] == 1 else cv2.cvtColor(img[..., :3], cv2.COLOR_BGR2GRAY)
    return img


# -- manifest --------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    id: str
    rgb: str
    depth: Optional[str]
    gt: str


@dataclass
class DatasetManifest:
    root: str
    split: str
    records: List[Record] = field(default_factory=list)
    invert_depth: bool = False

    def __len__(self):
        return len(self.records)

    def save(self, path):
        """Line-oriented cache: one tab-separated ``id rgb depth gt`` triple per line."""
        lines = [f"# root={self.root} split={self.split} invert_depth={int(self.invert_depth)}"]
        for r in self.records:
            lines.append("\t".join([r.id, r.rgb, r.depth or "-", r.gt]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text().splitlines()
        head = dict(kv.split("=", 1) for kv in text[0].lstrip("# ").split())
        records = []
        for line in text[1:]:
            if not line.strip():
                continue
            rid, rgb, depth, gt = line.split("\t")
            records.append(Record(rid, rgb, None if depth == "-" else depth, gt))
        return cls(head["root"], head["split"], records, bool(int(head["invert_depth"])))

    def without_depth(self):
        return replace(self, records=[replace(r, depth=None) for r in self.records])


def _stems(directory):
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def build_manifest(root, split, with_depth=True, require_depth=False, invert_depth=False):
    """Scan ``<root>/<split>`` and pair RGB, depth and GT files by stem (sorted by id)."""
    base = Path(root) / split
    rgbs = _stems(base / RGB_DIR)
    gts = _stems(base / GT_DIR)
    depths = _stems(base / DEPTH_DIR) if with_depth else {}
    if not rgbs:
        raise IngestionError(f"no RGB images under {base / RGB_DIR}")
    records = []
    for stem in sorted(rgbs):
        if stem not in gts:
            raise IngestionError(f"no ground truth for {rgbs[stem]}")
        depth = depths.get(stem)
        if require_depth and depth is None:
            raise IngestionError(f"no depth map for training sample {rgbs[stem]}")
        records.append(Record(stem, str(rgbs[stem]), str(depth) if depth else None, str(gts[stem])))
    return DatasetManifest(str(root), split, records, invert_depth)


# -- per-sample processing ---------------------------------------------------

@dataclass
class SaliencySample:
    id: str
    rgb: np.ndarray            # HxWx3 uint8
    sal_gt: np.ndarray         # HxW uint8 in {0, 1}
    edge_gt: np.ndarray        # HxW uint8 in {0, 1}
    depth_gt: Optional[np.ndarray] = None  # HxW float32 in [0, 1]


def binarize_mask(mask):
    """8-bit (or 16-bit) ground truth -> {0, 1} at the midpoint threshold."""
    mask = np.asarray(mask)
    if mask.dtype == np.uint16:
        mask = (mask >> 8).astype(np.uint8)
    return (mask >= MASK_THRESHOLD).astype(np.uint8)


def _as_8bit_binary(mask):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        return mask.astype(np.uint8) * 255
    values = np.unique(mask)
    if np.isin(values, (0, 1)).all():
        return (mask == 1).astype(np.uint8) * 255
    if np.isin(values, (0, 255)).all():
        return (mask == 255).astype(np.uint8) * 255
    raise ValidationError(f"mask must be binary ({{0,1}} or {{0,255}}), found values {values[:6]}")


def derive_edge_gt(sal_gt):
    """Canny edges of a binary mask, as a {0, 1} uint8 map."""
    edges = cv2.Canny(_as_8bit_binary(sal_gt), CANNY_LOW, CANNY_HIGH)
    return (edges > 0).astype(np.uint8)


def normalize_depth(depth, invert=False, name=""):
    depth = np.asarray(depth, dtype=np.float32)
    lo, hi = float(depth.min()), float(depth.max())
    if hi <= lo:
        log.warning("constant depth map %s normalised to zeros", name)
        return np.zeros_like(depth)
    out = (depth - lo) / (hi - lo)
    return 1.0 - out if invert else out


def _resize(img, side, nearest=False):
    interp = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    if img.shape[:2] == (side, side):
        return img
    return cv2.resize(img, (side, side), interpolation=interp)


def load_sample(record: Record, target_side=256, load_depth=True, invert_depth=False):
    rgb = _resize(read_image(record.rgb, "rgb"), target_side)
    sal = _resize(binarize_mask(read_image(record.gt, "gt")), target_side, nearest=True)
    depth = None
    if load_depth and record.depth is not None:
        raw = read_image(record.depth, "depth").astype(np.float32)
        depth = normalize_depth(_resize(raw, target_side), invert_depth, record.depth)
    return SaliencySample(record.id, rgb, sal, derive_edge_gt(sal), depth)


# -- augmentation ------------------------------------------------------------

@dataclass(frozen=True)
class GeometricTransform:
    flip: bool
    crop: tuple   # (y0, x0, size) on the square input
    rot90: int    # counter-clockwise quarter turns

    def apply(self, img, nearest=False):
        side = img.shape[0]
        if self.flip:
            img = img[:, ::-1]
        y0, x0, size = self.crop
        img = _resize(np.ascontiguousarray(img[y0:y0 + size, x0:x0 + size]), side, nearest)
        return np.ascontiguousarray(np.rot90(img, self.rot90))


def sample_transform(side, seed, p_flip=0.5):
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < p_flip)
    area = rng.uniform(*CROP_AREA_RANGE)
    size = min(side, max(1, int(round(side * np.sqrt(area)))))
    y0 = int(rng.integers(0, side - size + 1))
    x0 = int(rng.integers(0, side - size + 1))
    return GeometricTransform(flip, (y0, x0, size), int(rng.integers(0, 4)))


def augment(sample: SaliencySample, seed, p_flip=0.5, transform=None):
    """Random flip / crop / right-angle rotation, shared by every map.

    Returns ``(augmented_sample, transform)``; edge_gt is re-derived afterwards.
    """
    t = transform or sample_transform(sample.rgb.shape[0], seed, p_flip)
    sal = t.apply(sample.sal_gt, nearest=True)
    depth = None if sample.depth_gt is None else t.apply(sample.depth_gt)
    out = SaliencySample(sample.id, t.apply(sample.rgb), sal, derive_edge_gt(sal), depth)
    return out, t


# -- torch dataset -------------------------------------------------------------

class SaliencyDataset(torch.utils.data.Dataset):
    """Training/evaluation dataset over a manifest.

    When ``augment_seed`` is set, item ``i`` of epoch ``e`` is augmented with
    a seed derived from (augment_seed, e, i), so runs are reproducible.
    """

    def __init__(self, manifest, target_side=256, load_depth=True, augment_seed=None,
                 pretrained_norm=False):
        self.manifest = manifest
        self.target_side = target_side
        self.load_depth = load_depth
        self.augment_seed = augment_seed
        self.pretrained_norm = pretrained_norm
        self.epoch = 0
        self._cache = {}

    def __len__(self):
        return len(self.manifest)

    def sample(self, index):
        if index not in self._cache:
            self._cache[index] = load_sample(
                self.manifest.records[index], self.target_side, self.load_depth,
                self.manifest.invert_depth,
            )
        return self._cache[index]

    def __getitem__(self, index):
        s = self.sample(index)
        if self.augment_seed is not None:
            s, _ = augment(s, seed=(self.augment_seed, self.epoch, index))
        item = {
            "id": s.id,
            "image": normalize_image(s.rgb, self.pretrained_norm)[0],
            "sal": torch.from_numpy(s.sal_gt).float()[None],
            "edge": torch.from_numpy(s.edge_gt).float()[None],
        }
        if s.depth_gt is not None:
            item["depth"] = torch.from_numpy(np.ascontiguousarray(s.depth_gt)).float()[None]
        return item
