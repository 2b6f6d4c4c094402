"""Dataset discovery and loading for MVTec-style and MiAD-style trees.

Both layouts share the convention

    <root>/<category>/train/good/*.png
    <root>/<category>/test/<defect>/*.png
    <root>/<category>/ground_truth/<defect>/<stem>_mask.png

where ``test/good`` holds defect-free images without masks. MiAD trees use the
same structure; only the four surface-anomaly categories are supported there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import CategoryNotFound, DecodeError, EmptySplit, LayoutError, MaskMissing

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

MIAD_SURFACE_CLASSES = (
    "electrical_insulator",
    "metal_welding",
    "photovoltaic_module",
    "wind_turbine",
)

MVTEC_TEXTURE_CLASSES = ("carpet", "grid", "leather", "tile", "wood", "hazelnut")


@dataclass(frozen=True)
class Entry:
    """One indexed image; train entries have defect_type 'good' and no mask."""

    image_path: str
    defect_type: str = "good"
    mask_path: Optional[str] = None


@dataclass(frozen=True)
class DatasetIndex:
    dataset_kind: str  # "mvtec" | "miad"
    category: str
    train_entries: tuple[Entry, ...]
    test_entries: tuple[Entry, ...]
    target_image_size: int = 224

    def entries(self, split: str) -> tuple[Entry, ...]:
        if split == "train":
            return self.train_entries
        if split == "test":
            return self.test_entries
        raise ValueError(f"unknown split {split!r}")


@dataclass
class ImageSample:
    """Loaded image: (3, H, W) float32 pixels in [0, 1], optional binary mask.

    label is "anomalous" exactly when a mask with at least one positive pixel
    is present, "normal" otherwise.
    """

    pixels: torch.Tensor
    mask: Optional[torch.Tensor]
    label: str
    source_path: str


@dataclass
class Batch:
    pixels: torch.Tensor            # (B, 3, H, W)
    samples: list[ImageSample] = field(default_factory=list)


def _list_images(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _find_mask(gt_dir: Path, image_path: Path) -> Path:
    # MVTec names masks <stem>_mask.png; some trees keep the plain stem.
    for candidate in (gt_dir / f"{image_path.stem}_mask.png", gt_dir / f"{image_path.stem}.png"):
        if candidate.is_file():
            return candidate
    raise MaskMissing(f"no ground-truth mask for anomalous test image {image_path}")


def scan_dataset(root, kind: str, category: str, target_image_size: int = 224) -> DatasetIndex:
    """Walk one category tree and build a validated, lexicographically ordered index.

    Raises CategoryNotFound for a missing (or, for MiAD, unsupported) category
    and MaskMissing when an anomalous test image has no mask file.
    """
    root = Path(root)
    if kind not in ("mvtec", "miad"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    if kind == "miad" and category not in MIAD_SURFACE_CLASSES:
        raise CategoryNotFound(
            f"MiAD category {category!r} is not one of the supported surface classes "
            f"{MIAD_SURFACE_CLASSES}"
        )
    category_dir = root / category
    if not category_dir.is_dir():
        raise CategoryNotFound(f"category directory not found: {category_dir}")

    train_dir = category_dir / "train" / "good"
    train_entries = tuple(
        Entry(image_path=str(p)) for p in (_list_images(train_dir) if train_dir.is_dir() else [])
    )

    test_entries: list[Entry] = []
    test_dir = category_dir / "test"
    if test_dir.is_dir():
        for defect_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
            defect = defect_dir.name
            for image_path in _list_images(defect_dir):
                if defect == "good":
                    test_entries.append(Entry(str(image_path), defect_type="good"))
                else:
                    mask = _find_mask(category_dir / "ground_truth" / defect, image_path)
                    test_entries.append(Entry(str(image_path), defect_type=defect, mask_path=str(mask)))

    return DatasetIndex(
        dataset_kind=kind,
        category=category,
        train_entries=train_entries,
        test_entries=tuple(test_entries),
        target_image_size=target_image_size,
    )


def _nearest_resize_binary(mask: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor resample with pixel-center alignment, then re-binarize."""
    src_h, src_w = mask.shape
    rows = np.minimum((np.arange(size) + 0.5) * src_h / size, src_h - 1).astype(np.int64)
    cols = np.minimum((np.arange(size) + 0.5) * src_w / size, src_w - 1).astype(np.int64)
    return (mask[rows[:, None], cols[None, :]] > 0.5).astype(np.float32)


def load_sample(entry: Entry, target_image_size: int) -> ImageSample:
    """Decode, resize and normalize one indexed image (plus its mask, if any).

    Images are bilinearly resized to target x target and scaled to [0, 1];
    grayscale inputs are replicated to three channels. Masks are resampled
    with nearest neighbor and re-binarized at 0.5.
    """
    if target_image_size <= 0:
        raise ValueError(f"target_image_size must be positive, got {target_image_size}")
    path = Path(entry.image_path)
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            original_size = img.size  # (W, H)
            resized = img.resize((target_image_size, target_image_size), Image.BILINEAR)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    pixels = torch.from_numpy(
        np.asarray(resized, dtype=np.float32).transpose(2, 0, 1) / 255.0
    )

    mask_tensor: Optional[torch.Tensor] = None
    if entry.mask_path is not None:
        try:
            with Image.open(entry.mask_path) as m:
                mask_raw = np.asarray(m.convert("L"), dtype=np.float32) / 255.0
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            raise DecodeError(f"cannot decode mask {entry.mask_path}: {exc}") from exc
        if mask_raw.shape != (original_size[1], original_size[0]):
            raise LayoutError(
                f"mask {entry.mask_path} is {mask_raw.shape}, image {path} is "
                f"{(original_size[1], original_size[0])}"
            )
        mask_tensor = torch.from_numpy(_nearest_resize_binary(mask_raw, target_image_size))

    anomalous = mask_tensor is not None and bool((mask_tensor > 0).any())
    return ImageSample(
        pixels=pixels,
        mask=mask_tensor,
        label="anomalous" if anomalous else "normal",
        source_path=str(path),
    )


def batch_iter(
    index: DatasetIndex,
    split: str,
    batch_size: int,
    shuffle: bool = False,
    seed: int = 0,
) -> Iterator[Batch]:
    """Yield ceil(N / batch_size) batches covering the split exactly once.

    The visit order is the identity, or a permutation that is a pure function
    of ``seed`` when shuffling. Loading is sequential here; any future loader
    parallelism must preserve this order contract.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    entries = index.entries(split)
    if not entries:
        raise EmptySplit(f"split {split!r} of category {index.category!r} has no entries")

    order = np.arange(len(entries))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(entries))

    n_batches = math.ceil(len(entries) / batch_size)
    for b in range(n_batches):
        chunk = order[b * batch_size : (b + 1) * batch_size]
        samples = [load_sample(entries[i], index.target_image_size) for i in chunk]
        yield Batch(pixels=torch.stack([s.pixels for s in samples]), samples=samples)
