"""Turn an image directory plus captions CSV into aligned FEAT files.

Image files are named ``<id>.<ext>`` with integer ids; every image must
have a caption row, and both embedding files come out in ascending id
order.  An image that cannot be decoded is skipped with a warning and
its id is dropped from every output, including the optional label
passthrough.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .featfile import write_feat

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass
class ExportManifest:
    images_dir: str
    captions_path: str
    model_name: str
    out_image_feat: str
    out_text_feat: str
    labels_in: str | None = None
    out_labels: str | None = None


@dataclass
class ExportSummary:
    n: int
    dim: int
    model_name: str
    image_norm_range: tuple[float, float]
    text_norm_range: tuple[float, float]
    skipped_ids: list[int] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"model: {self.model_name}",
            f"samples: {self.n}",
            f"dim: {self.dim}",
            f"image norms: [{self.image_norm_range[0]:.4f}, {self.image_norm_range[1]:.4f}]",
            f"text norms: [{self.text_norm_range[0]:.4f}, {self.text_norm_range[1]:.4f}]",
        ]
        if self.skipped_ids:
            out.append(f"skipped undecodable ids: {sorted(self.skipped_ids)}")
        return out


def read_captions(path: str) -> dict[int, str]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["id", "caption"]:
            raise ValueError(f"{path}: expected header 'id,caption'")
        captions: dict[int, str] = {}
        for row in reader:
            if not row:
                continue
            sample_id = int(row[0])
            if sample_id in captions:
                raise ValueError(f"{path}: duplicate id {sample_id}")
            captions[sample_id] = row[1] if len(row) > 1 else ""
    return captions


def _discover_images(images_dir: str) -> dict[int, str]:
    found: dict[int, str] = {}
    for name in sorted(os.listdir(images_dir)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in IMAGE_EXTENSIONS:
            continue
        try:
            sample_id = int(stem)
        except ValueError:
            raise ValueError(f"image file name must be '<integer id>.<ext>': {name}")
        if sample_id in found:
            raise ValueError(f"duplicate image id {sample_id} in {images_dir}")
        found[sample_id] = os.path.join(images_dir, name)
    if not found:
        raise ValueError(f"no images found in {images_dir}")
    return found


def _norm_range(features: np.ndarray) -> tuple[float, float]:
    norms = np.sqrt((features.astype(np.float64) ** 2).sum(axis=1))
    return float(norms.min()), float(norms.max())


def _passthrough_labels(labels_in: str, out_labels: str, keep_ids: list[int]) -> None:
    with open(labels_in, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "id,labels":
        raise ValueError(f"{labels_in}: expected header 'id,labels'")
    by_id = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        head, _, tail = line.partition(",")
        by_id[int(head)] = tail
    missing = [i for i in keep_ids if i not in by_id]
    if missing:
        raise ValueError(f"{labels_in}: no label row for exported ids {missing}")
    with open(out_labels, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,labels\n")
        for sample_id in keep_ids:
            fh.write(f"{sample_id},{by_id[sample_id]}\n")


def export_embeddings(manifest: ExportManifest, encoder) -> ExportSummary:
    """Encode every decodable image/caption pair and write FEAT files."""
    captions = read_captions(manifest.captions_path)
    image_paths = _discover_images(manifest.images_dir)

    uncaptioned = sorted(set(image_paths) - set(captions))
    if uncaptioned:
        raise ValueError(f"images without caption rows: {uncaptioned}")

    ids: list[int] = []
    images: list[Image.Image] = []
    skipped: list[int] = []
    for sample_id in sorted(image_paths):
        try:
            with Image.open(image_paths[sample_id]) as img:
                images.append(img.convert("RGB"))
        except Exception as exc:
            warnings.warn(f"skipping undecodable image id {sample_id}: {exc}",
                          stacklevel=2)
            skipped.append(sample_id)
            continue
        ids.append(sample_id)
    if not ids:
        raise ValueError("no decodable images to export")

    image_feats = np.asarray(encoder.encode_images(images), dtype=np.float32)
    text_feats = np.asarray(encoder.encode_texts([captions[i] for i in ids]),
                            dtype=np.float32)
    if image_feats.shape != (len(ids), encoder.dim):
        raise ValueError(f"encoder returned image shape {image_feats.shape}")
    if text_feats.shape != (len(ids), encoder.dim):
        raise ValueError(f"encoder returned text shape {text_feats.shape}")

    write_feat(manifest.out_image_feat, ids, image_feats)
    write_feat(manifest.out_text_feat, ids, text_feats)
    if manifest.labels_in is not None:
        if manifest.out_labels is None:
            raise ValueError("labels_in given but out_labels missing")
        _passthrough_labels(manifest.labels_in, manifest.out_labels, ids)

    return ExportSummary(
        n=len(ids),
        dim=int(encoder.dim),
        model_name=encoder.name,
        image_norm_range=_norm_range(image_feats),
        text_norm_range=_norm_range(text_feats),
        skipped_ids=skipped,
    )
