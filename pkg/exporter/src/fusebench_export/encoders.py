"""Image/text encoders the exporter can drive.

Any object with ``name``, ``dim``, ``encode_images(images) -> (n, dim)
float32`` and ``encode_texts(texts) -> (n, dim) float32`` works.  The
exporter serializes raw encoder outputs; it never normalizes or
projects them.
"""

from __future__ import annotations

import hashlib

import numpy as np


class ClipEncoder:
    """Pretrained CLIP via transformers (requires the ``clip`` extra).

    The model identifier is any CLIP checkpoint name transformers can
    load, e.g. ``openai/clip-vit-large-patch14`` for 768-wide joint
    embeddings.
    """

    def __init__(self, model_name: str, batch_size: int = 16):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ImportError(
                "ClipEncoder needs the optional 'clip' dependencies: "
                "pip install 'fusebench-export[clip]'"
            ) from exc
        self._torch = torch
        self.name = model_name
        self.batch_size = batch_size
        self._model = CLIPModel.from_pretrained(model_name)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(model_name)
        self.dim = int(self._model.config.projection_dim)

    def _batched(self, items, encode_one_batch):
        chunks = []
        for lo in range(0, len(items), self.batch_size):
            chunks.append(encode_one_batch(items[lo : lo + self.batch_size]))
        return np.vstack(chunks).astype(np.float32)

    def encode_images(self, images) -> np.ndarray:
        def run(batch):
            inputs = self._processor(images=batch, return_tensors="pt")
            with self._torch.no_grad():
                out = self._model.get_image_features(**inputs)
            return out.cpu().numpy()

        return self._batched(list(images), run)

    def encode_texts(self, texts) -> np.ndarray:
        def run(batch):
            inputs = self._processor(text=list(batch), return_tensors="pt",
                                     padding=True, truncation=True)
            with self._torch.no_grad():
                out = self._model.get_text_features(**inputs)
            return out.cpu().numpy()

        return self._batched(list(texts), run)


class HashEncoder:
    """Deterministic offline encoder for smoke tests and plumbing checks.

    Embeds each input as a seeded Gaussian vector keyed by a SHA-256 of
    its content (pixel bytes for images, UTF-8 for text).  Carries no
    semantics; it exists so the full export pipeline can run without a
    model checkpoint.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.name = f"hash:{self.dim}"

    def _vector(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
        gen = np.random.Generator(np.random.PCG64(seed))
        return gen.standard_normal(self.dim).astype(np.float32)

    def encode_images(self, images) -> np.ndarray:
        rows = []
        for image in images:
            rgb = image.convert("RGB")
            rows.append(self._vector(rgb.tobytes() + bytes(str(rgb.size), "utf-8")))
        return np.stack(rows)

    def encode_texts(self, texts) -> np.ndarray:
        return np.stack([self._vector(t.encode("utf-8")) for t in texts])


def make_encoder(model_name: str, batch_size: int = 16):
    """CLI factory: ``hash:<dim>`` is the offline encoder, anything else
    is treated as a transformers CLIP checkpoint name."""
    if model_name.startswith("hash:"):
        return HashEncoder(int(model_name.split(":", 1)[1]))
    return ClipEncoder(model_name, batch_size=batch_size)
