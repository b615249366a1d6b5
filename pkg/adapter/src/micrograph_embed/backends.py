"""Embedding backends: pre-trained checkpoints and an offline stand-in.

The `clip` and `flava` backends wrap the published checkpoints through
transformers and run inference on CPU in eval mode, which is
deterministic for identical inputs. The `hashed` backend derives a
pseudo-embedding from a content digest: it has no semantics but keeps
every interchange contract (unit norm, stable dims, determinism), so
pipelines can be exercised on machines without model weights.
"""

from __future__ import annotations

import hashlib

import numpy as np

# dims the hashed backend mimics per model
HASHED_DIMS = {"clip": (512, 512), "flava": (768, 768)}


class BackendError(RuntimeError):
    pass


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise BackendError("backend produced a zero vector")
    return v / n


class HashedBackend:
    """Deterministic content-digest featurizer; no checkpoint required."""

    name = "hashed"
    pooling = "content-digest"

    def __init__(self, model: str):
        if model not in HASHED_DIMS:
            raise BackendError(f"hashed backend has no dim profile for model {model!r}")
        self.model = model
        self.vision_dim, self.text_dim = HASHED_DIMS[model]
        self.checkpoint = f"hashed/{model}-v1"
        self.preprocessing = "raw-bytes-sha256"

    def _vector(self, payload: bytes, space: str, dim: int) -> np.ndarray:
        digest = hashlib.sha256(self.model.encode() + b"\0" + space.encode() + b"\0" + payload)
        seed = int.from_bytes(digest.digest()[:8], "big")
        rng = np.random.default_rng(seed)
        return l2_normalize(rng.standard_normal(dim))

    def embed_image(self, path) -> np.ndarray:
        with open(path, "rb") as f:
            return self._vector(f.read(), "vision", self.vision_dim)

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(text.encode("utf-8"), "text", self.text_dim)


class ClipBackend:
    """CLIP image/text features from the contrastive projection heads."""

    name = "clip"
    pooling = "projection-head"

    def __init__(self, model: str = "clip", checkpoint: str = "openai/clip-vit-base-patch32"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BackendError(f"clip backend needs torch+transformers: {exc}") from None
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise BackendError(f"cannot load checkpoint {checkpoint!r}: {exc}") from None
        self._torch = torch
        self._model.eval()
        self.model = model
        self.checkpoint = checkpoint
        self.vision_dim = self._model.config.projection_dim
        self.text_dim = self._model.config.projection_dim
        self.preprocessing = f"{checkpoint} processor defaults"

    def embed_image(self, path) -> np.ndarray:
        from PIL import Image

        image = Image.open(path).convert("RGB")
        inputs = self._processor(images=image, return_tensors="pt")
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return l2_normalize(features[0].numpy())

    def embed_text(self, text: str) -> np.ndarray:
        inputs = self._processor(text=[text], return_tensors="pt", padding=True, truncation=True)
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return l2_normalize(features[0].numpy())


class FlavaBackend:
    """FLAVA unimodal encoders, pooled at [CLS] through the contrastive
    projection heads (the fused multimodal path is deliberately not used)."""

    name = "flava"
    pooling = "cls-projection-head"

    def __init__(self, model: str = "flava", checkpoint: str = "facebook/flava-full"):
        try:
            import torch
            from transformers import FlavaModel, FlavaProcessor
        except ImportError as exc:
            raise BackendError(f"flava backend needs torch+transformers: {exc}") from None
        try:
            self._model = FlavaModel.from_pretrained(checkpoint)
            self._processor = FlavaProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise BackendError(f"cannot load checkpoint {checkpoint!r}: {exc}") from None
        self._torch = torch
        self._model.eval()
        self.model = model
        self.checkpoint = checkpoint
        dim = getattr(self._model.config, "projection_dim", None)
        self.vision_dim = dim or self._model.config.image_config.hidden_size
        self.text_dim = dim or self._model.config.text_config.hidden_size
        self.preprocessing = f"{checkpoint} processor defaults"

    def embed_image(self, path) -> np.ndarray:
        from PIL import Image

        image = Image.open(path).convert("RGB")
        inputs = self._processor(images=image, return_tensors="pt")
        with self._torch.no_grad():
            hidden = self._model.get_image_features(**inputs)
            cls = hidden[:, 0, :]
            projection = getattr(self._model, "image_projection", None)
            features = projection(cls) if projection is not None else cls
        return l2_normalize(features[0].numpy())

    def embed_text(self, text: str) -> np.ndarray:
        inputs = self._processor(text=[text], return_tensors="pt", padding=True, truncation=True)
        with self._torch.no_grad():
            hidden = self._model.get_text_features(**inputs)
            cls = hidden[:, 0, :]
            projection = getattr(self._model, "text_projection", None)
            features = projection(cls) if projection is not None else cls
        return l2_normalize(features[0].numpy())


BACKENDS = {
    "hashed": HashedBackend,
    "clip": lambda model: ClipBackend(model=model),
    "flava": lambda model: FlavaBackend(model=model),
}


def load_backend(backend: str, model: str):
    """backend='auto' picks the checkpoint backend matching the model name."""
    if backend == "auto":
        backend = model if model in ("clip", "flava") else "hashed"
    if backend == "hashed":
        return HashedBackend(model)
    if backend == "clip":
        return ClipBackend(model=model)
    if backend == "flava":
        return FlavaBackend(model=model)
    raise BackendError(f"unknown backend {backend!r}")
