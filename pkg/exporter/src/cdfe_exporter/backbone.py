"""Vision backbones behind a tiny batch-embedding interface.

The stub backbone maps each crop to a deterministic unit vector derived from
a SHA-256 hash of its pixels. It has no semantics, but it is reproducible on
any machine with no model weights, which is exactly what the cross-component
contract tests need. The torchvision backbone is optional and only usable
when weights are available locally.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .errors import BackboneFailureError


class StubBackbone:
    """Hash-derived deterministic embeddings."""

    name = "stub-sha256"
    weights_hash = "stub"

    def __init__(self, dim: int = 16):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed_batch(self, crops: list[np.ndarray]) -> np.ndarray:
        out = np.zeros((len(crops), self.dim), dtype=np.float32)
        for i, crop in enumerate(crops):
            out[i] = self._embed_one(np.ascontiguousarray(crop, dtype=np.uint8))
        return out

    def _embed_one(self, crop: np.ndarray) -> np.ndarray:
        base = hashlib.sha256(crop.tobytes() + str(crop.shape).encode())
        raw = bytearray()
        counter = 0
        while len(raw) < self.dim:
            h = base.copy()
            h.update(counter.to_bytes(4, "little"))
            raw.extend(h.digest())
            counter += 1
        vec = np.frombuffer(bytes(raw[: self.dim]), dtype=np.uint8).astype(np.float32)
        vec = vec / 127.5 - 1.0  # spread into [-1, 1]
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = np.ones(self.dim, dtype=np.float32)
            norm = float(np.linalg.norm(vec))
        return (vec / norm).astype(np.float32)


class TorchvisionBackbone:
    """Feature extractor over a torchvision classification trunk.

    Requires torch/torchvision and a locally available weights file; loading
    problems surface as BackboneFailureError. Features are the pooled trunk
    output ("mean-patch" equivalent for CNN trunks).
    """

    def __init__(self, model_name: str = "resnet18", weights_path: str | None = None):
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:  # pragma: no cover - env without torch
            raise BackboneFailureError(f"torch/torchvision unavailable: {exc}") from exc
        self._torch = torch
        try:
            ctor = getattr(tvm, model_name)
            model = ctor(weights=None)
            if weights_path:
                state = torch.load(weights_path, map_location="cpu")
                model.load_state_dict(state)
                self.weights_hash = _file_sha256(weights_path)
            else:
                self.weights_hash = "random-init"
        except Exception as exc:
            raise BackboneFailureError(f"cannot load backbone {model_name}: {exc}") from exc
        model.eval()
        # drop the classification head, keep pooled features
        self._model = torch.nn.Sequential(*list(model.children())[:-1])
        self.name = f"torchvision-{model_name}"
        with torch.no_grad():
            probe = torch.zeros(1, 3, 64, 64)
            self.dim = int(self._model(probe).flatten(1).shape[1])

    def embed_batch(self, crops: list[np.ndarray]) -> np.ndarray:
        torch = self._torch
        batch = np.stack([c.astype(np.float32) / 255.0 for c in crops]).transpose(0, 3, 1, 2)
        with torch.no_grad():
            feats = self._model(torch.from_numpy(batch)).flatten(1)
        return feats.numpy().astype(np.float32)


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def make_backbone(name: str, dim: int = 16, weights_path: str | None = None):
    if name == "stub":
        return StubBackbone(dim=dim)
    return TorchvisionBackbone(model_name=name, weights_path=weights_path)
