"""Export manifest: the provenance record written verbatim into the sidecar."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class ExportManifest:
    """Everything needed to reproduce an export run.

    ``created`` is fixed at manifest construction, so re-exporting with the
    same manifest object yields byte-identical sidecar metadata.
    """

    backbone: str
    weights_hash: str
    dim: int
    crop_pad_frac: float = 0.1
    resize: int = 64
    pooling: str = "mean-patch"
    created: str = field(default_factory=_now)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.crop_pad_frac < 0:
            raise ValueError("crop_pad_frac must be >= 0")
        if self.resize <= 0:
            raise ValueError("resize must be positive")
        if self.pooling not in ("mean-patch", "cls-token"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    def to_dict(self) -> dict:
        return asdict(self)
