"""Export support/proposal region features to CDFE files with sidecars.

The on-disk contract (shared with the matching toolkit, not imported from
it): binary file = magic b"CDFE" + u32 version(1) + u32 count + u32 dim +
count*dim float32 little-endian; sidecar ``<file>.idx.json`` holds
{"version", "kind", "metadata", "entries": [{entry_id, image_id, bbox,
category_id?}, ...]} with entries in payload order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .crops import crop_region, load_image
from .manifest import ExportManifest

MAGIC = b"CDFE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_cdfe(
    path: str | Path,
    vectors: np.ndarray,
    entries: list[dict],
    kind: str,
    manifest: ExportManifest,
) -> None:
    path = Path(path)
    vectors = np.asarray(vectors, dtype="<f4")
    count = vectors.shape[0]
    dim = manifest.dim
    if count and vectors.shape[1] != dim:
        raise ValueError(f"payload dim {vectors.shape[1]} != manifest dim {dim}")
    if len(entries) != count:
        raise ValueError(f"{len(entries)} sidecar entries for {count} vectors")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_HEADER.pack(MAGIC, FORMAT_VERSION, count, dim) + vectors.tobytes())
    sidecar = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "metadata": manifest.to_dict(),
        "entries": entries,
    }
    path.with_name(path.name + ".idx.json").write_text(
        json.dumps(sidecar, sort_keys=True, separators=(",", ":"))
    )


def _load_json(path: str | Path):
    return json.loads(Path(path).read_text())


def export_support(
    coco_path: str | Path,
    images_dir: str | Path,
    manifest: ExportManifest,
    out_path: str | Path,
    backbone,
    batch_size: int = 32,
) -> int:
    """One embedding per annotation, entry_id = annotation id.

    Annotations are processed in ascending id order so repeated exports with
    the same manifest and weights produce identical files. Returns the number
    of embeddings written.
    """
    doc = _load_json(coco_path)
    images = {im["id"]: im for im in doc.get("images", [])}
    annotations = sorted(doc.get("annotations", []), key=lambda a: a["id"])
    records = [
        (int(a["id"]), int(a["image_id"]), tuple(map(float, a["bbox"])), a.get("category_id"))
        for a in annotations
    ]

    def image_file(image_id: int) -> Path:
        return Path(images_dir) / images[image_id]["file_name"]

    vectors, entries = _embed_records(records, image_file, manifest, backbone, batch_size)
    write_cdfe(out_path, vectors, entries, "support", manifest)
    return len(entries)


def export_proposals(
    proposals_path: str | Path,
    images_dir: str | Path,
    manifest: ExportManifest,
    out_path: str | Path,
    backbone,
    image_files: dict[int, str] | None = None,
    batch_size: int = 32,
) -> int:
    """One embedding per proposal, entry_id = ordinal position in the array.

    Proposals arrive as a COCO results array; ``image_files`` maps image id
    to file name when the proposals file has no images table of its own
    (image id as a zero-padded png name is the fallback).
    """
    doc = _load_json(proposals_path)
    records = [
        (i, int(p["image_id"]), tuple(map(float, p["bbox"])), None)
        for i, p in enumerate(doc)
    ]

    def image_file(image_id: int) -> Path:
        if image_files and image_id in image_files:
            return Path(images_dir) / image_files[image_id]
        return Path(images_dir) / f"{image_id:012d}.png"

    vectors, entries = _embed_records(records, image_file, manifest, backbone, batch_size)
    write_cdfe(out_path, vectors, entries, "proposal", manifest)
    return len(entries)


def _embed_records(records, image_file, manifest: ExportManifest, backbone, batch_size: int):
    image_cache: dict[int, np.ndarray] = {}
    vectors = np.zeros((len(records), manifest.dim), dtype=np.float32)
    entries: list[dict] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        crops = []
        for _, image_id, bbox, _ in chunk:
            if image_id not in image_cache:
                image_cache[image_id] = load_image(image_file(image_id))
            crops.append(
                crop_region(image_cache[image_id], bbox, manifest.crop_pad_frac, manifest.resize)
            )
        vectors[start : start + len(chunk)] = backbone.embed_batch(crops)
    for entry_id, image_id, bbox, category_id in records:
        rec = {"entry_id": entry_id, "image_id": image_id, "bbox": list(bbox)}
        if category_id is not None:
            rec["category_id"] = int(category_id)
        entries.append(rec)
    return vectors, entries
