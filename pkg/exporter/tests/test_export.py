import json
import struct
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cdfe_exporter import (
    ExportManifest,
    MissingImageError,
    StubBackbone,
    crop_region,
    export_proposals,
    export_support,
)
from cdfe_exporter.cli import main

HEADER = struct.Struct("<4sIII")


def write_images(images_dir: Path, n: int, size=(96, 96), seed=0):
    rng = np.random.default_rng(seed)
    images_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(n):
        arr = rng.integers(0, 255, size=(size[1], size[0], 3), dtype=np.uint8)
        name = f"img_{i}.png"
        Image.fromarray(arr).save(images_dir / name)
        names.append(name)
    return names


def support_coco(names, shots_per_class, n_classes):
    images = [{"id": i, "width": 96, "height": 96, "file_name": n} for i, n in enumerate(names)]
    annotations = []
    ann_id = 1
    for c in range(1, n_classes + 1):
        for k in range(shots_per_class):
            img_id = (ann_id - 1) % len(names)
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": img_id,
                    "category_id": c,
                    "bbox": [10 + 3 * k, 10 + 2 * c, 30, 30],
                }
            )
            ann_id += 1
    categories = [{"id": c, "name": f"c{c}"} for c in range(1, n_classes + 1)]
    return {"images": images, "annotations": annotations, "categories": categories}


def parse_cdfe(path: Path):
    raw = path.read_bytes()
    magic, version, count, dim = HEADER.unpack_from(raw)
    assert magic == b"CDFE"
    assert version == 1
    payload = np.frombuffer(raw, dtype="<f4", offset=HEADER.size)
    assert payload.size == count * dim
    sidecar = json.loads(path.with_name(path.name + ".idx.json").read_text())
    return count, dim, payload.reshape(count, dim) if count else payload, sidecar


def manifest(dim=16):
    backbone = StubBackbone(dim=dim)
    return backbone, ExportManifest(
        backbone=backbone.name, weights_hash=backbone.weights_hash, dim=dim, created="fixed"
    )


class TestExportSupport:
    def test_sixty_annotations_ten_shot_six_classes(self, tmp_path):
        names = write_images(tmp_path / "imgs", 12)
        coco = support_coco(names, shots_per_class=10, n_classes=6)
        coco_path = tmp_path / "support.json"
        coco_path.write_text(json.dumps(coco))
        backbone, mani = manifest()
        n = export_support(coco_path, tmp_path / "imgs", mani, tmp_path / "s.cdfe", backbone)
        assert n == 60
        count, dim, vectors, sidecar = parse_cdfe(tmp_path / "s.cdfe")
        assert (count, dim) == (60, 16)
        assert sidecar["kind"] == "support"
        assert len(sidecar["entries"]) == 60
        assert [e["entry_id"] for e in sidecar["entries"]] == [a["id"] for a in coco["annotations"]]
        assert all("category_id" in e for e in sidecar["entries"])
        assert sidecar["metadata"]["backbone"] == "stub-sha256"
        # stub embeddings are unit vectors
        assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-5)

    def test_empty_annotations_header_only(self, tmp_path):
        names = write_images(tmp_path / "imgs", 1)
        coco_path = tmp_path / "support.json"
        coco_path.write_text(
            json.dumps({"images": [{"id": 0, "file_name": names[0]}], "annotations": [],
                        "categories": []})
        )
        backbone, mani = manifest()
        n = export_support(coco_path, tmp_path / "imgs", mani, tmp_path / "e.cdfe", backbone)
        assert n == 0
        assert (tmp_path / "e.cdfe").stat().st_size == HEADER.size
        count, dim, _, sidecar = parse_cdfe(tmp_path / "e.cdfe")
        assert count == 0 and dim == 16 and sidecar["entries"] == []

    def test_reexport_identical(self, tmp_path):
        names = write_images(tmp_path / "imgs", 4)
        coco_path = tmp_path / "support.json"
        coco_path.write_text(json.dumps(support_coco(names, 3, 2)))
        backbone, mani = manifest()
        export_support(coco_path, tmp_path / "imgs", mani, tmp_path / "a.cdfe", backbone)
        export_support(coco_path, tmp_path / "imgs", mani, tmp_path / "b.cdfe", backbone)
        assert (tmp_path / "a.cdfe").read_bytes() == (tmp_path / "b.cdfe").read_bytes()
        assert (tmp_path / "a.cdfe.idx.json").read_text() == (tmp_path / "b.cdfe.idx.json").read_text()

    def test_missing_image(self, tmp_path):
        coco_path = tmp_path / "support.json"
        coco_path.write_text(
            json.dumps(
                {
                    "images": [{"id": 0, "file_name": "nope.png"}],
                    "annotations": [{"id": 1, "image_id": 0, "category_id": 1, "bbox": [1, 1, 5, 5]}],
                    "categories": [{"id": 1, "name": "x"}],
                }
            )
        )
        backbone, mani = manifest()
        with pytest.raises(MissingImageError):
            export_support(coco_path, tmp_path / "imgs", mani, tmp_path / "x.cdfe", backbone)


class TestExportProposals:
    def test_ordinal_entry_ids(self, tmp_path):
        names = write_images(tmp_path / "imgs", 2)
        props = [
            {"image_id": 0, "category_id": 0, "bbox": [5, 5, 20, 20], "score": 0.9},
            {"image_id": 1, "category_id": 0, "bbox": [30, 30, 20, 20], "score": 0.8},
            {"image_id": 0, "category_id": 0, "bbox": [50, 50, 20, 20], "score": 0.7},
        ]
        props_path = tmp_path / "props.json"
        props_path.write_text(json.dumps(props))
        backbone, mani = manifest()
        n = export_proposals(
            props_path, tmp_path / "imgs", mani, tmp_path / "p.cdfe", backbone,
            image_files={0: names[0], 1: names[1]},
        )
        assert n == 3
        count, dim, _, sidecar = parse_cdfe(tmp_path / "p.cdfe")
        assert sidecar["kind"] == "proposal"
        assert [e["entry_id"] for e in sidecar["entries"]] == [0, 1, 2]


class TestCrops:
    def test_crop_shape_and_padding(self):
        img = np.zeros((100, 200, 3), dtype=np.uint8)
        img[20:60, 40:120] = 255
        crop = crop_region(img, (40, 20, 80, 40), pad_frac=0.0, resize=32)
        assert crop.shape == (32, 32, 3)
        assert crop.mean() > 250  # interior only

    def test_padding_pulls_in_context(self):
        img = np.zeros((100, 200, 3), dtype=np.uint8)
        img[20:60, 40:120] = 255
        padded = crop_region(img, (40, 20, 80, 40), pad_frac=0.5, resize=32)
        assert padded.mean() < 250  # black context visible

    def test_clip_at_borders(self):
        img = np.full((50, 50, 3), 77, dtype=np.uint8)
        crop = crop_region(img, (0, 0, 50, 50), pad_frac=0.3, resize=16)
        assert crop.shape == (16, 16, 3)


class TestStubBackbone:
    def test_deterministic_and_distinct(self):
        b = StubBackbone(dim=24)
        rng = np.random.default_rng(1)
        a = rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)
        c = rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)
        va1, va2, vc = b.embed_batch([a]), b.embed_batch([a]), b.embed_batch([c])
        assert np.array_equal(va1, va2)
        assert not np.array_equal(va1, vc)

    def test_dim_larger_than_digest(self):
        b = StubBackbone(dim=100)
        v = b.embed_batch([np.zeros((4, 4, 3), dtype=np.uint8)])
        assert v.shape == (1, 100)
        assert np.isfinite(v).all()


class TestBackboneFailures:
    def test_unknown_torch_model_raises(self):
        pytest.importorskip("torchvision")
        from cdfe_exporter import BackboneFailureError, make_backbone

        with pytest.raises(BackboneFailureError):
            make_backbone("definitely_not_a_model")


class TestCli:
    def test_support_roundtrip(self, tmp_path, capsys):
        names = write_images(tmp_path / "imgs", 3)
        coco_path = tmp_path / "support.json"
        coco_path.write_text(json.dumps(support_coco(names, 2, 3)))
        rc = main(
            [
                "support",
                "--coco", str(coco_path),
                "--images", str(tmp_path / "imgs"),
                "--out", str(tmp_path / "out.cdfe"),
                "--stub",
            ]
        )
        assert rc == 0
        assert "wrote 6 embeddings" in capsys.readouterr().out
        count, dim, _, _ = parse_cdfe(tmp_path / "out.cdfe")
        assert (count, dim) == (6, 16)

    def test_missing_image_exit_code(self, tmp_path):
        coco_path = tmp_path / "support.json"
        coco_path.write_text(
            json.dumps(
                {
                    "images": [{"id": 0, "file_name": "gone.png"}],
                    "annotations": [{"id": 1, "image_id": 0, "category_id": 1, "bbox": [1, 1, 5, 5]}],
                    "categories": [{"id": 1, "name": "x"}],
                }
            )
        )
        rc = main(
            [
                "support",
                "--coco", str(coco_path),
                "--images", str(tmp_path / "imgs"),
                "--out", str(tmp_path / "out.cdfe"),
                "--stub",
            ]
        )
        assert rc == 1
