"""Cross-component contract: exporter output must load and drive run_match.

The exporter is a separate package talking to this one only through the CDFE
file format and COCO JSON. These tests run it as a subprocess in stub-backbone
mode and are skipped entirely when it is not installed, so the primary suite
stands alone.
"""
import importlib.util
import json
import subprocess
import sys

import numpy as np
import pytest

from protodet import load_config, read_store, run_match
from protodet.pipeline import atomic_write

pytestmark = pytest.mark.skipif(
    importlib.util.find_spec("cdfe_exporter") is None,
    reason="cdfe-exporter package not installed",
)


def export(mode, coco, images, out, dim=16):
    proc = subprocess.run(
        [
            sys.executable, "-m", "cdfe_exporter.cli", mode,
            "--coco", str(coco), "--images", str(images), "--out", str(out),
            "--stub", "--dim", str(dim),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture
def stub_task(tmp_path):
    """Images on disk plus COCO files; features come from the stub backbone."""
    from PIL import Image

    rng = np.random.default_rng(31)
    images_dir = tmp_path / "imgs"
    images_dir.mkdir()

    def save(name):
        arr = rng.integers(0, 255, size=(80, 80, 3), dtype=np.uint8)
        Image.fromarray(arr).save(images_dir / name)

    support_images, support_anns = [], []
    ann_id = 1
    for c in (1, 2):
        for k in range(3):
            img_id = 100 + ann_id
            name = f"s{img_id}.png"
            save(name)
            support_images.append({"id": img_id, "width": 80, "height": 80, "file_name": name})
            support_anns.append(
                {"id": ann_id, "image_id": img_id, "category_id": c, "bbox": [20, 20, 40, 40]}
            )
            ann_id += 1
    categories = [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}]
    support = {"images": support_images, "annotations": support_anns, "categories": categories}

    query_images, query_anns, proposals = [], [], []
    for i in range(4):
        img_id = 1 + i
        name = f"q{img_id}.png"
        save(name)
        query_images.append({"id": img_id, "width": 80, "height": 80, "file_name": name})
        query_anns.append(
            {"id": i + 1, "image_id": img_id, "category_id": 1 + i % 2, "bbox": [10, 10, 50, 50]}
        )
        proposals.append({"image_id": img_id, "category_id": 0, "bbox": [10, 10, 50, 50], "score": 0.9})
    query = {"images": query_images, "annotations": query_anns, "categories": categories}

    (tmp_path / "support.json").write_text(json.dumps(support))
    (tmp_path / "query_gt.json").write_text(json.dumps(query))
    (tmp_path / "proposals.json").write_text(json.dumps(proposals))
    image_names = {im["id"]: im["file_name"] for im in query_images}
    (tmp_path / "query_files.json").write_text(json.dumps(image_names))
    return tmp_path, images_dir, len(support_anns), len(proposals), image_names


class TestExporterContract:
    def test_store_loads_with_matching_counts_and_dims(self, stub_task):
        tmp_path, images_dir, n_support, n_props, _ = stub_task
        out = export("support", tmp_path / "support.json", images_dir, tmp_path / "support.cdfe")
        store = read_store(out)
        assert len(store) == n_support
        assert store.dim == 16
        assert store.kind == "support"
        assert {m.category_id for m in store.meta.values()} == {1, 2}
        assert store.metadata["backbone"] == "stub-sha256"

    def test_run_match_over_stub_features_completes(self, stub_task):
        tmp_path, images_dir, _, n_props, image_names = stub_task
        export("support", tmp_path / "support.json", images_dir, tmp_path / "support.cdfe")
        # proposals exporter resolves files through the query split's names
        proc = subprocess.run(
            [
                sys.executable, "-c",
                (
                    "import json, sys; from cdfe_exporter import ExportManifest, StubBackbone, "
                    "export_proposals; b = StubBackbone(dim=16); "
                    "m = ExportManifest(backbone=b.name, weights_hash=b.weights_hash, dim=16); "
                    f"files = {{int(k): v for k, v in json.load(open({str(tmp_path / 'query_files.json')!r})).items()}}; "
                    f"export_proposals({str(tmp_path / 'proposals.json')!r}, {str(images_dir)!r}, m, "
                    f"{str(tmp_path / 'proposals.cdfe')!r}, b, image_files=files)"
                ),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        store = read_store(tmp_path / "proposals.cdfe")
        assert len(store) == n_props

        config = {
            "seed": 0,
            "paths": {
                "support_coco": "support.json",
                "support_store": "support.cdfe",
                "proposals": "proposals.json",
                "proposal_store": "proposals.cdfe",
                "query_gt": "query_gt.json",
                "out_dir": "out",
            },
        }
        atomic_write(tmp_path / "config.json", json.dumps(config).encode())
        cfg = load_config(tmp_path / "config.json")
        dets, report = run_match(cfg)
        assert (tmp_path / "out" / "results.json").exists()
        assert report is not None
        assert 0.0 <= report.map <= 1.0
        print(f"\nACCEPT exporter-contract (stub features, {len(dets)} detections): PASS")
