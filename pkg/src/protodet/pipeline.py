"""End-to-end pipelines: match -> diffuse -> postprocess -> eval, pseudo-label
rounds, nine-cell scoring, and synthetic task generation.

A pipeline run is driven by one declarative JSON config per dataset-shot
task. Runs are deterministic for a fixed config and seed, and output files
are written atomically (write to a temp file, then rename), so a failed task
never leaves a partial artifact behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import postprocess
from .boxes import (
    Annotation,
    BBox,
    Category,
    DatasetSplit,
    Detection,
    ImageInfo,
    emit_results,
    emit_split,
    load_coco,
    load_results,
)
from .embeddings import EmbeddingStore, EntryMeta, read_store, synth_clusters, write_store
from .errors import ConfigError, DataError, ProtodetError
from .evaluation import EvalReport, ScoreCard, coco_map
from .matching import DiffusionConfig, Proposal, classify, diffuse
from .prototypes import PrototypeSet, build_prototypes
from .pseudolabel import PseudoLabelPolicy, merge_with_gt, optimize_thresholds, select_pseudo

__all__ = [
    "PipelineConfig",
    "load_config",
    "run_match",
    "run_pseudo_rounds",
    "score_submission",
    "generate_synthetic_task",
    "atomic_write",
]


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Postproc chain vocabulary: op name -> (callable, whether it needs image sizes)
_CHAIN_OPS = {
    "nms",
    "soft_nms",
    "threshold_filter",
    "size_filter",
    "topk_per_image",
    "restrict_classes",
}


@dataclass
class PipelineConfig:
    """Declarative description of one dataset-shot task."""

    support_coco: Path
    support_store: Path
    proposals: Path
    proposal_store: Path
    out_dir: Path
    query_gt: Path | None = None
    seed: int = 0
    proto_method: str = "mean"
    proto_alpha: float = 0.7
    n_bg: int = 16
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    min_confidence: float = 0.01
    min_confidence_before_diffusion: bool = False
    postproc_chain: list[dict] = field(default_factory=lambda: [{"op": "nms", "iou_thresh": 0.5}])
    pseudo: PseudoLabelPolicy = field(default_factory=PseudoLabelPolicy)
    eval_iou_thresholds: list[float] | None = None
    eval_max_dets: int = 100

    def validate(self) -> None:
        for spec in self.postproc_chain:
            if not isinstance(spec, dict) or "op" not in spec:
                raise ConfigError(f"postproc chain entries need an 'op': {spec}")
            if spec["op"] not in _CHAIN_OPS:
                raise ConfigError(f"unknown postproc op {spec['op']!r}")


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a JSON pipeline config."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        paths = doc["paths"]
        base = path.parent

        def p(key: str, required: bool = True) -> Path | None:
            if key not in paths or paths[key] is None:
                if required:
                    raise ConfigError(f"config missing paths.{key}")
                return None
            raw = Path(paths[key])
            return raw if raw.is_absolute() else base / raw

        diff = doc.get("diffusion", {})
        pseudo = doc.get("pseudo", {})
        cfg = PipelineConfig(
            support_coco=p("support_coco"),
            support_store=p("support_store"),
            proposals=p("proposals"),
            proposal_store=p("proposal_store"),
            out_dir=p("out_dir"),
            query_gt=p("query_gt", required=False),
            seed=int(doc.get("seed", 0)),
            proto_method=doc.get("prototypes", {}).get("method", "mean"),
            proto_alpha=float(doc.get("prototypes", {}).get("alpha", 0.7)),
            n_bg=int(doc.get("prototypes", {}).get("n_bg", 16)),
            diffusion=DiffusionConfig(
                steps=int(diff.get("steps", 30)),
                alpha=float(diff.get("alpha", 0.3)),
                edge_iou_min=float(diff.get("edge_iou_min", 0.0)),
                fuse_objectness=bool(diff.get("fuse_objectness", False)),
            ),
            min_confidence=float(doc.get("min_confidence", 0.01)),
            min_confidence_before_diffusion=bool(doc.get("min_confidence_before_diffusion", False)),
            postproc_chain=doc.get("postproc", [{"op": "nms", "iou_thresh": 0.5}]),
            pseudo=PseudoLabelPolicy(
                tau=float(pseudo.get("tau", 0.5)),
                beta=float(pseudo.get("beta", 0.5)),
                dedup_iou_gt=pseudo.get("dedup_iou_gt", 0.8),
                dedup_iou_support=pseudo.get("dedup_iou_support", 0.70),
                merge_mode=pseudo.get("merge_mode", "class_agnostic_nms"),
                nms_iou=float(pseudo.get("nms_iou", 0.5)),
            ),
            eval_iou_thresholds=doc.get("eval", {}).get("iou_thresholds"),
            eval_max_dets=int(doc.get("eval", {}).get("max_dets", 100)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    cfg.validate()
    return cfg


def _load_proposals(path: Path, store: EmbeddingStore) -> list[Proposal]:
    """Proposals ride the COCO results schema: score holds the objectness and
    the proposal's position in the array is its embedding entry id."""
    dets = load_results(path.read_bytes())
    proposals = []
    for i, d in enumerate(dets):
        if i not in store.entries:
            raise DataError(f"{path}: proposal {i} has no embedding in the store")
        proposals.append(
            Proposal(image_id=d.image_id, box=d.box, objectness=d.score, embedding_id=i)
        )
    return proposals


def _apply_chain(
    dets: list[Detection],
    chain: list[dict],
    image_sizes: dict[int, tuple[int, int]],
    protos: PrototypeSet | None = None,
) -> list[Detection]:
    for spec in chain:
        spec = dict(spec)
        op = spec.pop("op")
        if op == "nms":
            dets = postprocess.nms(dets, **spec)
        elif op == "soft_nms":
            dets = postprocess.soft_nms(dets, **spec)
        elif op == "threshold_filter":
            dets = postprocess.threshold_filter(dets, **spec)
        elif op == "size_filter":
            dets = postprocess.size_filter(dets, image_sizes=image_sizes, **spec)
        elif op == "topk_per_image":
            dets = postprocess.topk_per_image(dets, **spec)
        elif op == "restrict_classes":
            spec["allowed"] = set(spec["allowed"])
            dets = postprocess.restrict_classes(dets, protos=protos, **spec)
        else:
            raise ConfigError(f"unknown postproc op {op!r}")
    return dets


def _match_once(
    cfg: PipelineConfig,
    support_store: EmbeddingStore,
    proposal_store: EmbeddingStore,
    proposals: list[Proposal],
    image_sizes: dict[int, tuple[int, int]],
) -> tuple[list[Detection], PrototypeSet]:
    protos = build_prototypes(
        support_store, method=cfg.proto_method, alpha=cfg.proto_alpha, n_bg=cfg.n_bg
    )
    dets = classify(proposals, protos, proposal_store, cfg.diffusion.fuse_objectness)
    if cfg.min_confidence_before_diffusion:
        dets = postprocess.threshold_filter(dets, cfg.min_confidence)
    dets = diffuse(dets, cfg.diffusion)
    if not cfg.min_confidence_before_diffusion:
        dets = postprocess.threshold_filter(dets, cfg.min_confidence)
    dets = _apply_chain(dets, cfg.postproc_chain, image_sizes, protos)
    return dets, protos


def run_match(cfg: PipelineConfig) -> tuple[list[Detection], EvalReport | None]:
    """Full matching pipeline; writes results.json (and report.json when
    ground truth is configured) under cfg.out_dir."""
    support_split = load_coco(cfg.support_coco.read_bytes())
    support_store = read_store(cfg.support_store)
    proposal_store = read_store(cfg.proposal_store)
    proposals = _load_proposals(cfg.proposals, proposal_store)

    gt_split = load_coco(cfg.query_gt.read_bytes()) if cfg.query_gt else None
    image_sizes = (gt_split or support_split).image_sizes()

    dets, _ = _match_once(cfg, support_store, proposal_store, proposals, image_sizes)
    atomic_write(cfg.out_dir / "results.json", emit_results(dets, gt_split))

    report = None
    if gt_split is not None:
        report = coco_map(dets, gt_split, cfg.eval_iou_thresholds, cfg.eval_max_dets)
        atomic_write(
            cfg.out_dir / "report.json",
            json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":")).encode(),
        )
    return dets, report


def run_pseudo_rounds(
    cfg: PipelineConfig,
    rounds: int,
    beta_schedule: list[float] | None = None,
) -> list[DatasetSplit]:
    """Iterative pseudo-label rounds over the support set.

    Each round re-runs the training-free matcher with the current merged
    support annotations driving the prototypes, selects confident detections
    (per-class thresholds from F-beta optimization when a beta schedule is
    given, otherwise the fixed policy tau), merges them into the support
    annotations, and writes merged_round_<r>.json. Ground-truth annotations
    survive every round by construction.
    """
    if rounds < 0:
        raise ConfigError("rounds must be >= 0")
    if beta_schedule is not None and len(beta_schedule) != rounds:
        raise ConfigError("beta_schedule length must equal rounds")
    support_split = load_coco(cfg.support_coco.read_bytes())
    support_store = read_store(cfg.support_store)
    proposal_store = read_store(cfg.proposal_store)
    proposals = _load_proposals(cfg.proposals, proposal_store)
    image_sizes = support_split.image_sizes()

    # Thresholds are optimized against whatever labeled boxes exist: the
    # query ground truth on synthetic tasks, else the evolving support set.
    opt_target = load_coco(cfg.query_gt.read_bytes()) if cfg.query_gt else None
    known_images = {im.image_id: im for im in support_split.images}
    if opt_target is not None:
        for im in opt_target.images:
            known_images.setdefault(im.image_id, im)

    merged: list[DatasetSplit] = []
    current = support_split
    store = support_store
    for r in range(rounds):
        dets, _ = _match_once(cfg, store, proposal_store, proposals, image_sizes)
        if beta_schedule is not None:
            taus = optimize_thresholds(dets, opt_target or current, beta=beta_schedule[r])
            picked = [d for d in dets if d.score > taus.get(d.category_id, 2.0)]
        else:
            picked = select_pseudo(dets, cfg.pseudo.tau)
        annotations = merge_with_gt(picked, list(current.annotations), cfg.pseudo)
        for a in annotations:
            if a.image_id not in known_images:
                known_images[a.image_id] = ImageInfo(image_id=a.image_id, width=0, height=0)
        current = DatasetSplit(
            images=tuple(known_images.values()),
            annotations=tuple(annotations),
            categories=current.categories,
            shot=current.shot,
        )
        # Promoted proposals feed the next round's prototypes through their
        # query-store embeddings.
        store = _augment_store(support_store, proposal_store, annotations, proposals)
        atomic_write(cfg.out_dir / f"merged_round_{r + 1}.json", emit_split(current))
        merged.append(current)
    return merged


def _augment_store(
    support_store: EmbeddingStore,
    proposal_store: EmbeddingStore,
    annotations: list[Annotation],
    proposals: list[Proposal],
) -> EmbeddingStore:
    """Support store plus embeddings of the promoted (non-GT) annotations."""
    by_key = {(p.image_id, p.box.x, p.box.y, p.box.w, p.box.h): p for p in proposals}
    out = EmbeddingStore(dim=support_store.dim, kind="support", metadata=support_store.metadata)
    for entry_id, vec in support_store.entries.items():
        out.add(entry_id, vec, support_store.meta[entry_id])
    next_id = max(out.entries, default=-1) + 1
    for a in annotations:
        if a.is_ground_truth:
            continue
        key = (a.image_id, a.box.x, a.box.y, a.box.w, a.box.h)
        p = by_key.get(key)
        if p is None:
            continue
        out.add(
            next_id,
            proposal_store.vector(p.embedding_id),
            EntryMeta(entry_id=next_id, image_id=a.image_id, category_id=a.category_id),
        )
        next_id += 1
    return out


def score_submission(tasks: dict[tuple[str, int], tuple[Path, Path]]) -> ScoreCard:
    """Fill the nine-cell card from (results.json, gt.json) pairs.

    ``tasks`` maps (dataset label, shot) to the pair of file paths; cells are
    mAP as percentages.
    """
    cells: dict[tuple[str, int], float] = {}
    for (dataset, shot), (results_path, gt_path) in tasks.items():
        gt = load_coco(Path(gt_path).read_bytes())
        dets = load_results(Path(results_path).read_bytes(), gt)
        report = coco_map(dets, gt)
        cells[(dataset, shot)] = 100.0 * report.map
    card = ScoreCard(cells=cells)
    _ = card.score  # raises on a malformed nine-cell shape
    return card


def generate_synthetic_task(
    out_dir: str | Path,
    n_classes: int = 3,
    per_class: int = 5,
    queries_per_class: int = 6,
    dim: int = 16,
    spread: float = 0.0,
    seed: int = 0,
    boxes_per_image: int = 4,
    objectness: float = 1.0,
) -> Path:
    """Materialize a fully linked desk-scale task on disk.

    Query boxes are laid out on a fixed grid with slight horizontal overlap
    (IoU about 0.18 between neighbors) so the diffusion graph has edges while
    same-class NMS at 0.5 never suppresses a true positive. Proposals equal
    the ground-truth boxes, so a perfect matcher reaches mAP 1.0. Returns the
    path of the written config file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    support, queries, labels = synth_clusters(
        n_classes, per_class, dim, spread, seed, queries_per_class=queries_per_class
    )
    categories = tuple(Category(category_id=c, name=f"class_{c}") for c in range(1, n_classes + 1))

    # Support split: one image per support instance.
    sup_images, sup_anns = [], []
    for entry_id, meta in support.meta.items():
        img_id = 1000 + entry_id
        sup_images.append(ImageInfo(image_id=img_id, width=200, height=200, file_name=f"s{entry_id}.png"))
        sup_anns.append(
            Annotation(
                image_id=img_id,
                box=BBox(60.0, 60.0, 80.0, 80.0),
                category_id=meta.category_id,
                annotation_id=entry_id + 1,
            )
        )
        support.meta[entry_id] = EntryMeta(
            entry_id=entry_id, image_id=img_id, bbox=(60.0, 60.0, 80.0, 80.0),
            category_id=meta.category_id,
        )
    support_split = DatasetSplit(
        images=tuple(sup_images), annotations=tuple(sup_anns), categories=categories,
        shot=per_class,
    )

    # Query split: boxes on an overlapping grid, several per image.
    grid_step = 56.0  # 80px boxes 56px apart: neighbors overlap at IoU ~ 0.18
    q_images, q_anns, q_dets = [], [], []
    for ordinal, (entry_id, cat) in enumerate(sorted(labels.items())):
        img_idx, slot = divmod(ordinal, boxes_per_image)
        img_id = 1 + img_idx
        if slot == 0:
            q_images.append(
                ImageInfo(image_id=img_id, width=640, height=480, file_name=f"q{img_idx}.png")
            )
        box = BBox(10.0 + slot * grid_step, 10.0, 80.0, 80.0)
        q_anns.append(
            Annotation(image_id=img_id, box=box, category_id=cat, annotation_id=entry_id + 1)
        )
        q_dets.append(
            Detection(image_id=img_id, box=box, category_id=0, score=objectness)
        )
        queries.meta[entry_id] = EntryMeta(
            entry_id=entry_id, image_id=img_id, bbox=(box.x, box.y, box.w, box.h)
        )
    query_split = DatasetSplit(
        images=tuple(q_images), annotations=tuple(q_anns), categories=categories,
    )

    atomic_write(out / "support.json", emit_split(support_split))
    atomic_write(out / "query_gt.json", emit_split(query_split))
    # Proposals as a results array; ordinal position = embedding entry id.
    payload = [
        {"image_id": d.image_id, "category_id": 0, "bbox": d.box.as_list(), "score": d.score}
        for d in q_dets
    ]
    atomic_write(out / "proposals.json", json.dumps(payload, separators=(",", ":")).encode())
    write_store(support, out / "support.cdfe")
    write_store(queries, out / "proposals.cdfe")

    config = {
        "seed": seed,
        "paths": {
            "support_coco": "support.json",
            "support_store": "support.cdfe",
            "proposals": "proposals.json",
            "proposal_store": "proposals.cdfe",
            "query_gt": "query_gt.json",
            "out_dir": "out",
        },
        "prototypes": {"method": "mean", "alpha": 0.7, "n_bg": 16},
        "diffusion": {"steps": 30, "alpha": 0.3, "edge_iou_min": 0.0, "fuse_objectness": False},
        "min_confidence": 0.01,
        "postproc": [{"op": "nms", "iou_thresh": 0.5}],
        "pseudo": {"tau": 0.5, "beta": 0.5, "merge_mode": "class_agnostic_nms", "nms_iou": 0.5},
        "eval": {"max_dets": 100},
    }
    cfg_path = out / "config.json"
    atomic_write(cfg_path, json.dumps(config, indent=2, sort_keys=True).encode())
    return cfg_path
