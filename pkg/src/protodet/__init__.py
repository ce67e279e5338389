"""protodet: training-free few-shot detection matching and evaluation.

Support embeddings become class prototypes; category-agnostic proposals are
classified by cosine matching with graph-diffusion confidence reweighting;
detections pass through the usual suppression/fusion/threshold zoo; results
are scored with COCO-style mAP and the nine-cell weighted challenge score.
"""
from .boxes import (
    Annotation,
    BBox,
    Category,
    DatasetSplit,
    Detection,
    ImageInfo,
    emit_results,
    emit_split,
    group_by_image,
    iou,
    iou_matrix,
    load_coco,
    load_results,
)
from .contrastive import DomainBank, InfoNCETemperatures, loss_domain, loss_proto, loss_total_dp, perturb
from .embeddings import (
    EmbeddingStore,
    EntryMeta,
    ScaleSet,
    cosine,
    l2_normalize,
    read_store,
    synth_clusters,
    write_store,
)
from .evaluation import EvalReport, ScoreCard, challenge_score, coco_map, fbeta
from .matching import DiffusionConfig, Proposal, classify, diffuse, identity_refiner, refine_boxes
from .pipeline import (
    PipelineConfig,
    generate_synthetic_task,
    load_config,
    run_match,
    run_pseudo_rounds,
    score_submission,
)
from .postprocess import (
    multiscale_tta_merge,
    nms,
    phrase_map,
    restrict_classes,
    size_filter,
    soft_nms,
    threshold_filter,
    topk_per_image,
    wbf,
)
from .prototypes import (
    PrototypeSet,
    build_prototypes,
    jitter_negatives,
    mean_prototype,
    multiscale_fuse,
    reweighted_prototype,
)
from .pseudolabel import (
    PseudoLabelPolicy,
    SENTINEL_TAU,
    confidence_floor,
    fsod_map,
    merge_with_gt,
    optimize_thresholds,
    select_pseudo,
)

__version__ = "0.1.0"
