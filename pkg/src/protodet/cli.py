"""Command-line entry points.

Subcommands: proto build, match run, diffuse, post apply, pseudo round,
eval map, eval score, synth gen, embed inspect. Exit codes: 0 ok, 2 config
error, 3 data error, 4 internal error. All outputs are written atomically.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .boxes import emit_results, load_coco, load_results
from .embeddings import read_store, write_store, EmbeddingStore, EntryMeta
from .errors import ConfigError, DataError, ProtodetError
from .evaluation import ScoreCard, challenge_score, coco_map
from .matching import diffuse
from .pipeline import (
    PipelineConfig,
    _apply_chain,
    atomic_write,
    generate_synthetic_task,
    load_config,
    run_match,
    run_pseudo_rounds,
    score_submission,
)
from .prototypes import build_prototypes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _cfg(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = Path(args.out)
    return cfg


def _cmd_proto_build(args) -> int:
    cfg = _cfg(args)
    store = read_store(cfg.support_store)
    protos = build_prototypes(store, method=cfg.proto_method, alpha=cfg.proto_alpha, n_bg=cfg.n_bg)
    out = EmbeddingStore(dim=store.dim, kind="support", metadata={"content": "prototypes"})
    for cat in protos.category_ids():
        out.add(cat, protos.class_protos[cat], EntryMeta(entry_id=cat, category_id=cat))
    next_id = max(out.entries, default=0) + 1
    for vec in protos.bg_protos:
        out.add(next_id, vec, EntryMeta(entry_id=next_id))
        next_id += 1
    dest = Path(args.proto_out) if args.proto_out else cfg.out_dir / "prototypes.cdfe"
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_store(out, dest)
    print(f"wrote {len(out)} prototypes ({len(protos.class_protos)} classes) to {dest}")
    return EXIT_OK


def _cmd_match_run(args) -> int:
    cfg = _cfg(args)
    dets, report = run_match(cfg)
    line = f"{len(dets)} detections -> {cfg.out_dir / 'results.json'}"
    if report is not None:
        line += f" (mAP {report.map:.4f})"
    print(line)
    return EXIT_OK


def _cmd_diffuse(args) -> int:
    cfg = _cfg(args)
    dets = load_results(Path(args.dets).read_bytes())
    out = diffuse(dets, cfg.diffusion)
    atomic_write(args.dets_out, emit_results(out))
    print(f"diffused {len(out)} detections -> {args.dets_out}")
    return EXIT_OK


def _cmd_post_apply(args) -> int:
    cfg = _cfg(args)
    dets = load_results(Path(args.dets).read_bytes())
    sizes = {}
    if args.split:
        sizes = load_coco(Path(args.split).read_bytes()).image_sizes()
    out = _apply_chain(dets, cfg.postproc_chain, sizes)
    atomic_write(args.dets_out, emit_results(out))
    print(f"{len(dets)} -> {len(out)} detections -> {args.dets_out}")
    return EXIT_OK


def _cmd_pseudo_round(args) -> int:
    cfg = _cfg(args)
    merged = run_pseudo_rounds(cfg, args.rounds, args.beta)
    for r, split in enumerate(merged, start=1):
        n_pseudo = sum(not a.is_ground_truth for a in split.annotations)
        print(f"round {r}: {len(split.annotations)} annotations ({n_pseudo} pseudo)")
    return EXIT_OK


def _cmd_eval_map(args) -> int:
    gt = load_coco(Path(args.gt).read_bytes())
    dets = load_results(Path(args.dets).read_bytes(), gt)
    report = coco_map(dets, gt)
    if args.report_out:
        atomic_write(args.report_out, _dump(report.to_dict()))
    print(f"mAP {report.map:.6f} over {len(report.per_class_ap)} classes")
    return EXIT_OK


def _parse_cells_file(path: str) -> dict[tuple[str, int], float]:
    doc = json.loads(Path(path).read_text())
    cells: dict[tuple[str, int], float] = {}
    for key, value in doc.items():
        dataset, _, shot = key.rpartition("_")
        if not dataset or not shot.endswith("shot"):
            raise ConfigError(f"cell key {key!r} must look like D1_1shot")
        cells[(dataset, int(shot[:-4]))] = float(value)
    return cells


def _cmd_eval_score(args) -> int:
    if args.cells:
        card = ScoreCard(cells=_parse_cells_file(args.cells))
        score = card.score
    elif args.pair:
        tasks = {}
        for raw in args.pair:
            try:
                dataset, shot, results, gt = raw.split(",")
            except ValueError as exc:
                raise ConfigError(f"--pair wants DATASET,SHOT,RESULTS,GT (got {raw!r})") from exc
            tasks[(dataset, int(shot))] = (Path(results), Path(gt))
        card = score_submission(tasks)
        score = card.score
    else:
        raise ConfigError("eval score needs --cells or nine --pair entries")
    if args.card_out:
        atomic_write(args.card_out, _dump(card.to_dict()))
    print(f"score {score:.2f}")
    return EXIT_OK


def _cmd_synth_gen(args) -> int:
    cfg_path = generate_synthetic_task(
        args.out,
        n_classes=args.classes,
        per_class=args.per_class,
        queries_per_class=args.queries_per_class,
        dim=args.dim,
        spread=args.spread,
        seed=args.seed if args.seed is not None else 0,
    )
    print(f"synthetic task ready: {cfg_path}")
    return EXIT_OK


def _cmd_embed_inspect(args) -> int:
    store = read_store(args.store)
    norms = [float(np.linalg.norm(v)) for v in store.entries.values()]
    cats = {m.category_id for m in store.meta.values()}
    print(f"kind={store.kind} count={len(store)} dim={store.dim}")
    if norms:
        print(f"norms: min={min(norms):.4f} max={max(norms):.4f}")
    print(f"categories: {sorted(c for c in cats if c is not None)}"
          + (" + background" if None in cats else ""))
    if store.metadata:
        print(f"metadata: {json.dumps(store.metadata, sort_keys=True)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protodet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, out_flag=True):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        if out_flag:
            p.add_argument("--out", default=None, help="override output directory")

    proto = sub.add_parser("proto", help="prototype operations").add_subparsers(
        dest="subcommand", required=True
    )
    p = proto.add_parser("build", help="build class/background prototypes")
    with_config(p)
    p.add_argument("--proto-out", default=None, help="output CDFE path")
    p.set_defaults(func=_cmd_proto_build)

    match = sub.add_parser("match", help="matching pipeline").add_subparsers(
        dest="subcommand", required=True
    )
    p = match.add_parser("run", help="match -> diffuse -> postprocess -> eval")
    with_config(p)
    p.set_defaults(func=_cmd_match_run)

    p = sub.add_parser("diffuse", help="graph-diffuse scores in a results file")
    with_config(p, out_flag=False)
    p.add_argument("--dets", required=True, help="input results JSON")
    p.add_argument("--dets-out", required=True, help="output results JSON")
    p.set_defaults(func=_cmd_diffuse)

    post = sub.add_parser("post", help="post-processing").add_subparsers(
        dest="subcommand", required=True
    )
    p = post.add_parser("apply", help="apply the config's postproc chain")
    with_config(p, out_flag=False)
    p.add_argument("--dets", required=True)
    p.add_argument("--dets-out", required=True)
    p.add_argument("--split", default=None, help="COCO split for image sizes")
    p.set_defaults(func=_cmd_post_apply)

    pseudo = sub.add_parser("pseudo", help="pseudo-labeling").add_subparsers(
        dest="subcommand", required=True
    )
    p = pseudo.add_parser("round", help="iterative select/merge rounds")
    with_config(p)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--beta", type=float, nargs="*", default=None,
                   help="per-round F-beta values for threshold optimization")
    p.set_defaults(func=_cmd_pseudo_round)

    ev = sub.add_parser("eval", help="evaluation").add_subparsers(
        dest="subcommand", required=True
    )
    p = ev.add_parser("map", help="COCO mAP of results against ground truth")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report-out", default=None)
    p.set_defaults(func=_cmd_eval_map)
    p = ev.add_parser("score", help="nine-cell weighted challenge score")
    p.add_argument("--cells", default=None, help="JSON file {D1_1shot: mAP%, ...}")
    p.add_argument("--pair", action="append", default=None,
                   help="DATASET,SHOT,RESULTS_JSON,GT_JSON (give nine)")
    p.add_argument("--card-out", default=None)
    p.set_defaults(func=_cmd_eval_score)

    synth = sub.add_parser("synth", help="synthetic tasks").add_subparsers(
        dest="subcommand", required=True
    )
    p = synth.add_parser("gen", help="materialize a desk-scale synthetic task")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=5)
    p.add_argument("--queries-per-class", type=int, default=6)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--spread", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth_gen)

    embed = sub.add_parser("embed", help="embedding stores").add_subparsers(
        dest="subcommand", required=True
    )
    p = embed.add_parser("inspect", help="print store header and summary")
    p.add_argument("--store", required=True)
    p.set_defaults(func=_cmd_embed_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProtodetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
