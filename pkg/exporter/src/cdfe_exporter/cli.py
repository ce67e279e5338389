"""CLI: ``cdfe-export support|proposals --coco ... --images ... --out ... --stub``."""
from __future__ import annotations

import argparse
import sys

from .backbone import make_backbone
from .errors import ExporterError
from .export import export_proposals, export_support
from .manifest import ExportManifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdfe-export", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("support", "proposals"):
        p = sub.add_parser(mode)
        p.add_argument("--coco", required=True,
                       help="COCO split (support) or results-array JSON (proposals)")
        p.add_argument("--images", required=True, help="directory of image files")
        p.add_argument("--out", required=True, help="output CDFE path")
        p.add_argument("--stub", action="store_true",
                       help="use the deterministic hash backbone (no weights needed)")
        p.add_argument("--backbone", default="resnet18")
        p.add_argument("--weights", default=None, help="local weights file for the torch backbone")
        p.add_argument("--dim", type=int, default=16, help="embedding dim (stub mode)")
        p.add_argument("--pad", type=float, default=0.1, help="crop pad fraction per side")
        p.add_argument("--resize", type=int, default=64, help="square crop size fed to the backbone")
        p.add_argument("--pooling", default="mean-patch", choices=("mean-patch", "cls-token"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backbone = make_backbone("stub" if args.stub else args.backbone,
                                 dim=args.dim, weights_path=args.weights)
        manifest = ExportManifest(
            backbone=backbone.name,
            weights_hash=backbone.weights_hash,
            dim=backbone.dim,
            crop_pad_frac=args.pad,
            resize=args.resize,
            pooling=args.pooling,
        )
        if args.mode == "support":
            n = export_support(args.coco, args.images, manifest, args.out, backbone)
        else:
            n = export_proposals(args.coco, args.images, manifest, args.out, backbone)
    except ExporterError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {n} embeddings (dim {manifest.dim}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
