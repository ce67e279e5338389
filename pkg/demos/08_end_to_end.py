"""Full pipeline on a generated synthetic task, library-first then CLI.

Run: python3 demos/08_end_to_end.py
"""
import subprocess
import sys
import tempfile
from pathlib import Path

from protodet import generate_synthetic_task, load_config, run_match, run_pseudo_rounds

with tempfile.TemporaryDirectory() as td:
    root = Path(td)

    print("== library API ==")
    for spread in (0.0, 0.4, 0.8):
        cfg = load_config(generate_synthetic_task(root / f"s{spread}", spread=spread, seed=5))
        dets, report = run_match(cfg)
        print(f"spread {spread:>3}: {len(dets):2d} detections, mAP {report.map:.4f}")
    print("zero spread is a perfect matcher; noise degrades it monotonically")

    cfg = load_config(generate_synthetic_task(root / "rounds", spread=0.2, seed=5))
    merged = run_pseudo_rounds(cfg, rounds=2)
    for r, split in enumerate(merged, 1):
        pseudo = sum(not a.is_ground_truth for a in split.annotations)
        print(f"pseudo round {r}: {len(split.annotations)} annotations ({pseudo} promoted)")

    print("\n== same thing through the CLI ==")
    task = root / "cli_task"
    for argv in (
        ["synth", "gen", "--out", str(task), "--spread", "0.0"],
        ["match", "run", "--config", str(task / "config.json")],
        ["eval", "map", "--dets", str(task / "out" / "results.json"),
         "--gt", str(task / "query_gt.json")],
    ):
        print("$ protodet", " ".join(argv))
        subprocess.run([sys.executable, "-m", "protodet.cli", *argv], check=True)
