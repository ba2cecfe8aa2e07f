#!/usr/bin/env python3
"""End-to-end demo on the bundled two-scene fixture.

Runs the full mock pipeline into a workspace directory and prints the
evaluation table plus where to find the rendered panels.

Usage:
    python3 scripts/run_demo.py [workspace_dir] [--seed N]
"""

import argparse
from pathlib import Path

from script2board import pipeline
from script2board.backends import make_backends, mock_backend_configs
from script2board.workspace import Workspace

REPO = Path(__file__).resolve().parents[1]
FIXTURE = REPO / "tests" / "data" / "two_scene.txt"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("workspace", nargs="?", default="demo_workspace")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    ws = Workspace(args.workspace)
    backends = make_backends(mock_backend_configs(seed=args.seed))
    pipeline.run_pipeline(ws, FIXTURE, backends, seed=args.seed)

    print((ws.root / "eval" / "report.txt").read_text(encoding="utf-8"))
    print(f"workspace digest: {ws.digest()}")
    print(f"panels:           {ws.root / 'board'}/panel_*.png")
    print(f"contact sheet:    {ws.root / 'board' / 'contact_sheet.png'}")


if __name__ == "__main__":
    main()
