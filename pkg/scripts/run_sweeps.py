#!/usr/bin/env python3
"""Run every sweep config under configs/ and print a one-line summary per run.

Usage: python3 scripts/run_sweeps.py [--out DIR] [--threads N] [config ...]
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from surflin.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    configs = args.configs or sorted((ROOT / "configs").glob("*.json"))
    for cfg in configs:
        if "kind" not in json.loads(cfg.read_text()).get("problem", {}):
            continue  # battery-only configs carry no problem block
        out = args.out / cfg.stem
        t0 = time.perf_counter()
        rc = cli_main(["sweep", "--config", str(cfg), "--out", str(out), "--threads", str(args.threads)])
        summary = f"{cfg.stem:28s} exit {rc}  {time.perf_counter() - t0:6.2f}s"
        report = out / "sweep.json"
        if rc in (0, 2) and report.exists():
            doc = json.loads(report.read_text())
            summary += f"  order(gap) {doc['order_gap']}  order(dist) {doc['order_dist']}"
        print(summary)


if __name__ == "__main__":
    main()
