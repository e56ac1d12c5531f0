"""Solve both built-in examples and print their support reports.

Artifacts land under results/ relative to the working directory, same as
running `threshgrad run configs/ex_nocq.ini` and `... configs/ex_cq.ini`.
"""

import json
import sys
from pathlib import Path

from threshgrad.cli import parse_experiment_config, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    worst = 0
    for name in ("ex_nocq", "ex_cq"):
        cfg = parse_experiment_config(CONFIGS / f"{name}.ini")
        code, summary = run_experiment(cfg)
        worst = max(worst, code)
        print(f"== {name} (exit {code}) ==")
        print(f"f* = {summary['f_star']!r}  x_bar = {summary['x_bar']}")
        print(f"audits: {summary['audits']}")
        print(json.dumps(summary["support"], indent=2))
    return worst


if __name__ == "__main__":
    sys.exit(main())
