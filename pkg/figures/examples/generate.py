#!/usr/bin/env python3
"""Regenerate the example CSVs from the weakgrid CLI.

Run from this directory after installing the Python package:

    python3 generate.py

Deterministic: seeds are fixed in the configs, so the committed files
reproduce byte-for-byte.
"""

import json
import shutil
import tempfile
from pathlib import Path

import yaml

from weakgrid.cli import main

HERE = Path(__file__).parent
CONFIGS = HERE.parent.parent / "configs"

FAULT = {"t_start": 1.0, "t_clear": 5.0, "xg": 0.1819, "vg": 0.96}
EXTREME_FAULT = {"t_start": 1.0, "t_clear": 5.0, "xg": 0.3595, "vg": 0.96}

RUNS = [
    ("cc_critical.csv", {"mode": "CC", "seed": 1, "fault": FAULT}),
    ("ft_ispc.csv", {"mode": "FT_ISPC", "seed": 1, "fault": FAULT,
                     "ispc": {"T": 750}}),
    ("regular_ispc.csv", {"mode": "REGULAR_ISPC", "seed": 1, "fault": FAULT,
                          "ispc": {"T": 10000}}),
    ("cc_extreme.csv", {"mode": "CC", "seed": 1, "fault": EXTREME_FAULT}),
    ("regular_extreme.csv", {"mode": "REGULAR_ISPC", "seed": 1,
                             "fault": EXTREME_FAULT, "ispc": {"T": 10000}}),
]


def run() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        for name, doc in RUNS:
            cfg = tmp_path / "config.yaml"
            cfg.write_text(yaml.safe_dump(doc))
            out = tmp_path / "out"
            code = main(["simulate", "--config", str(cfg), "--out", str(out)])
            if code != 0:
                raise SystemExit(f"{name}: simulate exited {code}")
            shutil.copy(out / "trace.csv", HERE / name)
            print(f"wrote {name}")

        sweep_out = tmp_path / "sweep"
        code = main(["sweep", "--config", str(CONFIGS / "sweep.yaml"),
                     "--out", str(sweep_out), "--jobs", "2"])
        if code != 0:
            raise SystemExit(f"sweep exited {code}")
        shutil.copy(sweep_out / "sweep.csv", HERE / "sweep.csv")
        shutil.copy(sweep_out / "critical.json", HERE / "critical.json")
        print("wrote sweep.csv, critical.json")


if __name__ == "__main__":
    run()
