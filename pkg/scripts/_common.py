"""Argument and output helpers shared by the experiment runners."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import tempfile
from pathlib import Path

from rmgpt.config import PRESETS, preset, validate_config


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--preset", choices=PRESETS, default="desk")
    p.add_argument("--config", help="config file; overrides --preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--work", help="directory for synthetic data (default: a temporary one)")
    p.add_argument("--json", help="also write the results to this file")
    return p


def run_config(args):
    cfg = validate_config(args.config, check_paths=False) if args.config else preset(args.preset)
    return cfg.model, cfg.train


def work_dir(args):
    if args.work:
        Path(args.work).mkdir(parents=True, exist_ok=True)
        return Path(args.work), None
    tmp = tempfile.TemporaryDirectory(prefix="rmgpt-")
    return Path(tmp.name), tmp


def emit(results: dict, args) -> None:
    text = json.dumps(results, indent=2, default=_default)
    print(text)
    if args.json:
        Path(args.json).write_text(text)
    sys.stdout.flush()


def _default(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    return float(obj)
