"""Artifact writers: every float is printed with 17 significant digits so
runs can be compared by textual diff."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj, indent: int | None = 1) -> str:
    """JSON text with 17-significant-digit floats and sorted keys."""
    obj = _plain(obj)
    pad = "" if indent is None else "\n"

    def enc(o, depth):
        ind = "" if indent is None else " " * (indent * (depth + 1))
        end = "" if indent is None else " " * (indent * depth)
        if isinstance(o, float):
            return fmt(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{ind}{json.dumps(k)}: {enc(o[k], depth + 1)}" for k in sorted(o)]
            sep = "," + pad if indent is not None else ", "
            return "{" + pad + sep.join(items) + pad + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, depth + 1) for v in o) + "]"
            sep = "," + pad if indent is not None else ", "
            return "[" + pad + sep.join(ind + enc(v, depth + 1) for v in o) + pad + end + "]"
        return json.dumps(o)

    return enc(obj, 0)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps(rec, indent=None) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def output_dir(cli_value: str | None) -> Path:
    """``--out`` wins; otherwise ``SNLS_OUT``; otherwise ``./snls_out``."""
    out = Path(cli_value or os.environ.get("SNLS_OUT") or "snls_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


@dataclass
class RunManifest:
    command: str
    arguments: dict
    config: dict
    seeds: dict
    outputs: list = field(default_factory=list)
    version: str = __version__
    wall_clock: dict = field(default_factory=dict)

    def start(self):
        self.wall_clock["started"] = time.time()

    def finish(self):
        self.wall_clock["finished"] = time.time()
        self.wall_clock["elapsed"] = self.wall_clock["finished"] - self.wall_clock.get("started", 0.0)

    def reproducible_part(self) -> dict:
        """Everything except wall-clock metadata."""
        d = asdict(self)
        d.pop("wall_clock")
        return d

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / "manifest.json", asdict(self))

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))
