"""CSV/JSON writers, study manifests and plot scripts.

Data files never carry timestamps or host information, so re-running a
command with the same resolved parameters reproduces them byte for byte.
Only the manifest records when a run happened.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__


def fmt(x) -> str:
    """17 significant digits for floats (exact round trip), plain str otherwise."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float) or type(x).__name__.startswith("float"):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return format(x, ".17g")
    return str(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class StudyManifest:
    command: str
    params: dict
    arguments: list
    version: str = __version__
    timestamp: str = ""
    config_hash: str = ""
    outputs: list = field(default_factory=list)

    def add(self, path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def to_dict(self, root: Path) -> dict:
        d = asdict(self)
        d["outputs"] = [{"path": p.relative_to(root).as_posix() if p.is_relative_to(root) else str(p),
                         "sha256": sha256_file(p)} for p in self.outputs]
        return d

    def write(self, root) -> Path:
        root = Path(root)
        if not self.timestamp:
            epoch = os.environ.get("SOURCE_DATE_EPOCH")
            t = time.gmtime(int(epoch)) if epoch else time.gmtime()
            self.timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", t)
        return write_json(root / f"{self.command}.manifest.json", self.to_dict(root))


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_plot_script(path, data_file: str, x: str, ys, title: str, logx=False, logy=False) -> Path:
    """A gnuplot script for a CSV data file (columns addressed by name)."""
    lines = [
        "# gnuplot script; run with: gnuplot -p " + Path(path).name,
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x}'",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    plots = [f"'{data_file}' using '{x}':'{y}' with linespoints" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return Path(path)
