"""Run manifests and output directories."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import CSV_SCHEMA, __version__

DEFAULT_ROOT = "fblab-out"
MANIFEST_NAME = "manifest.json"


class OutputCollision(FileExistsError):
    """The output directory already holds files and ``--force`` was not given."""


def manifest_id(experiment: str, parameters: dict, seed: int) -> str:
    """Hash of the canonical run description (timestamps excluded)."""
    blob = json.dumps({"experiment": experiment, "parameters": parameters, "seed": seed,
                       "tool_version": __version__, "csv_schema": CSV_SCHEMA},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    experiment: str
    parameters: dict
    seed: int
    profile: dict | None = None
    interpolation: dict | None = None
    tool_version: str = __version__
    csv_schema: int = CSV_SCHEMA
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    id: str = ""

    def __post_init__(self):
        if not self.id:
            self.id = manifest_id(self.experiment, self.parameters, self.seed)

    @property
    def short_id(self) -> str:
        return self.id[:12]

    def record(self, path, root) -> None:
        path = Path(path)
        self.outputs.append({"path": str(path.relative_to(root)), "sha256": sha256_file(path),
                             "bytes": path.stat().st_size})

    def write(self, directory) -> Path:
        self.finished = _now()
        self.outputs.sort(key=lambda o: o["path"])
        path = Path(directory) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _jsonable(obj):
    try:
        import numpy as np

        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def output_root(cli_root: str | None = None) -> Path:
    return Path(cli_root or os.environ.get("FBLAB_OUT") or DEFAULT_ROOT)


def prepare_directory(path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not force:
            raise OutputCollision(f"output directory {path} is not empty (use --force to replace it)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
