"""Run manifests: enough to re-execute a run deterministically."""

from __future__ import annotations

import hashlib
import json
import platform
import time
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import torch

from ..degradation import codec_versions

_PKG_ROOT = Path(__file__).resolve().parent.parent


def code_hash(root: Path = _PKG_ROOT) -> str:
    """Content hash over the package's Python sources."""
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(run_dir: str | Path, cfg, command: str, extra: Optional[Mapping] = None) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "code_sha256": code_hash(),
        "codecs": codec_versions(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "torch": torch.__version__,
        },
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **(extra or {}),
    }
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
