"""Single-directory project workspace with a stage manifest.

Stages run strictly in order parse -> direct -> shoot -> board -> eval; a
stage may only run when every predecessor's recorded output digest still
matches the files on disk, so stale artifacts are never silently mixed.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .errors import StaleStage, WorkspaceLocked

STAGES = ("parse", "direct", "shoot", "board", "eval")
_STAGE_DIRS = {
    "parse": ["ir"],
    "direct": ["db"],
    "shoot": ["assets"],
    "board": ["board"],
    "eval": ["eval"],
}


def digest_tree(root: Path, subdirs: list[str]) -> str:
    """Deterministic digest over every .png and .json under the subdirs."""
    h = hashlib.sha256()
    for sub in subdirs:
        base = root / sub
        if not base.is_dir():
            continue
        for path in sorted(base.rglob("*")):
            if path.suffix not in (".png", ".json"):
                continue
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()[:16]


class Workspace:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        self.manifest = {"stages": {}}
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))

    # -- paths -------------------------------------------------------------
    def dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    # -- manifest ----------------------------------------------------------
    def _save(self) -> None:
        self.manifest_path.write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")

    def stage_record(self, stage: str) -> dict | None:
        return self.manifest["stages"].get(stage)

    def outputs_digest(self, stage: str) -> str:
        return digest_tree(self.root, _STAGE_DIRS[stage])

    def record_stage(self, stage: str, inputs_digest: str) -> None:
        self.manifest["stages"][stage] = {
            "inputs_digest": inputs_digest,
            "outputs_digest": self.outputs_digest(stage),
        }
        self._save()

    def check_predecessors(self, stage: str) -> None:
        """Fail fast if any earlier stage is missing or its outputs changed."""
        for prior in STAGES[:STAGES.index(stage)]:
            rec = self.stage_record(prior)
            if rec is None:
                raise StaleStage(f"stage {stage!r} requires {prior!r} to have run")
            current = self.outputs_digest(prior)
            if current != rec["outputs_digest"]:
                raise StaleStage(
                    f"stage {prior!r} outputs changed since it ran "
                    f"({rec['outputs_digest']} -> {current}); rerun it first")

    def stage_fresh(self, stage: str, inputs_digest: str) -> bool:
        rec = self.stage_record(stage)
        return (rec is not None
                and rec["inputs_digest"] == inputs_digest
                and rec["outputs_digest"] == self.outputs_digest(stage))

    # -- locking -----------------------------------------------------------
    def lock(self) -> "_Lock":
        return _Lock(self.root / ".lock")

    # -- whole-workspace digest (determinism checks) -----------------------
    def digest(self) -> str:
        return digest_tree(self.root, [d for dirs in _STAGE_DIRS.values()
                                       for d in dirs] + ["models"])


class _Lock:
    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceLocked(f"{self.path} exists; another run in progress?")
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False
