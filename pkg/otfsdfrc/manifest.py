"""Run manifests.

A manifest records what an experiment ran with (resolved configuration and
its hash, seed, library versions, source revision) and which artifacts it
wrote, so any run can be identified and repeated.
"""

import hashlib
import json
import platform
from dataclasses import dataclass
from datetime import datetime
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

from loguru import logger

from . import __version__

MANIFEST_VERSION = "1.0.0"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas")


def canonical_json(doc: dict[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(doc: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def environment_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def git_revision(path: str | Path | None = None) -> str | None:
    """Commit of the work tree containing `path`, or None outside git."""
    try:
        import git
    except ImportError:
        return None
    try:
        repo = git.Repo(Path(path or __file__).resolve().parent, search_parent_directories=True)
        revision = repo.head.commit.hexsha
        return f"{revision}-dirty" if repo.is_dirty() else revision
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, ValueError):
        return None


@dataclass
class Artifact:
    """One file written by a run."""

    path: str
    kind: str
    rows: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "kind": self.kind, "rows": self.rows}


class ManifestBuilder:
    """Builds the manifest of one experiment run."""

    def __init__(self, config: dict[str, Any], out_dir: str | Path, source: str | None = None):
        self._config = config
        self._out_dir = Path(out_dir)
        self._source = source
        self._artifacts: list[Artifact] = []

    @property
    def artifacts(self) -> list[Artifact]:
        return list(self._artifacts)

    def add_artifact(self, path: str | Path, kind: str, rows: int | None = None):
        path = Path(path)
        rel = path
        try:
            rel = path.resolve().relative_to(self._out_dir.resolve())
        except ValueError:
            logger.debug(f"Artifact {path} lies outside {self._out_dir}; recording as given")
        self._artifacts.append(Artifact(path=rel.as_posix(), kind=kind, rows=rows))

    def to_dict(self, status: str = "success") -> dict[str, Any]:
        return {
            "version": MANIFEST_VERSION,
            "tool_version": __version__,
            "timestamp": datetime.now().isoformat(),
            "experiment": self._config["experiment"],
            "seed": int(self._config.get("seed", 0)),
            "config_sha256": config_hash(self._config),
            "config": self._config,
            "source_config": self._source,
            "git_revision": git_revision(),
            "environment": environment_versions(),
            "artifacts": [a.to_dict() for a in self._artifacts],
            "status": status,
        }

    def write_json(self, path: str | Path, status: str = "success") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(status), f, indent=2, default=str)
        return path
