"""Run manifests: everything needed to reproduce a command exactly.

A manifest is written before any output so an interrupted run still
records what was attempted. Re-running a manifest re-executes the same
resolved configuration against digest-verified inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["RunManifest", "ManifestError", "file_digest", "TOOL_VERSION"]

TOOL_VERSION = "0.1.0"


class ManifestError(RuntimeError):
    """Unreadable manifest or inputs that no longer match their digests."""


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, dict] = field(default_factory=dict)  # name -> {path, sha256}
    outputs: list[str] = field(default_factory=list)  # relative to the out dir
    tool_version: str = TOOL_VERSION

    def add_input(self, name: str, path) -> None:
        path = Path(path).resolve()
        self.inputs[name] = {"path": str(path), "sha256": file_digest(path)}

    def write(self, path) -> None:
        payload = {
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ManifestError(f"cannot read manifest {path}: {err}") from err
        try:
            return cls(
                command=payload["command"],
                config=payload["config"],
                seed=payload["seed"],
                inputs=payload["inputs"],
                outputs=payload["outputs"],
                tool_version=payload["tool_version"],
            )
        except KeyError as err:
            raise ManifestError(f"manifest {path} is missing {err}") from err

    def verify_inputs(self) -> None:
        for name, rec in self.inputs.items():
            path = Path(rec["path"])
            if not path.exists():
                raise ManifestError(f"input '{name}' is gone: {path}")
            actual = file_digest(path)
            if actual != rec["sha256"]:
                raise ManifestError(
                    f"input '{name}' changed since the original run: {path}"
                )
