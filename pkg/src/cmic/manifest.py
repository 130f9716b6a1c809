"""Run manifests: enough to re-run any command and audit what it read/wrote.

Manifests carry no timestamps, so repeated runs with the same inputs produce
byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: Optional[int] = None
    inputs: Dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: List[str] = field(default_factory=list)
    tool_version: str = "0.1.0"

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def write(self, path) -> None:
        doc = {
            "command": self.command,
            "arguments": self.arguments,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "tool_version": self.tool_version,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
