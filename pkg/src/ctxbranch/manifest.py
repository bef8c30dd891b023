"""Reproducibility manifests for CLI runs.

Every output file gets a sidecar ``<output>.manifest.json`` recording the
tool version, subcommand, flags, seeds, and SHA-256 digests of the inputs.
The timestamp of the run is kept out of the serialized form on purpose:
outputs must be byte-identical across reruns with the same configuration,
so wall-clock time is only logged, never written into artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

TOOL_NAME = "ctxbranch"
TOOL_VERSION = "0.1.0"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    flags: dict
    input_digests: dict
    seeds: dict
    tool: str = TOOL_NAME
    version: str = TOOL_VERSION
    timestamp: str = field(default="", compare=False)

    def embedded(self) -> dict:
        """Serializable form, without the timestamp (byte-stable reruns)."""
        return {
            "tool": self.tool,
            "version": self.version,
            "subcommand": self.subcommand,
            "flags": self.flags,
            "input_digests": self.input_digests,
            "seeds": self.seeds,
        }


def build_manifest(subcommand: str, flags: dict, inputs: dict[str, str | Path],
                   seeds: dict | None = None) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        flags={k: v for k, v in sorted(flags.items())},
        input_digests={name: sha256_file(p) for name, p in sorted(inputs.items())},
        seeds=dict(seeds or {}),
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def write_sidecar(manifest: RunManifest, output_path: str | Path) -> Path:
    sidecar = Path(str(output_path) + ".manifest.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(manifest.embedded(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return sidecar
