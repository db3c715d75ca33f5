"""Dataset manifests: TSV records pairing images, masks, and provenance.

Paths are stored relative to the manifest file's directory, which keeps
manifests portable and makes repeated pipeline runs byte-identical
regardless of where they execute. Lines starting with '#' are header
comments (split rules, skipped-pair warnings) and are preserved on read.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import DomainError

__all__ = [
    "STRATEGIES",
    "SPLITS",
    "ManifestRecord",
    "write_manifest",
    "read_manifest",
    "validate_manifest",
]

STRATEGIES = ("real", "A_mask_gen", "B_propagated", "C_background_injected")
SPLITS = ("", "train", "val", "test")

_COLUMNS = ("image_path", "mask_path", "coverage_class", "strategy", "split", "seed", "provenance")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    mask_path: str
    coverage_class: int
    strategy: str
    split: str = ""
    seed: int = 0
    provenance: str = ""

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}")
        if self.split not in SPLITS:
            raise DomainError(f"unknown split {self.split!r}")

    def with_split(self, split: str) -> "ManifestRecord":
        return replace(self, split=split)


def write_manifest(path, records: list[ManifestRecord], comments: list[str] | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for comment in comments or []:
            fh.write(f"# {comment}\n")
        fh.write("\t".join(_COLUMNS) + "\n")
        for rec in records:
            fh.write(
                "\t".join(
                    (
                        rec.image_path,
                        rec.mask_path,
                        str(rec.coverage_class),
                        rec.strategy,
                        rec.split,
                        str(rec.seed),
                        rec.provenance,
                    )
                )
                + "\n"
            )


def read_manifest(path) -> tuple[list[ManifestRecord], list[str]]:
    records: list[ManifestRecord] = []
    comments: list[str] = []
    header: list[str] | None = None
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            cells = line.split("\t")
            if header is None:
                header = cells
                if tuple(header) != _COLUMNS:
                    raise DomainError(f"unexpected manifest columns {header}")
                continue
            if len(cells) != len(_COLUMNS):
                raise DomainError(f"malformed manifest row: {line!r}")
            records.append(
                ManifestRecord(
                    image_path=cells[0],
                    mask_path=cells[1],
                    coverage_class=int(cells[2]),
                    strategy=cells[3],
                    split=cells[4],
                    seed=int(cells[5]),
                    provenance=cells[6],
                )
            )
    if header is None:
        raise DomainError(f"manifest {path} has no header row")
    return records, comments


def validate_manifest(path) -> list[ManifestRecord]:
    """Read a manifest and require every referenced file to exist.

    Empty path cells (mask-only products) are skipped. Paths resolve
    relative to the manifest's directory.
    """
    records, _ = read_manifest(path)
    base = Path(os.path.dirname(os.path.abspath(path)))
    missing = []
    for rec in records:
        for p in (rec.image_path, rec.mask_path):
            if p and not (base / p).exists():
                missing.append(p)
    if missing:
        raise DomainError(f"manifest references missing files: {missing[:5]}")
    return records
