"""Version manifests: which token version holds each unit of each file version."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..codec import UnitDigest
from ..errors import FormatError

MANIFEST_FORMAT = 1


@dataclass(frozen=True)
class VersionRecord:
    version: int
    parent: int | None
    writer: str
    owners: tuple[str, ...]
    units: tuple[UnitDigest, ...]

    def token_versions(self) -> dict[int, int]:
        return {u.unit_index: u.version for u in self.units}

    def unit(self, index: int) -> UnitDigest:
        for u in self.units:
            if u.unit_index == index:
                return u
        raise KeyError(index)


@dataclass(frozen=True)
class VersionManifest:
    name: str
    threshold: int
    versions: tuple[VersionRecord, ...]
    piece_size: int = 128
    unit_size: int = 10 * 1024 * 1024

    @property
    def latest(self) -> VersionRecord:
        return self.versions[-1]

    @property
    def owners(self) -> tuple[str, ...]:
        return self.latest.owners

    def record(self, version: int) -> VersionRecord:
        for r in self.versions:
            if r.version == version:
                return r
        raise KeyError(version)

    def extend(self, record: VersionRecord) -> "VersionManifest":
        if record.version <= self.latest.version:
            raise ValueError("version numbers must increase")
        return VersionManifest(self.name, self.threshold, self.versions + (record,), self.piece_size, self.unit_size)

    def to_bytes(self) -> bytes:
        doc = {
            "format": MANIFEST_FORMAT,
            "name": self.name,
            "threshold": self.threshold,
            "piece_size": self.piece_size,
            "unit_size": self.unit_size,
            "versions": [{
                "version": r.version,
                "parent": r.parent,
                "writer": r.writer,
                "owners": list(r.owners),
                "units": [{"unit": u.unit_index, "token_version": u.version, "length": u.length,
                           "digest": u.digest.hex(), "key_check": u.key_check.hex()} for u in r.units],
            } for r in self.versions],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VersionManifest":
        try:
            doc = json.loads(data)
            if doc["format"] != MANIFEST_FORMAT:
                raise FormatError(f"unsupported manifest format {doc['format']}")
            records = tuple(VersionRecord(
                int(r["version"]), None if r["parent"] is None else int(r["parent"]), str(r["writer"]),
                tuple(str(o) for o in r["owners"]),
                tuple(UnitDigest(int(u["unit"]), int(u["token_version"]), int(u["length"]),
                                 bytes.fromhex(u["digest"]), bytes.fromhex(u["key_check"])) for u in r["units"]),
            ) for r in doc["versions"])
            manifest = cls(str(doc["name"]), int(doc["threshold"]), records, int(doc["piece_size"]),
                           int(doc["unit_size"]))
        except FormatError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed manifest: {exc}") from exc
        _validate(manifest)
        return manifest


def _validate(m: VersionManifest) -> None:
    if not m.versions:
        raise FormatError("manifest has no versions")
    if m.threshold < 1:
        raise FormatError("threshold must be positive")
    if m.piece_size < 1 or m.unit_size < 1 or m.unit_size % m.piece_size:
        raise FormatError("unit size must be a positive multiple of the piece size")
    numbers = [r.version for r in m.versions]
    if numbers != sorted(set(numbers)):
        raise FormatError("version numbers must be strictly increasing")
    for r in m.versions:
        if len(r.owners) < m.threshold or len(set(r.owners)) != len(r.owners):
            raise FormatError(f"version {r.version} has an invalid owner list")
        if any(u.version > r.version for u in r.units):
            raise FormatError(f"version {r.version} references a token from a later version")
        if [u.unit_index for u in r.units] != list(range(1, len(r.units) + 1)):
            raise FormatError(f"version {r.version} units are not numbered 1..k")
