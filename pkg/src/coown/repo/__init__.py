"""Multi-owner repository: storage backends, manifests and the protocol."""

from .backends import PUBLIC, AuditingBackend, LocalBackend, MemoryBackend, StorageBackend
from .manifest import VersionManifest, VersionRecord
from .protocol import Repository, WriteResult

__all__ = ["PUBLIC", "AuditingBackend", "LocalBackend", "MemoryBackend", "StorageBackend",
           "VersionManifest", "VersionRecord", "Repository", "WriteResult"]
