"""Per-owner storage accounts with the basic ACLs of a public object store.

Every account has two areas:

* ``tmp/`` -- other principals may write here once the owner grants them
  temp-write; only the owner can read it.
* ``main/`` -- only the owner writes; each object carries a read ACL
  listing principals (``"*"`` means everyone).

Paths are write-once.  Principals are trusted as given: authentication is
the platform's job and is simulated here.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable

from ..errors import AccessDeniedError, AlreadyExistsError, ObjectNotFoundError, ParameterError

PUBLIC = "*"


def check_path(path: str) -> None:
    parts = path.split("/")
    if path.startswith("/") or any(p in ("", ".", "..") for p in parts):
        raise ParameterError(f"invalid storage path {path!r}")


class StorageBackend:
    """Interface shared by all backends."""

    def accounts(self) -> list[str]:
        raise NotImplementedError

    def create_account(self, owner: str) -> None:
        raise NotImplementedError

    def put(self, principal: str, owner: str, path: str, data: bytes) -> None:
        raise NotImplementedError

    def get(self, principal: str, owner: str, path: str) -> bytes:
        raise NotImplementedError

    def list(self, principal: str, owner: str, prefix: str) -> list[str]:
        raise NotImplementedError

    def delete(self, principal: str, owner: str, path: str) -> None:
        raise NotImplementedError

    def set_read_acl(self, owner: str, path: str, principal: str, allow: bool) -> None:
        raise NotImplementedError

    def read_acl(self, owner: str, path: str) -> set[str]:
        raise NotImplementedError

    def set_temp_write_acl(self, owner: str, principal: str, allow: bool) -> None:
        raise NotImplementedError

    def temp_writers(self, owner: str) -> set[str]:
        raise NotImplementedError


class _AccountState:
    def __init__(self, temp_writers=(), objects=None):
        self.temp_writers = set(temp_writers)
        # path -> {"read": set, "writer": str}
        self.objects: dict[str, dict] = objects or {}


class AclBackend(StorageBackend):
    """ACL enforcement on top of raw object primitives (memory and local disk)."""

    def _state(self, owner: str) -> _AccountState:
        raise NotImplementedError

    def _save_state(self, owner: str, state: _AccountState) -> None:
        pass

    def _raw_put(self, owner: str, path: str, data: bytes) -> None:
        raise NotImplementedError

    def _raw_get(self, owner: str, path: str) -> bytes:
        raise NotImplementedError

    def _raw_delete(self, owner: str, path: str) -> None:
        raise NotImplementedError

    def _can_read(self, principal: str, owner: str, path: str, meta: dict) -> bool:
        if principal == owner:
            return True
        if path.startswith("main/"):
            return principal in meta["read"] or PUBLIC in meta["read"]
        return False

    def put(self, principal, owner, path, data):
        check_path(path)
        state = self._state(owner)
        if principal != owner:
            if not (path.startswith("tmp/") and principal in state.temp_writers):
                raise AccessDeniedError(f"{principal} may not write {owner}:{path}")
        if path in state.objects:
            raise AlreadyExistsError(f"{owner}:{path} already exists")
        self._raw_put(owner, path, bytes(data))
        state.objects[path] = {"read": set(), "writer": principal}
        self._save_state(owner, state)

    def get(self, principal, owner, path):
        check_path(path)
        state = self._state(owner)
        meta = state.objects.get(path)
        if meta is None:
            if principal == owner or path.startswith("main/"):
                raise ObjectNotFoundError(f"{owner}:{path} does not exist")
            raise AccessDeniedError(f"{principal} may not read {owner}:{path}")
        if not self._can_read(principal, owner, path, meta):
            raise AccessDeniedError(f"{principal} may not read {owner}:{path}")
        return self._raw_get(owner, path)

    def list(self, principal, owner, prefix):
        state = self._state(owner)
        return sorted(p for p, meta in state.objects.items()
                      if p.startswith(prefix) and self._can_read(principal, owner, p, meta))

    def delete(self, principal, owner, path):
        state = self._state(owner)
        meta = state.objects.get(path)
        if meta is None:
            raise ObjectNotFoundError(f"{owner}:{path} does not exist")
        if principal != owner and not (path.startswith("tmp/") and meta["writer"] == principal):
            raise AccessDeniedError(f"{principal} may not delete {owner}:{path}")
        self._raw_delete(owner, path)
        del state.objects[path]
        self._save_state(owner, state)

    def set_read_acl(self, owner, path, principal, allow):
        state = self._state(owner)
        meta = state.objects.get(path)
        if meta is None:
            raise ObjectNotFoundError(f"{owner}:{path} does not exist")
        if allow:
            meta["read"].add(principal)
        else:
            meta["read"].discard(principal)
        self._save_state(owner, state)

    def read_acl(self, owner, path):
        meta = self._state(owner).objects.get(path)
        if meta is None:
            raise ObjectNotFoundError(f"{owner}:{path} does not exist")
        return set(meta["read"])

    def set_temp_write_acl(self, owner, principal, allow):
        state = self._state(owner)
        if allow:
            state.temp_writers.add(principal)
        else:
            state.temp_writers.discard(principal)
        self._save_state(owner, state)

    def temp_writers(self, owner):
        return set(self._state(owner).temp_writers)


class MemoryBackend(AclBackend):
    def __init__(self, accounts: Iterable[str] = ()):
        self._accounts: dict[str, _AccountState] = {}
        self._blobs: dict[tuple[str, str], bytes] = {}
        for a in accounts:
            self.create_account(a)

    def accounts(self):
        return sorted(self._accounts)

    def create_account(self, owner):
        self._accounts.setdefault(owner, _AccountState())

    def _state(self, owner):
        try:
            return self._accounts[owner]
        except KeyError:
            raise ObjectNotFoundError(f"no account {owner!r}") from None

    def _raw_put(self, owner, path, data):
        self._blobs[owner, path] = data

    def _raw_get(self, owner, path):
        return self._blobs[owner, path]

    def _raw_delete(self, owner, path):
        del self._blobs[owner, path]


class LocalBackend(AclBackend):
    """Accounts as directories under ``root/owners/<owner>/``.

    ACLs live in a sidecar ``.acl.json`` per account.
    """

    SIDECAR = ".acl.json"

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "owners").mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, _AccountState] = {}

    def _dir(self, owner: str) -> Path:
        check_path(owner)
        return self.root / "owners" / owner

    def accounts(self):
        return sorted(p.name for p in (self.root / "owners").iterdir() if p.is_dir())

    def create_account(self, owner):
        d = self._dir(owner)
        d.mkdir(parents=True, exist_ok=True)
        if not (d / self.SIDECAR).exists():
            self._save_state(owner, _AccountState())

    def _state(self, owner):
        sidecar = self._dir(owner) / self.SIDECAR
        if not sidecar.exists():
            raise ObjectNotFoundError(f"no account {owner!r}")
        doc = json.loads(sidecar.read_text())
        objects = {p: {"read": set(m["read"]), "writer": m["writer"]} for p, m in doc["objects"].items()}
        return _AccountState(doc["temp_writers"], objects)

    def _save_state(self, owner, state):
        doc = {"temp_writers": sorted(state.temp_writers),
               "objects": {p: {"read": sorted(m["read"]), "writer": m["writer"]}
                           for p, m in sorted(state.objects.items())}}
        sidecar = self._dir(owner) / self.SIDECAR
        tmp = sidecar.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        os.replace(tmp, sidecar)

    def _raw_put(self, owner, path, data):
        target = self._dir(owner) / path
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "xb") as fh:
            fh.write(data)

    def _raw_get(self, owner, path):
        return (self._dir(owner) / path).read_bytes()

    def _raw_delete(self, owner, path):
        (self._dir(owner) / path).unlink()


class AuditingBackend(StorageBackend):
    """Pass-through wrapper that records every successful write and read.

    ``overwrites`` lists paths that were written more than once without an
    intervening delete; it stays empty when the write-once rule holds.
    """

    def __init__(self, inner: StorageBackend):
        self.inner = inner
        self.writes: list[tuple[str, str, str]] = []
        self.live: set[tuple[str, str]] = set()
        self.overwrites: list[tuple[str, str]] = []
        self.reads: list[tuple[str, str, str]] = []

    def put(self, principal, owner, path, data):
        self.inner.put(principal, owner, path, data)
        if (owner, path) in self.live:
            self.overwrites.append((owner, path))
        self.live.add((owner, path))
        self.writes.append((principal, owner, path))

    def delete(self, principal, owner, path):
        self.inner.delete(principal, owner, path)
        self.live.discard((owner, path))

    def accounts(self):
        return self.inner.accounts()

    def create_account(self, owner):
        self.inner.create_account(owner)

    def get(self, principal, owner, path):
        data = self.inner.get(principal, owner, path)
        self.reads.append((principal, owner, path))
        return data

    def list(self, principal, owner, prefix):
        return self.inner.list(principal, owner, prefix)

    def set_read_acl(self, owner, path, principal, allow):
        self.inner.set_read_acl(owner, path, principal, allow)

    def read_acl(self, owner, path):
        return self.inner.read_acl(owner, path)

    def set_temp_write_acl(self, owner, principal, allow):
        self.inner.set_temp_write_acl(owner, principal, allow)

    def temp_writers(self, owner):
        return self.inner.temp_writers(owner)
