"""Shared-repository protocol over per-owner storage accounts.

Each call acts as one principal and touches only what that principal could
touch on a real object store; there is no coordinator.  The account layout
is::

    owners/<owner>/tmp/<file>/<version>/<unit>.tok            tokens (writers)
    owners/<owner>/tmp/<file>/<version>/manifest              proposed manifest
    owners/<owner>/main/<file>/<version>/<unit>.<reader>.etok endorsed tokens
    owners/<owner>/main/<file>/manifest.<version>             published manifest

Writers drop tokens and a proposed manifest into the ``tmp`` area of every
owner that lets them.  An owner's client publishes a proposal into ``main``
(:meth:`Repository.sync`) once the tokens it announces are present.  A
version counts as written when t owners publish byte-identical manifests
for it, which is only possible when t owners accepted the writer's tokens.
"""

from __future__ import annotations

import itertools
import logging
import random
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import gf256
from ..aont import DEFAULT_CIPHER, WideCipher
from ..codec import (CodecParams, EndorsedToken, Token, UnitPlaintext, build_unit_tokens, decode_unit,
                     deserialize_token, endorse_token, serialize_token)
from ..crss import Share
from ..errors import (AccessDeniedError, AlreadyExistsError, DuplicateFileError, FormatError,
                      InconsistentMetadataError, InsufficientTokensError, MissingTokensError,
                      ObjectNotFoundError, ParameterError, PollutedTokenError, UnsupportedOperationError)
from ..groups import DEFAULT_GROUP
from ..sfd import encoding_matrix
from .backends import PUBLIC, StorageBackend
from .manifest import VersionManifest, VersionRecord

log = logging.getLogger(__name__)

DEFAULT_UNIT_SIZE = 10 * 1024 * 1024
_NAME = re.compile(r"^[A-Za-z0-9_@-][A-Za-z0-9_.@-]*$")


def check_name(kind: str, value: str) -> str:
    if not isinstance(value, str) or not _NAME.match(value) or len(value) > 200:
        raise ParameterError(f"invalid {kind} {value!r}: use letters, digits and _ . @ -")
    return value


def token_path(name: str, version: int, unit: int) -> str:
    return f"tmp/{name}/{version}/{unit}.tok"


def pending_manifest_path(name: str, version: int) -> str:
    return f"tmp/{name}/{version}/manifest"


def endorsed_path(name: str, version: int, unit: int, reader: str) -> str:
    return f"main/{name}/{version}/{unit}.{reader}.etok"


def manifest_path(name: str, version: int) -> str:
    return f"main/{name}/manifest.{version}"


@dataclass(frozen=True)
class WriteResult:
    accepted: bool
    version: int
    granting: tuple[str, ...]
    threshold: int

    @property
    def count(self) -> int:
        return len(self.granting)


class Repository:
    """Client-side protocol logic for files shared by a set of owners."""

    def __init__(self, backend: StorageBackend, *, piece_size: int = 128, unit_size: int = DEFAULT_UNIT_SIZE,
                 lam: int = 128, symbol_size: int = 16, group=DEFAULT_GROUP, cipher: WideCipher = DEFAULT_CIPHER,
                 rng: random.Random | None = None):
        if unit_size <= 0 or unit_size % piece_size:
            raise ParameterError(f"unit size {unit_size} must be a positive multiple of the piece size {piece_size}")
        self.backend = backend
        self.piece_size = piece_size
        self.unit_size = unit_size
        self.lam = lam
        self.symbol_size = symbol_size
        self.group = group
        self.cipher = cipher
        self.rng = rng or random.SystemRandom()

    def params(self, t: int, n: int, piece_size: int | None = None) -> CodecParams:
        return CodecParams(t, n, piece_size or self.piece_size, self.lam, self.symbol_size)

    def file_params(self, manifest: VersionManifest, record: VersionRecord | None = None) -> CodecParams:
        """Codec parameters a file was created with."""
        record = record or manifest.latest
        return self.params(manifest.threshold, len(record.owners), manifest.piece_size)

    # -- helpers ---------------------------------------------------------

    def _split(self, content: bytes) -> list[bytes]:
        return [content[i:i + self.unit_size] for i in range(0, len(content), self.unit_size)]

    def _build(self, params: CodecParams, unit: int, data: bytes, version: int):
        return build_unit_tokens(UnitPlaintext(unit, data), params, self.group, self.rng, version, self.cipher)

    def _rollback(self, principal: str, done: list[tuple[str, str]]) -> None:
        for owner, path in reversed(done):
            try:
                self.backend.delete(principal, owner, path)
            except Exception:  # best effort; leftovers are never published
                log.warning("could not remove %s:%s during rollback", owner, path)

    def _published_versions(self, principal: str, owner: str, name: str) -> list[int]:
        prefix = f"main/{name}/manifest."
        out = []
        for p in self.backend.list(principal, owner, prefix):
            suffix = p[len(prefix):]
            if suffix.isdigit():
                out.append(int(suffix))
        return sorted(out)

    def _own_manifest(self, owner: str, name: str, version: int | None = None) -> VersionManifest:
        versions = self._published_versions(owner, owner, name)
        if not versions:
            raise MissingTokensError(f"{owner} has published no manifest for {name}")
        version = versions[-1] if version is None else version
        if version not in versions:
            raise MissingTokensError(f"{owner} holds no manifest for {name} version {version}")
        return VersionManifest.from_bytes(self.backend.get(owner, owner, manifest_path(name, version)))

    def quorum_manifest(self, principal: str, name: str, version: int | None = None) -> VersionManifest:
        """Manifest that t listed owners publish byte-identically.

        With ``version=None`` the newest version with such a quorum wins.
        """
        check_name("file name", name)
        holdings: dict[int, list[str]] = {}
        for account in self.backend.accounts():
            for v in self._published_versions(principal, account, name):
                holdings.setdefault(v, []).append(account)
        if not holdings:
            raise ObjectNotFoundError(f"no file named {name!r}")
        if version is not None:
            if version not in holdings:
                raise InsufficientTokensError(f"{name} version {version} is published by no owner")
            return self._quorum_for(principal, name, version, holdings[version])
        first_error: Exception | None = None
        for v in sorted(holdings, reverse=True):
            try:
                return self._quorum_for(principal, name, v, holdings[v])
            except InconsistentMetadataError as exc:
                first_error = first_error or exc
        assert first_error is not None
        raise first_error

    def _quorum_for(self, principal: str, name: str, version: int, accounts: list[str]) -> VersionManifest:
        blobs: dict[bytes, list[str]] = {}
        for account in accounts:
            try:
                blobs.setdefault(self.backend.get(principal, account, manifest_path(name, version)), []).append(account)
            except (AccessDeniedError, ObjectNotFoundError):
                continue
        valid = []
        best = 0
        for blob, holders in blobs.items():
            try:
                m = VersionManifest.from_bytes(blob)
                record = m.record(version)
            except (FormatError, KeyError):
                continue
            if m.name != name or m.latest.version != version:
                continue
            support = len(set(holders) & set(record.owners))
            best = max(best, support)
            if support >= m.threshold:
                valid.append(m)
        if len(valid) == 1:
            return valid[0]
        if len(valid) > 1:
            raise InconsistentMetadataError(f"{name} v{version}: conflicting manifests each have a quorum")
        raise InconsistentMetadataError(f"{name} v{version}: only {best} listed owners publish one "
                                        "identical manifest")

    # -- write side ------------------------------------------------------

    def create_file(self, creator: str, name: str, t: int, owners: Sequence[str], content: bytes) -> VersionManifest:
        """Encode ``content`` as version 1 and upload one token per unit to every owner.

        All-or-nothing: if any owner refuses, uploads already made are removed.
        """
        check_name("identity", creator)
        check_name("file name", name)
        owners = tuple(check_name("owner", o) for o in owners)
        if len(set(owners)) != len(owners):
            raise ParameterError("owner list has duplicates")
        if not content:
            raise ParameterError("cannot create an empty file")
        params = self.params(t, len(owners))
        for account in self.backend.accounts():
            if self._published_versions(creator, account, name):
                raise DuplicateFileError(f"a file named {name!r} already exists")
        units = self._split(content)
        built = [self._build(params, i, data, 1) for i, data in enumerate(units, start=1)]
        record = VersionRecord(1, None, creator, owners, tuple(d for _, _, d in built))
        manifest = VersionManifest(name, t, (record,), self.piece_size, self.unit_size)
        blob = manifest.to_bytes()
        done: list[tuple[str, str]] = []
        try:
            for j, owner in enumerate(owners):
                self.backend.put(creator, owner, pending_manifest_path(name, 1), blob)
                done.append((owner, pending_manifest_path(name, 1)))
                for unit, (_, tokens, _) in enumerate(built, start=1):
                    path = token_path(name, 1, unit)
                    self.backend.put(creator, owner, path, serialize_token(tokens[j], self.group))
                    done.append((owner, path))
        except AlreadyExistsError:
            self._rollback(creator, done)
            raise DuplicateFileError(f"a file named {name!r} already exists") from None
        except (AccessDeniedError, ObjectNotFoundError) as exc:
            self._rollback(creator, done)
            raise AccessDeniedError(f"creation of {name!r} failed, nothing was kept: {exc}") from exc
        return manifest

    def write_version(self, writer: str, name: str, changed_units: Mapping[int, bytes]) -> WriteResult:
        """Propose a new version replacing (or appending) the given units.

        Tokens go only to owners that grant the writer temp-write.  The
        version is accepted iff at least t of them took the tokens.
        """
        check_name("identity", writer)
        if not changed_units:
            raise ParameterError("a new version must change at least one unit")
        parent = self.quorum_manifest(writer, name)
        last = parent.latest
        k = len(last.units)
        indices = sorted(changed_units)
        if indices[0] < 1:
            raise ParameterError("unit indices start at 1")
        new_units = [i for i in indices if i > k]
        if new_units and new_units != list(range(k + 1, k + 1 + len(new_units))):
            raise ParameterError("appended units must follow the last unit without gaps")
        if any(not changed_units[i] or len(changed_units[i]) > parent.unit_size for i in indices):
            raise ParameterError(f"each unit must hold 1..{parent.unit_size} bytes")
        owners = last.owners
        params = self.file_params(parent)
        version = last.version + 1
        while True:
            built = {i: self._build(params, i, changed_units[i], version) for i in indices}
            digests = {u.unit_index: u for u in last.units}
            digests.update({i: d for i, (_, _, d) in built.items()})
            record = VersionRecord(version, last.version, writer, owners,
                                   tuple(digests[i] for i in sorted(digests)))
            try:
                granting = self._distribute(writer, name, version, owners, built, parent.extend(record))
            except AlreadyExistsError:
                log.info("version %s of %s is taken, retrying as %s", version, name, version + 1)
                version += 1
                continue
            break
        accepted = len(granting) >= parent.threshold
        if not accepted:
            log.info("%s v%s rejected: %d of %d owners took the tokens", name, version, len(granting), parent.threshold)
            self._rollback(writer, [(o, p) for o in granting for p in self._uploads(name, version, built)])
        return WriteResult(accepted, version, tuple(granting), parent.threshold)

    @staticmethod
    def _uploads(name, version, built) -> list[str]:
        return [token_path(name, version, u) for u in built] + [pending_manifest_path(name, version)]

    def _distribute(self, writer, name, version, owners, built, manifest) -> list[str]:
        done: list[tuple[str, str]] = []
        granting = []
        try:
            for j, owner in enumerate(owners):
                try:
                    for unit, (_, tokens, _) in built.items():
                        path = token_path(name, version, unit)
                        self.backend.put(writer, owner, path, serialize_token(tokens[j], self.group))
                        done.append((owner, path))
                    path = pending_manifest_path(name, version)
                    self.backend.put(writer, owner, path, manifest.to_bytes())
                    done.append((owner, path))
                except (AccessDeniedError, ObjectNotFoundError):
                    continue
                granting.append(owner)
        except AlreadyExistsError:
            self._rollback(writer, done)
            raise
        return granting

    def grant_write(self, owner: str, writer: str) -> None:
        self.backend.set_temp_write_acl(owner, check_name("identity", writer), True)
        self.sync(owner)

    def revoke_write(self, owner: str, writer: str) -> None:
        self.backend.set_temp_write_acl(owner, check_name("identity", writer), False)
        self.sync(owner)

    def write_grants(self, owner: str) -> set[str]:
        """Principals currently allowed to drop tokens on ``owner``'s account."""
        return self.backend.temp_writers(owner)

    def sync(self, owner: str, name: str | None = None) -> list[tuple[str, int]]:
        """Publish pending manifests whose announced tokens arrived.

        Returns the ``(file, version)`` pairs published by this call.
        """
        pending = []
        for path in self.backend.list(owner, owner, "tmp/"):
            parts = path.split("/")
            if len(parts) == 4 and parts[3] == "manifest" and parts[2].isdigit():
                if name is None or parts[1] == name:
                    pending.append((parts[1], int(parts[2])))
        published = []
        for fname, version in sorted(pending, key=lambda p: (p[0], p[1])):
            if version in self._published_versions(owner, owner, fname):
                continue
            if self._accept_pending(owner, fname, version):
                path = manifest_path(fname, version)
                self.backend.put(owner, owner, path,
                                 self.backend.get(owner, owner, pending_manifest_path(fname, version)))
                self.backend.set_read_acl(owner, path, PUBLIC, True)
                published.append((fname, version))
        return published

    def _accept_pending(self, owner: str, name: str, version: int) -> bool:
        try:
            m = VersionManifest.from_bytes(self.backend.get(owner, owner, pending_manifest_path(name, version)))
        except FormatError as exc:
            log.warning("%s ignores a malformed manifest for %s v%s: %s", owner, name, version, exc)
            return False
        record = m.latest
        if m.name != name or record.version != version or owner not in record.owners:
            return False
        previous = self._published_versions(owner, owner, name)
        if previous:
            known = VersionManifest.from_bytes(self.backend.get(owner, owner, manifest_path(name, previous[-1])))
            if (known.threshold, known.piece_size, known.unit_size) != (m.threshold, m.piece_size, m.unit_size):
                log.warning("%s rejects %s v%s: threshold and sizes cannot change", owner, name, version)
                return False
            if record.owners[:len(known.owners)] != known.owners:
                log.warning("%s rejects %s v%s: owners can only be added", owner, name, version)
                return False
        have = set(self.backend.list(owner, owner, f"tmp/{name}/"))
        needed = {token_path(name, u.version, u.unit_index) for u in record.units if u.version == version}
        return needed <= have

    # -- read side -------------------------------------------------------

    def grant_read(self, owner: str, reader: str, name: str, version: int) -> int:
        """Endorse, for ``reader``, the latest token of every unit as of ``version``.

        Returns how many tokens were newly endorsed; tokens endorsed for an
        earlier grant are reused.
        """
        check_name("identity", reader)
        self.sync(owner, name)
        manifest = self._own_manifest(owner, name, version)
        record = manifest.record(version)
        if owner not in record.owners:
            raise MissingTokensError(f"{owner} is not an owner of {name} v{version}")
        index = record.owners.index(owner) + 1
        existing = set(self.backend.list(owner, owner, f"main/{name}/"))
        fresh = 0
        for unit in record.units:
            path = endorsed_path(name, unit.version, unit.unit_index, reader)
            if path not in existing:
                try:
                    raw = self.backend.get(owner, owner, token_path(name, unit.version, unit.unit_index))
                except ObjectNotFoundError:
                    raise MissingTokensError(f"{owner} lacks the token for unit {unit.unit_index}@v{unit.version}") from None
                token = deserialize_token(raw, self.group)
                if not isinstance(token, Token) or token.owner_index != index:
                    raise MissingTokensError(f"{owner} holds a foreign token for unit {unit.unit_index}")
                endorsed = endorse_token(self.group, token, reader)
                self.backend.put(owner, owner, path, serialize_token(endorsed, self.group))
                fresh += 1
            self.backend.set_read_acl(owner, path, reader, True)
        return fresh

    def _needed_paths(self, name: str, record: VersionRecord, reader: str) -> dict[str, int]:
        return {endorsed_path(name, u.version, u.unit_index, reader): u.version for u in record.units}

    def read_grants(self, owner: str, reader: str, name: str) -> set[int]:
        """Versions of ``name`` that ``owner`` currently lets ``reader`` read."""
        granted = set()
        for v in self._published_versions(owner, owner, name):
            record = self._own_manifest(owner, name, v).record(v)
            if owner in record.owners and self._is_granted(owner, reader, name, record):
                granted.add(v)
        return granted

    def _is_granted(self, owner: str, reader: str, name: str, record: VersionRecord) -> bool:
        existing = set(self.backend.list(owner, owner, f"main/{name}/"))
        for path in self._needed_paths(name, record, reader):
            if path not in existing or reader not in self.backend.read_acl(owner, path):
                return False
        return True

    def revoke_read(self, owner: str, reader: str, name: str, version: int) -> list[str]:
        """Deny ``reader`` access to ``version``.

        Only tokens uploaded at ``version`` itself lose their ACL, and only
        when no other version still granted to the reader uses them.
        Returns the paths whose ACL was removed.
        """
        record = self._own_manifest(owner, name, version).record(version)
        protected: set[str] = set()
        for v in self._published_versions(owner, owner, name):
            if v == version:
                continue
            other = self._own_manifest(owner, name, v).record(v)
            if owner in other.owners and self._is_granted(owner, reader, name, other):
                protected |= set(self._needed_paths(name, other, reader))
        existing = set(self.backend.list(owner, owner, f"main/{name}/"))
        revoked = []
        for path, token_version in self._needed_paths(name, record, reader).items():
            if token_version == version and path not in protected and path in existing:
                if reader in self.backend.read_acl(owner, path):
                    self.backend.set_read_acl(owner, path, reader, False)
                    revoked.append(path)
        return revoked

    def read_version(self, reader: str, name: str, version: int | None = None) -> bytes:
        """Reassemble a file version from endorsed tokens of t owners.

        Raises :class:`InsufficientTokensError` before decoding anything if
        some unit lacks t granting owners.
        """
        check_name("identity", reader)
        manifest = self.quorum_manifest(reader, name, version)
        record = manifest.latest if version is None else manifest.record(version)
        params = self.file_params(manifest, record)
        listings: dict[tuple[str, int], set[str]] = {}
        sources: dict[int, list[tuple[int, str]]] = {}
        for unit in record.units:
            found = []
            for j, owner in enumerate(record.owners, start=1):
                key = (owner, unit.version)
                if key not in listings:
                    try:
                        listings[key] = set(self.backend.list(reader, owner, f"main/{name}/{unit.version}/"))
                    except ObjectNotFoundError:
                        listings[key] = set()
                if endorsed_path(name, unit.version, unit.unit_index, reader) in listings[key]:
                    found.append((j, owner))
            if len(found) < params.t:
                raise InsufficientTokensError(
                    f"{reader} holds grants from {len(found)} of the {params.t} owners needed for unit "
                    f"{unit.unit_index} of {name} v{record.version}")
            sources[unit.unit_index] = found
        out = []
        for unit in record.units:
            out.append(self._read_unit(reader, name, unit, sources[unit.unit_index], params))
        return b"".join(out)

    def _read_unit(self, reader, name, unit, found, params) -> bytes:
        found = list(found)
        self.rng.shuffle(found)
        cache: dict[int, EndorsedToken | None] = {}

        def fetch(j: int, owner: str) -> EndorsedToken | None:
            if j not in cache:
                try:
                    raw = self.backend.get(reader, owner, endorsed_path(name, unit.version, unit.unit_index, reader))
                    tok = deserialize_token(raw, self.group)
                    ok = (isinstance(tok, EndorsedToken) and tok.owner_index == j and tok.identity == reader
                          and tok.unit_index == unit.unit_index and tok.version == unit.version)
                    cache[j] = tok if ok else None
                except (FormatError, AccessDeniedError, ObjectNotFoundError):
                    cache[j] = None
            return cache[j]

        last_error: Exception | None = None
        for combo in itertools.combinations(found, params.t):
            tokens = [fetch(j, owner) for j, owner in combo]
            if any(tok is None for tok in tokens):
                continue
            try:
                return decode_unit(tokens, unit, params, self.group, self.cipher).data
            except (PollutedTokenError, FormatError) as exc:
                last_error = exc
                log.warning("polluted tokens for %s unit %s among owners %s", name, unit.unit_index,
                            [o for _, o in combo])
        raise last_error or PollutedTokenError(f"no t well-formed endorsed tokens for unit {unit.unit_index}")

    # -- ownership changes -----------------------------------------------

    def change_threshold(self, name: str, threshold: int) -> None:
        raise UnsupportedOperationError(
            "the threshold is fixed at creation: owners cannot be forced to replace their tokens, "
            "so a change would leave tokens for two thresholds in circulation")

    def revoke_owner(self, name: str, owner: str) -> None:
        raise UnsupportedOperationError(
            "an owner's tokens cannot be removed from its account without its consent")

    def add_owner(self, name: str, new_owner: str, contributors: Sequence[str]) -> VersionManifest:
        """Give ``new_owner`` tokens for the current version, computed by t owners.

        Each contributor derives its part of the new chunk and share from its
        own token locally; the new owner only sums the parts.  A new manifest
        version carrying the extended owner list is published by the
        contributors and the new owner.
        """
        check_name("owner", new_owner)
        for c in contributors:
            self.sync(c, name)
        manifest = self._own_manifest(contributors[0], name)
        record = manifest.latest
        owners = record.owners
        t = manifest.threshold
        if new_owner in owners:
            raise ParameterError(f"{new_owner} already owns {name}")
        if len(set(contributors)) < t or any(c not in owners for c in contributors):
            raise ParameterError(f"adding an owner needs {t} distinct current owners")
        contributors = list(dict.fromkeys(contributors))[:t]
        for c in contributors[1:]:
            if self._own_manifest(c, name).to_bytes() != manifest.to_bytes():
                raise InconsistentMetadataError(f"{c} disagrees on the latest manifest of {name}")
        n_new = len(owners) + 1
        rows = [owners.index(c) for c in contributors]
        row_new = encoding_matrix(t, n_new)[n_new - 1]
        chunk_coeffs = gf256.mat_mul([list(row_new)], gf256.mat_inv([list(encoding_matrix(t, n_new)[r]) for r in rows]))[0]
        q = self.group.order
        share_coeffs = _lagrange_at(rows, n_new, q)
        self.backend.create_account(new_owner)
        for unit in record.units:
            parts = []
            for c, r, cc, sc in zip(contributors, rows, chunk_coeffs, share_coeffs):
                tok = deserialize_token(self.backend.get(c, c, token_path(name, unit.version, unit.unit_index)),
                                        self.group)
                payload = gf256.combine_rows([cc], [_as_array(tok.payload)])
                parts.append((payload, sc * tok.share.x % q, sc * tok.share.y % q, tok))
            payload = parts[0][0].copy()
            for p in parts[1:]:
                payload ^= p[0]
            share = Share(n_new, sum(p[1] for p in parts) % q, sum(p[2] for p in parts) % q)
            ref = parts[0][3]
            new_tok = Token(unit.unit_index, n_new, unit.version, ref.piece_count, ref.chunk_bytes,
                            payload.tobytes(), share)
            self.backend.put(new_owner, new_owner, token_path(name, unit.version, unit.unit_index),
                             serialize_token(new_tok, self.group))
        version = record.version + 1
        extended = manifest.extend(VersionRecord(version, record.version, f"add-owner:{new_owner}",
                                                 owners + (new_owner,), record.units))
        for account in contributors + [new_owner]:
            self.backend.put(account, account, pending_manifest_path(name, version), extended.to_bytes())
            self.sync(account, name)
        return extended


def _as_array(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=np.uint8)


def _lagrange_at(rows: list[int], n_new: int, q: int) -> list[int]:
    """Lagrange basis at the new index ``n_new`` over 1-based share indices."""
    idx = [r + 1 for r in rows]
    out = []
    for p, ip in enumerate(idx):
        num = den = 1
        for k, ik in enumerate(idx):
            if k != p:
                num = num * (n_new - ik) % q
                den = den * (ip - ik) % q
        out.append(num * pow(den, -1, q) % q)
    return out
