import dataclasses
import os
import random

import numpy as np
import pytest

from coown.codec import decode_unit, deserialize_token
from coown.crss import crss_combine, kdf
from coown.errors import (AccessDeniedError, DuplicateFileError, FormatError, InconsistentMetadataError,
                          InsufficientChunksError, InsufficientTokensError, MissingTokensError, ObjectNotFoundError,
                          ParameterError, PollutedTokenError, UnsupportedOperationError)
from coown.repo import PUBLIC, AuditingBackend, LocalBackend, MemoryBackend, Repository, VersionManifest
from coown.repo.protocol import endorsed_path, manifest_path, pending_manifest_path, token_path
from coown.sfd import ids_decode_batch

UNIT = 512


def world(t=2, n=3, backend=None, creator="alice", extra=("bob", "carol", "writer")):
    owners = [f"o{j}" for j in range(1, n + 1)]
    backend = backend if backend is not None else MemoryBackend()
    for a in owners + [creator, *extra]:
        backend.create_account(a)
    repo = Repository(backend, unit_size=UNIT, rng=random.Random(0))
    for o in owners:
        repo.grant_write(o, creator)
    return repo, owners


def create(repo, owners, t, content, name="F", creator="alice"):
    m = repo.create_file(creator, name, t, owners, content)
    for o in owners:
        repo.sync(o)
    return m


def grant_all(repo, owners, reader, version, name="F"):
    return [repo.grant_read(o, reader, name, version) for o in owners]


def unit_versions(repo, name, version):
    record = repo.quorum_manifest("bob", name, version).record(version)
    return {u.unit_index: u.version for u in record.units}


# -- creation ------------------------------------------------------------------

def test_default_parameters_create_one_unit_and_ten_tokens():
    backend = MemoryBackend()
    owners = [f"o{j}" for j in range(1, 11)]
    for a in owners + ["alice"]:
        backend.create_account(a)
    repo = Repository(backend)
    for o in owners:
        repo.grant_write(o, "alice")
    data = os.urandom(10 << 20)
    m = repo.create_file("alice", "F", 4, owners, data)
    assert (m.threshold, len(m.owners), len(m.latest.units), m.latest.version) == (4, 10, 1, 1)
    for o in owners:
        assert backend.list(o, o, "tmp/F/1/") == ["tmp/F/1/1.tok", "tmp/F/1/manifest"]
        repo.sync(o)
    assert repo.quorum_manifest("bob", "F") == m


def test_roundtrip_multi_unit():
    repo, owners = world(2, 3)
    data = os.urandom(5 * UNIT - 17)
    create(repo, owners, 2, data)
    grant_all(repo, owners, "bob", 1)
    assert repo.read_version("bob", "F", 1) == data
    assert repo.read_version("bob", "F") == data


def test_individual_ownership():
    repo, owners = world(1, 1)
    data = os.urandom(1000)
    create(repo, owners, 1, data)
    assert repo.grant_read("o1", "bob", "F", 1) == 2
    assert repo.read_version("bob", "F") == data
    with pytest.raises(InsufficientTokensError):
        repo.read_version("carol", "F")


def test_duplicate_name_changes_nothing():
    backend = AuditingBackend(MemoryBackend())
    repo, owners = world(2, 3, backend)
    create(repo, owners, 2, b"x" * 100)
    before = len(backend.writes)
    with pytest.raises(DuplicateFileError):
        repo.create_file("alice", "F", 2, owners, b"y" * 100)
    assert len(backend.writes) == before


def test_creation_is_atomic_when_an_owner_refuses():
    backend = MemoryBackend()
    repo, owners = world(2, 3, backend)
    repo.revoke_write("o3", "alice")
    with pytest.raises(AccessDeniedError):
        repo.create_file("alice", "F", 2, owners, os.urandom(1500))
    for o in owners:
        assert backend.list(o, o, "") == []
    with pytest.raises(ObjectNotFoundError):
        repo.quorum_manifest("bob", "F")


def test_creation_parameter_errors():
    repo, owners = world(2, 3)
    with pytest.raises(ParameterError):
        repo.create_file("alice", "F", 4, owners, b"x")
    with pytest.raises(ParameterError):
        repo.create_file("alice", "F", 2, owners, b"")
    with pytest.raises(ParameterError):
        repo.create_file("alice", "a/b", 2, owners, b"x")
    with pytest.raises(ParameterError):
        repo.create_file("alice", "F", 2, ["o1", "o1", "o2"], b"x")


# -- versions ------------------------------------------------------------------

@pytest.fixture
def history5():
    """Five units over four versions; v4 mixes tokens from v2, v3 and v4."""
    repo, owners = world(2, 3)
    for o in owners:
        repo.grant_write(o, "writer")
    rng = random.Random(9)
    units = {i: rng.randbytes(UNIT) for i in range(1, 6)}
    create(repo, owners, 2, b"".join(units[i] for i in range(1, 6)))
    history = {1: dict(units)}
    for version, changed in [(2, (5, 2)), (3, (1, 3)), (4, (2, 3, 4))]:
        delta = {i: rng.randbytes(UNIT) for i in changed}
        result = repo.write_version("writer", "F", delta)
        assert result.accepted and result.version == version
        for o in owners:
            repo.sync(o)
        units.update(delta)
        history[version] = dict(units)
    return repo, owners, history


def _content(snapshot):
    return b"".join(snapshot[i] for i in sorted(snapshot))


def test_history_latest_token_versions(history5):
    repo, owners, history = history5
    assert unit_versions(repo, "F", 4) == {1: 3, 2: 4, 3: 4, 4: 4, 5: 2}
    assert unit_versions(repo, "F", 2) == {1: 1, 2: 2, 3: 1, 4: 1, 5: 2}


def test_history_grant_endorses_the_right_tokens(history5):
    repo, owners, history = history5
    assert repo.grant_read("o1", "bob", "F", 4) == 5
    listed = repo.backend.list("bob", "o1", "main/F/")
    etoks = sorted(p for p in listed if p.endswith(".etok"))
    assert etoks == sorted(endorsed_path("F", v, u, "bob") for u, v in {1: 3, 2: 4, 3: 4, 4: 4, 5: 2}.items())


def test_history_every_version_reads_back(history5):
    repo, owners, history = history5
    for v in range(1, 5):
        grant_all(repo, owners, "bob", v)
    for v, snapshot in history.items():
        assert repo.read_version("bob", "F", v) == _content(snapshot)


def test_shared_tokens_are_endorsed_once(history5):
    repo, owners, _ = history5
    assert repo.grant_read("o1", "bob", "F", 3) == 5
    # v4 reuses F1@3 and F5@2 from the v3 grant
    assert repo.grant_read("o1", "bob", "F", 4) == 3
    assert repo.grant_read("o1", "bob", "F", 4) == 0


def test_revoking_one_version_keeps_tokens_of_granted_versions(history5):
    repo, owners, history = history5
    for o in owners:
        repo.grant_read(o, "bob", "F", 3)
        repo.grant_read(o, "bob", "F", 4)
    revoked = repo.revoke_read("o1", "bob", "F", 4)
    assert sorted(revoked) == sorted(endorsed_path("F", 4, u, "bob") for u in (2, 3, 4))
    assert "bob" in repo.backend.read_acl("o1", endorsed_path("F", 3, 1, "bob"))
    assert repo.read_grants("o1", "bob", "F") == {3}
    assert repo.read_version("bob", "F", 3) == _content(history[3])


def test_revoking_spares_tokens_inherited_from_older_versions(history5):
    repo, owners, _ = history5
    for o in owners:
        repo.grant_read(o, "bob", "F", 2)
    # v2 uploaded only F2 and F5, so F1, F3 and F4 from v1 keep their ACL
    revoked = repo.revoke_read("o1", "bob", "F", 2)
    assert sorted(revoked) == sorted(endorsed_path("F", 2, u, "bob") for u in (2, 5))
    assert "bob" in repo.backend.read_acl("o1", endorsed_path("F", 1, 1, "bob"))


def test_revoked_below_threshold_cannot_read(history5):
    repo, owners, _ = history5
    grant_all(repo, owners, "bob", 4)
    repo.revoke_read("o1", "bob", "F", 4)
    repo.revoke_read("o2", "bob", "F", 4)
    with pytest.raises(InsufficientTokensError):
        repo.read_version("bob", "F", 4)


def test_unchanged_units_need_no_uploads():
    backend = AuditingBackend(MemoryBackend())
    repo, owners = world(2, 3, backend)
    for o in owners:
        repo.grant_write(o, "writer")
    create(repo, owners, 2, os.urandom(4 * UNIT))
    start = len(backend.writes)
    repo.write_version("writer", "F", {3: os.urandom(UNIT)})
    writes = backend.writes[start:]
    assert sorted(p for _, _, p in writes if p.endswith(".tok")) == [token_path("F", 2, 3)] * 3


def test_append_and_shrink_tail():
    repo, owners = world(2, 3)
    for o in owners:
        repo.grant_write(o, "writer")
    base = os.urandom(2 * UNIT)
    create(repo, owners, 2, base)
    assert repo.write_version("writer", "F", {3: b"tail"}).accepted
    for o in owners:
        repo.sync(o)
    grant_all(repo, owners, "bob", 2)
    assert repo.read_version("bob", "F", 2) == base + b"tail"
    with pytest.raises(ParameterError):
        repo.write_version("writer", "F", {5: b"gap"})
    with pytest.raises(ParameterError):
        repo.write_version("writer", "F", {1: os.urandom(UNIT + 1)})
    with pytest.raises(ParameterError):
        repo.write_version("writer", "F", {})


def test_threshold_rule_for_writes():
    backend = MemoryBackend()
    owners = [f"o{j}" for j in range(1, 11)]
    for a in owners + ["alice", "writer", "bob"]:
        backend.create_account(a)
    repo = Repository(backend, unit_size=UNIT, rng=random.Random(1))
    for o in owners:
        repo.grant_write(o, "alice")
    create(repo, owners, 4, os.urandom(UNIT))
    for o in owners[:4]:
        repo.grant_write(o, "writer")
    ok = repo.write_version("writer", "F", {1: b"four owners"})
    assert ok.accepted and ok.count == 4 and ok.granting == tuple(owners[:4])
    holders = [o for o in owners if backend.list(o, o, "tmp/F/2/")]
    assert holders == owners[:4]
    for o in owners:
        repo.sync(o)
    with pytest.raises(MissingTokensError):
        repo.grant_read("o5", "bob", "F", 2)
    grant_all(repo, owners[:4], "bob", 2)
    assert repo.read_version("bob", "F", 2) == b"four owners"

    repo.revoke_write("o4", "writer")
    bad = repo.write_version("writer", "F", {1: b"three owners"})
    assert not bad.accepted and bad.count == 3 and bad.version == 3
    for o in owners:
        assert backend.list(o, o, "tmp/F/3/") == []
        repo.sync(o)
    with pytest.raises(InsufficientTokensError):
        repo.read_version("bob", "F", 3)
    assert repo.read_version("bob", "F") == b"four owners"


def test_non_owner_cannot_publish_or_read_tmp():
    repo, owners = world(2, 3)
    create(repo, owners, 2, b"secret" * 20)
    with pytest.raises(AccessDeniedError):
        repo.backend.put("alice", "o1", "main/F/manifest.9", b"x")
    with pytest.raises(AccessDeniedError):
        repo.backend.get("bob", "o1", token_path("F", 1, 1))
    assert repo.backend.list("bob", "o1", "tmp/") == []


def test_concurrent_writers_both_persist():
    repo, owners = world(2, 3)
    for o in owners:
        repo.grant_write(o, "writer")
        repo.grant_write(o, "carol")
    create(repo, owners, 2, os.urandom(UNIT))
    first = repo.write_version("writer", "F", {1: b"from writer"})
    # carol has not seen the new manifest yet: owners have not synced
    second = repo.write_version("carol", "F", {1: b"from carol"})
    assert (first.version, second.version) == (2, 3)
    for o in owners:
        repo.sync(o)
    grant_all(repo, owners, "bob", 2)
    grant_all(repo, owners, "bob", 3)
    assert repo.read_version("bob", "F", 2) == b"from writer"
    assert repo.read_version("bob", "F", 3) == b"from carol"


def test_write_once_audit():
    backend = AuditingBackend(MemoryBackend())
    repo, owners = world(2, 3, backend)
    for o in owners:
        repo.grant_write(o, "writer")
    create(repo, owners, 2, os.urandom(3 * UNIT))
    for i in range(4):
        repo.write_version("writer", "F", {1 + i % 3: os.urandom(UNIT)})
        for o in owners:
            repo.sync(o)
        grant_all(repo, owners, "bob", i + 2)
        repo.read_version("bob", "F")
    repo.revoke_write("o2", "writer")
    repo.revoke_write("o3", "writer")
    repo.write_version("writer", "F", {1: b"rejected"})
    assert backend.overwrites == []
    assert len(backend.writes) > 50


# -- manifests -----------------------------------------------------------------

def test_manifest_tamper_by_few_owners_is_detected():
    repo, owners = world(3, 4)
    create(repo, owners, 3, os.urandom(700))
    grant_all(repo, owners, "bob", 1)
    forged = VersionManifest.from_bytes(repo.backend.get("o1", "o1", manifest_path("F", 1)))
    forged = dataclasses.replace(forged, name="F", threshold=3)
    # a lying owner cannot overwrite; it can only publish a forged version 2
    record = dataclasses.replace(forged.latest, version=2, parent=1, writer="mallory")
    fake = forged.extend(record)
    for o in owners[:2]:
        repo.backend.put(o, o, manifest_path("F", 2), fake.to_bytes())
        repo.backend.set_read_acl(o, manifest_path("F", 2), PUBLIC, True)
    with pytest.raises(InconsistentMetadataError):
        repo.quorum_manifest("bob", "F", 2)
    # the newest version with a quorum is still version 1
    assert repo.quorum_manifest("bob", "F").latest.version == 1


def test_missing_file_and_version():
    repo, owners = world(2, 3)
    with pytest.raises(ObjectNotFoundError):
        repo.read_version("bob", "nope")
    create(repo, owners, 2, b"abc")
    with pytest.raises(InsufficientTokensError):
        repo.read_version("bob", "F", 7)


def test_manifest_serialization_roundtrip():
    repo, owners = world(2, 3)
    m = create(repo, owners, 2, os.urandom(1200))
    assert VersionManifest.from_bytes(m.to_bytes()) == m
    assert m.to_bytes() == VersionManifest.from_bytes(m.to_bytes()).to_bytes()
    with pytest.raises(FormatError):
        VersionManifest.from_bytes(b"{not json")


def test_owner_ignores_pending_manifest_without_tokens():
    repo, owners = world(2, 3)
    create(repo, owners, 2, os.urandom(300))
    m = repo.quorum_manifest("alice", "F")
    record = dataclasses.replace(m.latest, version=2, parent=1,
                                 units=tuple(dataclasses.replace(u, version=2) for u in m.latest.units))
    repo.backend.put("alice", "o1", pending_manifest_path("F", 2), m.extend(record).to_bytes())
    assert repo.sync("o1") == []


def test_owner_rejects_threshold_change_in_pending_manifest():
    repo, owners = world(2, 3)
    for o in owners:
        repo.grant_write(o, "writer")
    create(repo, owners, 2, os.urandom(300))
    repo.write_version("writer", "F", {1: b"new"})
    pending = VersionManifest.from_bytes(repo.backend.get("o1", "o1", pending_manifest_path("F", 2)))
    lowered = dataclasses.replace(pending, threshold=1)
    repo.backend.put("writer", "o1", pending_manifest_path("F", 3), lowered.to_bytes())
    published = set(repo.sync("o1"))
    assert ("F", 2) in published and ("F", 3) not in published


# -- access properties ---------------------------------------------------------

def test_sub_threshold_reader_and_colluders_get_nothing():
    repo, owners = world(3, 5)
    data = os.urandom(900)
    create(repo, owners, 3, data)
    grant_all(repo, owners[:2], "bob", 1)
    grant_all(repo, owners[2:4], "carol", 1)
    for reader in ("bob", "carol"):
        with pytest.raises(InsufficientTokensError):
            repo.read_version(reader, "F")
    # pooling all four endorsed tokens across identities still fails
    m = repo.quorum_manifest("bob", "F")
    params = repo.file_params(m)
    for unit in m.latest.units:
        pool = []
        for j, o in enumerate(owners[:4], start=1):
            reader = "bob" if j <= 2 else "carol"
            pool.append(deserialize_token(repo.backend.get(reader, o, endorsed_path("F", 1, unit.unit_index, reader))))
        for start in range(2):
            with pytest.raises(PollutedTokenError):
                decode_unit(pool[start:start + 3], unit, params)


def test_revoked_reader_with_cached_key_and_too_few_chunks():
    repo, owners = world(3, 5)
    data = os.urandom(UNIT)
    create(repo, owners, 3, data)
    grant_all(repo, owners, "bob", 1)
    assert repo.read_version("bob", "F") == data
    m = repo.quorum_manifest("bob", "F")
    unit = m.latest.units[0]
    toks = [deserialize_token(repo.backend.get("bob", o, endorsed_path("F", 1, 1, "bob"))) for o in owners[:3]]
    key = kdf(repo.group, crss_combine(repo.group, [t.delegation for t in toks], 3))
    for o in owners[2:]:
        repo.revoke_read(o, "bob", "F", 1)
    visible = [o for o in owners if repo.backend.list("bob", o, "main/F/1/")]
    assert visible == owners[:2]
    params = repo.file_params(m)
    kept = [deserialize_token(repo.backend.get("bob", o, endorsed_path("F", 1, 1, "bob"))) for o in visible]
    arrays = [np.frombuffer(t.payload, dtype=np.uint8).reshape(t.piece_count, t.chunk_bytes) for t in kept]
    with pytest.raises(InsufficientChunksError):
        ids_decode_batch(params.dispersal, [1, 2], arrays, params.piece_size)
    assert len(key) == 32 and unit.length == UNIT


def test_polluted_owner_is_routed_around():
    repo, owners = world(2, 4)
    data = os.urandom(800)
    create(repo, owners, 2, data)
    grant_all(repo, owners, "bob", 1)
    # o1 replaces its endorsed token with garbage under a fresh version path
    for unit in (1, 2):
        path = endorsed_path("F", 1, unit, "bob")
        good = repo.backend.get("o1", "o1", path)
        repo.backend.delete("o1", "o1", path)
        repo.backend.put("o1", "o1", path, good[:-8] + os.urandom(8))
        repo.backend.set_read_acl("o1", path, "bob", True)
    for seed in range(5):
        repo.rng = random.Random(seed)
        assert repo.read_version("bob", "F") == data


def test_grant_without_tokens():
    repo, owners = world(2, 3)
    create(repo, owners, 2, b"abc")
    repo.backend.delete("o2", "o2", token_path("F", 1, 1))
    with pytest.raises(MissingTokensError):
        repo.grant_read("o2", "bob", "F", 1)
    with pytest.raises(MissingTokensError):
        repo.grant_read("alice", "bob", "F", 1)


# -- ownership changes ---------------------------------------------------------

def test_add_owner_gives_working_tokens():
    repo, owners = world(2, 3)
    for o in owners:
        repo.grant_write(o, "writer")
    data = os.urandom(3 * UNIT)
    create(repo, owners, 2, data)
    repo.write_version("writer", "F", {2: b"changed" * 10})
    for o in owners:
        repo.sync(o)
    expected = data[:UNIT] + b"changed" * 10 + data[2 * UNIT:]
    extended = repo.add_owner("F", "o4", ["o1", "o3"])
    assert extended.owners == ("o1", "o2", "o3", "o4")
    assert extended.latest.version == 3
    assert repo.quorum_manifest("bob", "F").latest.version == 3
    repo.grant_read("o4", "bob", "F", 3)
    repo.grant_read("o2", "bob", "F", 2)
    assert repo.read_version("bob", "F", 3) == expected
    # the new owner with any single old owner is a valid pair
    for partner in owners:
        repo.backend.create_account(f"r-{partner}")
        repo.grant_read("o4", f"r-{partner}", "F", 3)
        repo.grant_read(partner, f"r-{partner}", "F", 2)
        assert repo.read_version(f"r-{partner}", "F", 3) == expected


def test_add_owner_needs_threshold_contributors():
    repo, owners = world(2, 3)
    create(repo, owners, 2, b"abc")
    with pytest.raises(ParameterError):
        repo.add_owner("F", "o4", ["o1"])
    with pytest.raises(ParameterError):
        repo.add_owner("F", "o2", ["o1", "o3"])


def test_unsupported_ownership_changes():
    repo, owners = world(2, 3)
    create(repo, owners, 2, b"abc")
    with pytest.raises(UnsupportedOperationError):
        repo.change_threshold("F", 3)
    with pytest.raises(UnsupportedOperationError):
        repo.revoke_owner("F", "o1")


# -- local directory backend ---------------------------------------------------

def test_local_backend_end_to_end(tmp_path):
    repo, owners = world(2, 3, LocalBackend(tmp_path))
    data = os.urandom(3 * UNIT + 5)
    create(repo, owners, 2, data)
    grant_all(repo, owners, "bob", 1)
    fresh = Repository(LocalBackend(tmp_path), unit_size=UNIT)
    assert fresh.read_version("bob", "F") == data
    assert (tmp_path / "owners" / "o1" / "tmp" / "F" / "1" / "1.tok").is_file()
    assert (tmp_path / "owners" / "o1" / ".acl.json").is_file()
    with pytest.raises(InsufficientTokensError):
        fresh.read_version("carol", "F")
