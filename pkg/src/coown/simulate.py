"""Randomized harnesses that cross-check the repository against the policy oracle.

Each enforcement trial builds a fresh in-memory repository, draws a random
threshold, owner count and grant matrix, and compares what the storage
layer lets principals do with what :func:`coown.policy.som_decide` says
the same credentials should allow.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .codec import decode_unit, deserialize_token
from .errors import AccessDeniedError, CoownError, InsufficientTokensError, PollutedTokenError
from .policy import Action, Credential, Request, SomState, som_decide
from .repo import MemoryBackend, Repository
from .repo.protocol import endorsed_path

FILE = "F"
SMALL_UNIT = 512


@dataclass
class TrialOutcome:
    t: int
    n: int
    action: str
    granted_by: tuple[str, ...]
    policy: bool
    repo: bool

    @property
    def agree(self) -> bool:
        return self.policy == self.repo


@dataclass
class SimulationReport:
    trials: int = 0
    agreements: int = 0
    mismatches: list[TrialOutcome] = field(default_factory=list)
    collusion_trials: int = 0
    collusion_breaks: int = 0

    @property
    def agreement_rate(self) -> float:
        return self.agreements / self.trials if self.trials else 1.0

    def record(self, outcome: TrialOutcome) -> None:
        self.trials += 1
        if outcome.agree:
            self.agreements += 1
        else:
            self.mismatches.append(outcome)


def _world(t: int, n: int, rng: random.Random, extra_users=("reader", "writer", "outsider")):
    owners = [f"owner{j}" for j in range(1, n + 1)]
    backend = MemoryBackend(owners + list(extra_users))
    repo = Repository(backend, unit_size=SMALL_UNIT, rng=rng)
    for o in owners:
        repo.grant_write(o, "writer")
    content = rng.randbytes(rng.randint(1, 2 * SMALL_UNIT))
    repo.create_file("writer", FILE, t, owners, content)
    for o in owners:
        repo.sync(o)
    state = SomState(frozenset({FILE}), frozenset(owners) | set(extra_users),
                     frozenset((o, FILE) for o in owners), {FILE: t})
    return repo, owners, content, state


def read_trial(t: int, n: int, rng: random.Random, p: float | None = None) -> TrialOutcome:
    """Random read grants (plus a stray non-owner credential) vs. the oracle."""
    repo, owners, content, state = _world(t, n, rng)
    p = rng.random() if p is None else p
    granting = [o for o in owners if rng.random() < p]
    creds = {Credential(o, "reader", "read", FILE) for o in granting}
    for o in granting:
        repo.grant_read(o, "reader", FILE, 1)
    if rng.random() < 0.5:
        # a credential from someone who holds no token: the oracle ignores it,
        # and the outsider has nothing to endorse
        creds.add(Credential("outsider", "reader", "read", FILE))
    policy = som_decide(state, Request("reader", Action(FILE, "read")), creds)
    try:
        ok = repo.read_version("reader", FILE, 1) == content
    except AccessDeniedError:
        ok = False
    return TrialOutcome(t, n, "read", tuple(granting), policy, ok)


def write_trial(t: int, n: int, rng: random.Random, p: float | None = None) -> TrialOutcome:
    """Random temp-write grants vs. the oracle; accepted versions must be readable."""
    repo, owners, content, state = _world(t, n, rng)
    p = rng.random() if p is None else p
    granting = [o for o in owners if rng.random() < p]
    for o in owners:
        if o not in granting:
            repo.revoke_write(o, "writer")
    creds = {Credential(o, "writer", "write", FILE) for o in granting}
    policy = som_decide(state, Request("writer", Action(FILE, "write")), creds)
    new = rng.randbytes(rng.randint(1, SMALL_UNIT))
    result = repo.write_version("writer", FILE, {1: new})
    for o in owners:
        repo.sync(o)
        try:
            repo.grant_read(o, "reader", FILE, result.version)
        except CoownError:
            pass
    try:
        readable = repo.read_version("reader", FILE, result.version)[:len(new)] == new
    except CoownError:  # access denied or no quorum manifest
        readable = False
    return TrialOutcome(t, n, "write", tuple(granting), policy, result.accepted and readable)


def threshold_trial(t: int, n: int, granting: int, rng: random.Random) -> tuple[bool, bool]:
    """Write with exactly ``granting`` owners in O+; returns ``(accepted, readable)``.

    ``readable`` is True if any of several readers, after every owner tried
    to grant it the new version, gets the new content back.
    """
    readers = ("reader", "alice", "bob")
    repo, owners, _, _ = _world(t, n, rng, readers + ("writer", "outsider"))
    chosen = set(rng.sample(owners, granting))
    for o in owners:
        if o not in chosen:
            repo.revoke_write(o, "writer")
    new = rng.randbytes(rng.randint(1, SMALL_UNIT))
    result = repo.write_version("writer", FILE, {1: new})
    for o in owners:
        repo.sync(o)
    readable = False
    for reader in readers:
        for o in owners:
            try:
                repo.grant_read(o, reader, FILE, result.version)
            except CoownError:
                pass
        try:
            readable |= repo.read_version(reader, FILE, result.version)[:len(new)] == new
        except CoownError:
            pass
    return result.accepted, readable


def collusion_trial(t: int, n: int, rng: random.Random) -> bool:
    """Two readers, each granted by t-1 owners, pool their endorsed tokens.

    Returns True if the pool (or either reader alone) yields plaintext.
    """
    if t < 2 or 2 * (t - 1) > n:
        raise ValueError("collusion needs t >= 2 and 2(t-1) <= n")
    repo, owners, content, _ = _world(t, n, rng, ("alice", "bob", "writer", "reader", "outsider"))
    picked = rng.sample(owners, 2 * (t - 1))
    groups = {"alice": picked[:t - 1], "bob": picked[t - 1:]}
    for reader, grantors in groups.items():
        for o in grantors:
            repo.grant_read(o, reader, FILE, 1)
        try:
            repo.read_version(reader, FILE, 1)
            return True
        except InsufficientTokensError:
            pass
    manifest = repo.quorum_manifest("alice", FILE)
    params = repo.file_params(manifest)
    for unit in manifest.latest.units:
        pool = []
        for reader, grantors in groups.items():
            for o in grantors:
                raw = repo.backend.get(reader, o, endorsed_path(FILE, unit.version, unit.unit_index, reader))
                pool.append(deserialize_token(raw, repo.group))
        try:
            decode_unit(pool, unit, params, repo.group, repo.cipher)
            return True
        except PollutedTokenError:
            continue
    return False


def run(trials: int = 1000, seed: int = 0, max_t: int = 5, max_n: int = 7,
        collusion: int = 100) -> SimulationReport:
    rng = random.Random(seed)
    report = SimulationReport()
    for k in range(trials):
        t = rng.randint(1, max_t)
        n = rng.randint(t, max_n)
        trial = read_trial if k % 2 == 0 else write_trial
        report.record(trial(t, n, rng))
    for _ in range(collusion):
        t = rng.randint(2, max_t)
        n = rng.randint(max(t, 2 * (t - 1)), max(max_n, 2 * (t - 1)))
        report.collusion_trials += 1
        report.collusion_breaks += collusion_trial(t, n, rng)
    return report
