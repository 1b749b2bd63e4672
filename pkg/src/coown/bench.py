"""Unit write/read timing sweeps on the local-directory backend.

Unit write is ``create_file`` for a single-unit file (encode and upload to
all n owners).  Unit read is ``read_version`` after t owners granted access
(fetch t endorsed tokens, combine, decode).  Endorsement is timed
separately and excluded from the read figure.
"""

from __future__ import annotations

import os
import random
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass

import numpy as np

from .repo import LocalBackend, Repository

MIB = 1024 * 1024


@dataclass
class Sample:
    unit_bytes: int
    piece_size: int
    t: int
    n: int
    write_s: float
    grant_s: float
    read_s: float

    @property
    def total_s(self) -> float:
        return self.write_s + self.read_s

    def as_dict(self) -> dict:
        return {**asdict(self), "total_s": self.total_s}


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot else 1.0
    return LinearFit(float(slope), float(intercept), r2)


def measure(unit_bytes: int, *, piece_size: int = 128, t: int = 4, n: int = 10, repeats: int = 1,
            seed: int = 0, root: str | None = None) -> Sample:
    """Median-of-``repeats`` timings for one configuration."""
    rng = random.Random(seed)
    rows = []
    for r in range(repeats):
        workdir = tempfile.mkdtemp(prefix="coown-bench-", dir=root)
        try:
            owners = [f"o{j}" for j in range(1, n + 1)]
            backend = LocalBackend(workdir)
            for a in owners + ["creator", "reader"]:
                backend.create_account(a)
            unit_size = -(-unit_bytes // piece_size) * piece_size
            repo = Repository(backend, piece_size=piece_size, unit_size=unit_size, rng=rng)
            for o in owners:
                backend.set_temp_write_acl(o, "creator", True)
            data = os.urandom(unit_bytes)
            name = f"bench{r}"
            t0 = time.perf_counter()
            repo.create_file("creator", name, t, owners, data)
            t1 = time.perf_counter()
            for o in rng.sample(owners, t):
                repo.grant_read(o, "reader", name, 1)
            t2 = time.perf_counter()
            out = repo.read_version("reader", name, 1)
            t3 = time.perf_counter()
            if out != data:
                raise AssertionError("benchmark round-trip mismatch")
            rows.append((t1 - t0, t2 - t1, t3 - t2))
        finally:
            shutil.rmtree(workdir, ignore_errors=True)
    w, g, rd = (float(np.median(col)) for col in zip(*rows))
    return Sample(unit_bytes, piece_size, t, n, w, g, rd)


def sweep_unit_size(sizes_mib=(1, 2, 4, 8, 16, 32, 64), repeats: int = 1, **kw) -> tuple[list[Sample], LinearFit]:
    samples = [measure(int(s * MIB), repeats=repeats, **kw) for s in sizes_mib]
    return samples, linear_fit([s.unit_bytes for s in samples], [s.total_s for s in samples])


def sweep_piece_size(pieces=(64, 128, 256, 512, 1024), unit_bytes: int = 4 * MIB, repeats: int = 3,
                     **kw) -> list[Sample]:
    return [measure(unit_bytes, piece_size=w, repeats=repeats, **kw) for w in pieces]


def sweep_threshold(thresholds=(1, 2, 4, 8), n: int = 10, unit_bytes: int = 4 * MIB, repeats: int = 3,
                    **kw) -> list[Sample]:
    return [measure(unit_bytes, t=t, n=n, repeats=repeats, **kw) for t in thresholds]


def sweep_owners(owner_counts=(4, 6, 8, 10), t: int = 4, unit_bytes: int = 4 * MIB, repeats: int = 3,
                 **kw) -> list[Sample]:
    return [measure(unit_bytes, t=t, n=n, repeats=repeats, **kw) for n in owner_counts]


def direction(values) -> str:
    """``"increasing"``, ``"decreasing"`` or ``"mixed"`` for a sequence."""
    diffs = np.diff(np.asarray(values, dtype=float))
    if (diffs > 0).all():
        return "increasing"
    if (diffs < 0).all():
        return "decreasing"
    return "mixed"


def time_transform(piece_size: int, unit_bytes: int = 4 * MIB, repeats: int = 5, cipher=None) -> float:
    """Best-of-``repeats`` seconds for the keyed transform over one unit."""
    from .aont import DEFAULT_CIPHER, aont_forward_batch

    cipher = cipher or DEFAULT_CIPHER
    m = piece_size // cipher.block_bytes
    blocks = np.frombuffer(os.urandom(unit_bytes - unit_bytes % piece_size), dtype=np.uint8)
    blocks = blocks.reshape(-1, m, cipher.block_bytes)
    key = os.urandom(cipher.key_bytes)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        aont_forward_batch(key, blocks, cipher)
        best = min(best, time.perf_counter() - t0)
    return best


def time_dispersal_decode(t: int, n: int = 10, piece_size: int = 128, unit_bytes: int = 4 * MIB,
                          trials: int = 30, seed: int = 0) -> float:
    """Mean seconds to rebuild a unit's transform output from a random t-subset of chunks."""
    from .sfd import DispersalParams, ids_decode_batch, ids_encode_batch

    rng = random.Random(seed)
    params = DispersalParams(t, n)
    data = np.frombuffer(os.urandom(unit_bytes - unit_bytes % piece_size), dtype=np.uint8).reshape(-1, piece_size)
    chunks = ids_encode_batch(params, data)
    total = 0.0
    for _ in range(trials):
        idx = sorted(rng.sample(range(1, n + 1), t))
        t0 = time.perf_counter()
        ids_decode_batch(params, idx, [chunks[i - 1] for i in idx], piece_size)
        total += time.perf_counter() - t0
    return total / trials
