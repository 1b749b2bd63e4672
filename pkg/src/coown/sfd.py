"""Secure file dispersal: AONT followed by a systematic (t, n) erasure code.

The erasure code is Reed-Solomon over GF(2^8).  The n x t encoding matrix
is a Vandermonde matrix on the points 0..n-1 multiplied by the inverse of
its top t x t block, so its first t rows are the identity: chunks 1..t are
the AONT output cut into t slices and chunks t+1..n are parity.  Any t rows
stay invertible, so any t chunks decode.

Chunk length is ``ceil(piece_bytes / t)``.  When t does not divide the
piece the last data slice is zero-padded; parameters are rejected unless
the holder of any t-1 data chunks is still missing at least one whole
lambda-bit block of the AONT output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import gf256
from .aont import DEFAULT_CIPHER, WideCipher, aont_forward_batch, aont_inverse_batch, rounds_for
from .errors import FormatError, InsufficientChunksError, ParameterError

MAX_CHUNKS = 256


@dataclass(frozen=True)
class DispersalParams:
    t: int
    n: int
    lam: int = 128
    symbol_size: int = 16

    def __post_init__(self):
        if not 1 <= self.t <= self.n:
            raise ParameterError(f"need 1 <= t <= n, got t={self.t}, n={self.n}")
        if self.n > MAX_CHUNKS:
            raise ParameterError(f"at most {MAX_CHUNKS} chunks are supported over GF(256)")
        if self.lam < 8 or self.lam & (self.lam - 1) or self.lam % 8:
            raise ParameterError(f"lambda must be a power of 2 bit count >= 8, got {self.lam}")
        if self.symbol_size < 1:
            raise ParameterError("symbol size must be positive")

    @property
    def block_bytes(self) -> int:
        return self.lam // 8

    def chunk_bytes(self, piece_bytes: int) -> int:
        """Chunk length for a piece of ``piece_bytes``; validates the piece size."""
        if piece_bytes <= 0 or piece_bytes % self.block_bytes:
            raise ParameterError(f"piece of {piece_bytes} bytes is not a whole number of {self.lam}-bit blocks")
        chunk = -(-piece_bytes // self.t)
        uncovered = piece_bytes - (self.t - 1) * chunk
        if uncovered < self.block_bytes:
            raise ParameterError(
                f"t*lambda = {self.t * self.lam} bits does not fit a {8 * piece_bytes}-bit piece: "
                f"t-1 chunks would cover all but {max(uncovered, 0)} bytes")
        return chunk

    def check_piece(self, piece_bytes: int) -> int:
        """Validate a piece size for SFD and return its AONT block count."""
        self.chunk_bytes(piece_bytes)
        m = piece_bytes // self.block_bytes
        try:
            rounds_for(m)
        except ParameterError:
            raise ParameterError(f"a {piece_bytes}-byte piece has {m} blocks; need a power of 2 >= 2") from None
        return m


@dataclass(frozen=True)
class Chunk:
    index: int  # 1-based, as on the wire
    payload: bytes

    def to_bytes(self) -> bytes:
        return struct.pack(">HI", self.index, len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Chunk":
        if len(data) < 6:
            raise FormatError("truncated chunk header")
        index, length = struct.unpack(">HI", data[:6])
        if len(data) != 6 + length:
            raise FormatError(f"chunk payload is {len(data) - 6} bytes, header says {length}")
        return cls(index, data[6:])


@lru_cache(maxsize=None)
def encoding_matrix(t: int, n: int) -> tuple[tuple[int, ...], ...]:
    vander = [[gf256.power(i, j) for j in range(t)] for i in range(n)]
    top_inv = gf256.mat_inv(vander[:t])
    return tuple(tuple(row) for row in gf256.mat_mul(vander, top_inv))


@lru_cache(maxsize=4096)
def _decoding_matrix(t: int, n: int, rows: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    enc = encoding_matrix(t, n)
    return tuple(tuple(r) for r in gf256.mat_inv([list(enc[i]) for i in rows]))


def _split(params: DispersalParams, data: np.ndarray) -> np.ndarray:
    """(count, piece_bytes) -> (t, count, chunk) zero-padded data slices."""
    count, size = data.shape
    chunk = params.chunk_bytes(size)
    padded = np.zeros((count, params.t * chunk), dtype=np.uint8)
    padded[:, :size] = data
    return np.ascontiguousarray(padded.reshape(count, params.t, chunk).transpose(1, 0, 2))


def ids_encode_batch(params: DispersalParams, data: np.ndarray) -> np.ndarray:
    """Disperse ``count`` equal-sized inputs; returns an ``(n, count, chunk)`` array."""
    slices = _split(params, data)
    enc = encoding_matrix(params.t, params.n)
    out = np.empty((params.n,) + slices.shape[1:], dtype=np.uint8)
    out[:params.t] = slices
    rows = list(slices)
    for i in range(params.t, params.n):
        out[i] = gf256.combine_rows(list(enc[i]), rows)
    return out


def ids_decode_batch(params: DispersalParams, indices: Sequence[int], chunks: Sequence[np.ndarray],
                     data_bytes: int) -> np.ndarray:
    """Invert :func:`ids_encode_batch` from t chunk arrays with 1-based ``indices``."""
    _check_indices(params, indices)
    if len(chunks) != len(indices):
        raise FormatError("one chunk array per index is required")
    shapes = {c.shape for c in chunks}
    if len(shapes) != 1:
        raise FormatError(f"inconsistent chunk sizes: {sorted(shapes)}")
    chunk = params.chunk_bytes(data_bytes)
    if next(iter(shapes))[-1] != chunk:
        raise FormatError(f"chunks are {next(iter(shapes))[-1]} bytes, expected {chunk}")
    pairs = sorted(zip(indices, chunks), key=lambda p: p[0])[:params.t]
    rows = tuple(i - 1 for i, _ in pairs)
    arrays = [c for _, c in pairs]
    if rows == tuple(range(params.t)):
        slices = arrays
    else:
        dec = _decoding_matrix(params.t, params.n, rows)
        slices = [arrays[rows.index(j)] if j in rows else gf256.combine_rows(list(dec[j]), arrays)
                  for j in range(params.t)]
    joined = np.stack(slices, axis=-2).reshape(slices[0].shape[:-1] + (params.t * chunk,))
    return joined[..., :data_bytes]


def _check_indices(params: DispersalParams, indices: Iterable[int]) -> None:
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise FormatError(f"duplicate chunk indices in {indices}")
    bad = [i for i in indices if not 1 <= i <= params.n]
    if bad:
        raise FormatError(f"chunk indices out of range 1..{params.n}: {bad}")
    if len(indices) < params.t:
        raise InsufficientChunksError(f"need {params.t} chunks, got {len(indices)}")


def ids_encode(params: DispersalParams, data: bytes) -> list[Chunk]:
    arr = np.frombuffer(data, dtype=np.uint8)[None, :]
    out = ids_encode_batch(params, arr)
    return [Chunk(i + 1, out[i, 0].tobytes()) for i in range(params.n)]


def infer_piece_bytes(params: DispersalParams, chunk_bytes: int) -> int:
    """Largest valid piece size whose chunks are ``chunk_bytes`` long."""
    total = params.t * chunk_bytes
    m = 1 << ((total // params.block_bytes).bit_length() - 1) if total >= params.block_bytes else 0
    return m * params.block_bytes


def ids_decode(params: DispersalParams, chunks: Sequence[Chunk], data_bytes: int | None = None) -> bytes:
    """Rebuild dispersed data from at least t chunks.

    ``data_bytes`` defaults to the largest piece size consistent with the
    chunk length, which is exact whenever t divides the piece.
    """
    _check_indices(params, [c.index for c in chunks])
    if data_bytes is None:
        data_bytes = infer_piece_bytes(params, len(chunks[0].payload))
    arrays = [np.frombuffer(c.payload, dtype=np.uint8) for c in chunks]
    return ids_decode_batch(params, [c.index for c in chunks], arrays, data_bytes).tobytes()


def _as_blocks(params: DispersalParams, pieces: np.ndarray) -> np.ndarray:
    count, size = pieces.shape
    m = params.check_piece(size)
    return pieces.reshape(count, m, params.block_bytes)


def sfd_encode_batch(params: DispersalParams, pieces: np.ndarray, key: bytes,
                     cipher: WideCipher = DEFAULT_CIPHER) -> tuple[np.ndarray, np.ndarray]:
    """Encode many pieces under one key.

    Returns ``(aont_output, chunks)`` where ``aont_output`` has the shape of
    ``pieces`` and ``chunks`` is ``(n, count, chunk_bytes)``.
    """
    _check_cipher(params, cipher)
    transformed = aont_forward_batch(key, _as_blocks(params, pieces), cipher).reshape(pieces.shape)
    return transformed, ids_encode_batch(params, transformed)


def sfd_decode_batch(params: DispersalParams, key: bytes, indices: Sequence[int], chunks: Sequence[np.ndarray],
                     piece_bytes: int, cipher: WideCipher = DEFAULT_CIPHER) -> np.ndarray:
    _check_cipher(params, cipher)
    transformed = ids_decode_batch(params, indices, chunks, piece_bytes)
    return aont_inverse_batch(key, _as_blocks(params, transformed), cipher).reshape(transformed.shape)


def _check_cipher(params: DispersalParams, cipher: WideCipher) -> None:
    if cipher.block_bits != params.lam:
        raise ParameterError(f"cipher {cipher.name} has {cipher.block_bits}-bit blocks, params say lambda={params.lam}")


def sfd_encode(params: DispersalParams, piece: bytes, key: bytes, cipher: WideCipher = DEFAULT_CIPHER) -> list[Chunk]:
    params.check_piece(len(piece))
    _, out = sfd_encode_batch(params, np.frombuffer(piece, dtype=np.uint8)[None, :], key, cipher)
    return [Chunk(i + 1, out[i, 0].tobytes()) for i in range(params.n)]


def sfd_decode(key: bytes, chunks: Sequence[Chunk], params: DispersalParams, piece_bytes: int | None = None,
               cipher: WideCipher = DEFAULT_CIPHER) -> bytes:
    """Recover a piece from at least t chunks; nothing is returned on failure."""
    _check_indices(params, [c.index for c in chunks])
    if piece_bytes is None:
        piece_bytes = infer_piece_bytes(params, len(chunks[0].payload))
    arrays = [np.frombuffer(c.payload, dtype=np.uint8)[None, :] for c in chunks]
    out = sfd_decode_batch(params, key, [c.index for c in chunks], arrays, piece_bytes, cipher)
    return out[0].tobytes()
