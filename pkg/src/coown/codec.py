"""Unit encoding: pieces, per-owner tokens and their wire formats.

A unit is zero-padded to a whole number of pieces.  One CRSS sharing per
unit yields the unit key; every piece goes through SFD under that key, and
owner j's token collects chunk j of every piece together with share j.
Endorsing a token replaces the share with a delegation bound to a reader.

Token layout (big-endian)::

    magic "COTK" | format u8 | unit u32 | owner u16 | version u32
    | pieces u32 | chunk_bytes u32 | share_len u16 | share | chunk payloads

Endorsed tokens use magic "COET" and carry a delegation instead of a share.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .aont import DEFAULT_CIPHER, WideCipher
from .crss import Delegation, Secret, Share, crss_combine, crss_delegate, crss_share, kdf
from .errors import (FormatError, InsufficientChunksError, ParameterError, PollutedTokenError)
from .groups import DEFAULT_GROUP
from .sfd import Chunk, DispersalParams, ids_decode_batch, sfd_encode_batch
from .aont import aont_inverse_batch

FORMAT_VERSION = 1
TOKEN_MAGIC = b"COTK"
ENDORSED_MAGIC = b"COET"
DIGEST_MAGIC = b"COUD"
DIGEST_LABEL = b"coown/unit-digest/v1"
KEY_CHECK_LABEL = b"coown/key-check/v1"

_TOKEN_HEAD = struct.Struct(">4sBIHIIIH")
_DIGEST = struct.Struct(">4sBIIQ32s32s")


@dataclass(frozen=True)
class CodecParams:
    t: int = 4
    n: int = 10
    piece_size: int = 128
    lam: int = 128
    symbol_size: int = 16
    dispersal: DispersalParams = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        disp = DispersalParams(self.t, self.n, self.lam, self.symbol_size)
        disp.check_piece(self.piece_size)
        object.__setattr__(self, "dispersal", disp)

    @property
    def chunk_bytes(self) -> int:
        return self.dispersal.chunk_bytes(self.piece_size)


@dataclass(frozen=True)
class UnitPlaintext:
    unit_index: int
    data: bytes

    @property
    def true_length(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class UnitDigest:
    """Published per-unit check values.

    ``digest`` hashes the AONT output of all pieces, so anyone holding t
    chunks can detect polluted chunks without the key.  ``key_check`` hashes
    the unit key, which catches a wrong key from mixed-identity delegations.
    """

    unit_index: int
    version: int
    length: int
    digest: bytes
    key_check: bytes

    def to_bytes(self) -> bytes:
        return _DIGEST.pack(DIGEST_MAGIC, FORMAT_VERSION, self.unit_index, self.version, self.length,
                            self.digest, self.key_check)

    @classmethod
    def from_bytes(cls, data: bytes) -> "UnitDigest":
        if len(data) != _DIGEST.size:
            raise FormatError("unit digest has the wrong length")
        magic, fmt, unit, version, length, digest, key_check = _DIGEST.unpack(data)
        _check_magic(magic, fmt, DIGEST_MAGIC)
        return cls(unit, version, length, digest, key_check)


@dataclass(frozen=True)
class Token:
    unit_index: int
    owner_index: int
    version: int
    piece_count: int
    chunk_bytes: int
    payload: bytes
    share: Share

    @property
    def chunks(self) -> list[Chunk]:
        return _chunk_list(self.owner_index, self.chunk_bytes, self.payload)


@dataclass(frozen=True)
class EndorsedToken:
    unit_index: int
    owner_index: int
    version: int
    piece_count: int
    chunk_bytes: int
    payload: bytes
    delegation: Delegation

    @property
    def identity(self) -> str:
        return self.delegation.identity

    @property
    def chunks(self) -> list[Chunk]:
        return _chunk_list(self.owner_index, self.chunk_bytes, self.payload)


def _chunk_list(index: int, size: int, payload: bytes) -> list[Chunk]:
    return [Chunk(index, payload[i:i + size]) for i in range(0, len(payload), size)]


def split_unit(data: bytes, piece_size: int) -> tuple[np.ndarray, int]:
    """Cut ``data`` into zero-padded pieces; returns ``(pieces, true_length)``.

    ``pieces`` is a ``(count, piece_size)`` uint8 array.
    """
    if not data:
        raise ParameterError("cannot encode an empty unit")
    count = -(-len(data) // piece_size)
    buf = np.zeros(count * piece_size, dtype=np.uint8)
    buf[:len(data)] = np.frombuffer(data, dtype=np.uint8)
    return buf.reshape(count, piece_size), len(data)


def join_pieces(pieces: np.ndarray, true_length: int) -> bytes:
    return pieces.reshape(-1)[:true_length].tobytes()


def _digest(aont_output: np.ndarray) -> bytes:
    h = hashlib.sha256(DIGEST_LABEL)
    h.update(np.ascontiguousarray(aont_output).data)
    return h.digest()


def _key_check(key: bytes) -> bytes:
    return hashlib.sha256(KEY_CHECK_LABEL + key).digest()


def build_unit_tokens(unit: UnitPlaintext, params: CodecParams, group=DEFAULT_GROUP, rng=None,
                      version: int = 1, cipher: WideCipher = DEFAULT_CIPHER) -> tuple[Secret, list[Token], UnitDigest]:
    """Encode one unit into n owner tokens under a fresh CRSS secret."""
    pieces, true_length = split_unit(unit.data, params.piece_size)
    secret, shares = crss_share(group, params.t, params.n, rng)
    key = kdf(group, secret, cipher.key_bytes)
    transformed, chunks = sfd_encode_batch(params.dispersal, pieces, key, cipher)
    digest = UnitDigest(unit.unit_index, version, true_length, _digest(transformed), _key_check(key))
    count, size = chunks.shape[1], chunks.shape[2]
    tokens = [Token(unit.unit_index, j + 1, version, count, size, chunks[j].tobytes(), shares[j])
              for j in range(params.n)]
    return secret, tokens, digest


def endorse_token(group, token: Token, identity: str) -> EndorsedToken:
    return EndorsedToken(token.unit_index, token.owner_index, token.version, token.piece_count,
                         token.chunk_bytes, token.payload, crss_delegate(group, token.share, identity))


def decode_unit(endorsed: list[EndorsedToken], digest: UnitDigest, params: CodecParams, group=DEFAULT_GROUP,
                cipher: WideCipher = DEFAULT_CIPHER) -> UnitPlaintext:
    """Rebuild a unit from t endorsed tokens, verifying before any output.

    The first t tokens (by the order given) are used.  Raises
    :class:`PollutedTokenError` when the chunks or the combined key do not
    match ``digest``.
    """
    if len(endorsed) < params.t:
        raise InsufficientChunksError(f"need {params.t} endorsed tokens, got {len(endorsed)}")
    chosen = endorsed[:params.t]
    for tok in chosen:
        if (tok.unit_index, tok.version) != (digest.unit_index, digest.version):
            raise FormatError(f"token for unit {tok.unit_index}@v{tok.version} does not match "
                              f"digest for unit {digest.unit_index}@v{digest.version}")
    count = -(-digest.length // params.piece_size)
    size = params.chunk_bytes
    for tok in chosen:
        if tok.piece_count != count or tok.chunk_bytes != size or len(tok.payload) != count * size:
            raise PollutedTokenError(f"token from owner {tok.owner_index} has the wrong shape")
    arrays = [np.frombuffer(tok.payload, dtype=np.uint8).reshape(count, size) for tok in chosen]
    transformed = ids_decode_batch(params.dispersal, [tok.owner_index for tok in chosen], arrays, params.piece_size)
    if _digest(transformed) != digest.digest:
        raise PollutedTokenError(f"unit {digest.unit_index}@v{digest.version}: chunks do not match the digest")
    secret = crss_combine(group, [tok.delegation for tok in chosen], params.t)
    key = kdf(group, secret, cipher.key_bytes)
    if _key_check(key) != digest.key_check:
        raise PollutedTokenError(f"unit {digest.unit_index}@v{digest.version}: delegations do not combine "
                                 "to the unit key")
    disp = params.dispersal
    blocks = transformed.reshape(count, params.piece_size // disp.block_bytes, disp.block_bytes)
    pieces = aont_inverse_batch(key, blocks, cipher).reshape(count, params.piece_size)
    return UnitPlaintext(digest.unit_index, join_pieces(pieces, digest.length))


def _check_magic(magic: bytes, fmt: int, expected: bytes) -> None:
    if magic != expected:
        raise FormatError(f"bad magic {magic!r}, expected {expected!r}")
    if fmt != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {fmt}")


def serialize_token(token: Token | EndorsedToken, group=DEFAULT_GROUP) -> bytes:
    if isinstance(token, EndorsedToken):
        magic, extra = ENDORSED_MAGIC, token.delegation.to_bytes(group)
    else:
        magic, extra = TOKEN_MAGIC, token.share.to_bytes(group)
    head = _TOKEN_HEAD.pack(magic, FORMAT_VERSION, token.unit_index, token.owner_index, token.version,
                            token.piece_count, token.chunk_bytes, len(extra))
    return head + extra + token.payload


def deserialize_token(data: bytes, group=DEFAULT_GROUP) -> Token | EndorsedToken:
    if len(data) < _TOKEN_HEAD.size:
        raise FormatError("truncated token header")
    magic, fmt, unit, owner, version, count, size, extra_len = _TOKEN_HEAD.unpack_from(data)
    if magic not in (TOKEN_MAGIC, ENDORSED_MAGIC):
        raise FormatError(f"bad token magic {magic!r}")
    _check_magic(magic, fmt, magic)
    start = _TOKEN_HEAD.size
    payload = data[start + extra_len:]
    if len(data) < start + extra_len or len(payload) != count * size:
        raise FormatError("token is truncated or has trailing bytes")
    extra = data[start:start + extra_len]
    if magic == TOKEN_MAGIC:
        share = Share.from_bytes(group, extra)
        if share.index != owner:
            raise FormatError("share index does not match the owner index")
        return Token(unit, owner, version, count, size, payload, share)
    delegation = Delegation.from_bytes(group, extra)
    if delegation.index != owner:
        raise FormatError("delegation index does not match the owner index")
    return EndorsedToken(unit, owner, version, count, size, payload, delegation)
