"""Keyed FFT-butterfly all-or-nothing transform.

The transform runs ``log2(m)`` rounds over ``m`` blocks of ``lambda`` bits.
Round ``r`` (1-based) applies a keyed ``2*lambda``-bit permutation to the
pairs of positions that are ``2**(r-1)`` apart inside every group of
``2**r`` consecutive blocks, so after the last round each output block
depends on every input block and on the key.

Index translation from the 1-based pseudo-code to the 0-based arrays here::

    round r, group i in [0, m/2^r), offset j in [1, 2^(r-1)]
        left  = j + i*2^r            ->  i*2^r + (j-1)
        right = j + i*2^r + 2^(r-1)  ->  i*2^r + 2^(r-1) + (j-1)

For m = 8 this gives the pairs (0,1) (2,3) (4,5) (6,7) in round 1,
(0,2) (1,3) (4,6) (5,7) in round 2 and (0,4) (1,5) (2,6) (3,7) in round 3.

All functions accept a batch axis: an array of shape ``(count, m, B)``
transforms ``count`` independent block vectors under one key, which is how
units made of many pieces are processed.
"""

from __future__ import annotations

import hashlib
import random
from typing import Protocol, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import ParameterError, SizeMismatchError
from .rijndael import Rijndael


class KeyedPermutation(Protocol):
    def forward(self, left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def inverse(self, left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class WideCipher:
    """A keyed permutation on pairs of lambda-bit blocks.

    ``block_bits`` is lambda; blocks are stored in ``block_bytes`` bytes and
    keys are ``key_bytes`` long.  Subclasses implement :meth:`bind`.
    """

    name = "abstract"
    block_bits = 128
    block_bytes = 16
    key_bytes = 32

    def bind(self, key: bytes) -> KeyedPermutation:
        raise NotImplementedError

    def check_key(self, key: bytes) -> None:
        if len(key) != self.key_bytes:
            raise SizeMismatchError(f"{self.name} needs a {self.key_bytes}-byte key, got {len(key)}")


def _aes_ecb(key: bytes, data: np.ndarray) -> np.ndarray:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    out = enc.update(np.ascontiguousarray(data).tobytes()) + enc.finalize()
    return np.frombuffer(out, dtype=np.uint8).reshape(data.shape)


class _FeistelKeyed:
    def __init__(self, round_keys: list[bytes]):
        self.round_keys = round_keys

    def forward(self, left, right):
        for rk in self.round_keys:
            left, right = right, left ^ _aes_ecb(rk, right)
        return left, right

    def inverse(self, left, right):
        for rk in reversed(self.round_keys):
            left, right = right ^ _aes_ecb(rk, left), left
        return left, right


class FeistelAES256(WideCipher):
    """256-bit block cipher: a balanced Feistel network with AES-256 rounds.

    Round keys are ``AES_K(2i) || AES_K(2i+1)`` for round ``i``.  Four
    rounds give a strong pseudorandom permutation on 256-bit blocks.
    """

    name = "feistel-aes256"
    rounds = 4

    def bind(self, key: bytes) -> _FeistelKeyed:
        self.check_key(key)
        counters = np.zeros((2 * self.rounds, 16), dtype=np.uint8)
        counters[:, 15] = np.arange(2 * self.rounds)
        material = _aes_ecb(key, counters).tobytes()
        return _FeistelKeyed([material[32 * i:32 * i + 32] for i in range(self.rounds)])


class _RijndaelKeyed:
    def __init__(self, cipher: Rijndael, half: int):
        self.cipher = cipher
        self.half = half

    def forward(self, left, right):
        out = self.cipher.encrypt(np.concatenate([left, right], axis=-1))
        return out[:, :self.half], out[:, self.half:]

    def inverse(self, left, right):
        out = self.cipher.decrypt(np.concatenate([left, right], axis=-1))
        return out[:, :self.half], out[:, self.half:]


class Rijndael256(WideCipher):
    """Rijndael with 256-bit blocks and a 256-bit key (pure numpy, slower)."""

    name = "rijndael256"

    def bind(self, key: bytes) -> _RijndaelKeyed:
        self.check_key(key)
        return _RijndaelKeyed(Rijndael(key, 32), 16)


class _TableKeyed:
    def __init__(self, table: np.ndarray):
        self.table = table
        self.inv_table = np.argsort(table).astype(np.uint8)

    @staticmethod
    def _apply(table, left, right):
        if left.max(initial=0) > 15 or right.max(initial=0) > 15:
            raise SizeMismatchError("toy cipher blocks are 4-bit values")
        out = table[(left.astype(np.intp) << 4) | right]
        return out >> 4, out & 0x0F

    def forward(self, left, right):
        return self._apply(self.table, left, right)

    def inverse(self, left, right):
        return self._apply(self.inv_table, left, right)


class ToyPermutation(WideCipher):
    """Keyed random permutation of 8-bit values, for exhaustive tests.

    Blocks are 4-bit nibbles stored one per byte.  Not secure.
    """

    name = "toy8"
    block_bits = 4
    block_bytes = 1
    key_bytes = 1

    def bind(self, key: bytes) -> _TableKeyed:
        self.check_key(key)
        values = list(range(256))
        random.Random(hashlib.sha256(b"toy8" + key).digest()).shuffle(values)
        return _TableKeyed(np.array(values, dtype=np.uint8))


class _CountingKeyed:
    def __init__(self, inner, owner: "CountingCipher"):
        self.inner = inner
        self.owner = owner

    def forward(self, left, right):
        self.owner.calls += left.shape[0]
        return self.inner.forward(left, right)

    def inverse(self, left, right):
        self.owner.calls += left.shape[0]
        return self.inner.inverse(left, right)


class CountingCipher(WideCipher):
    """Wraps another cipher and counts pair evaluations in ``calls``."""

    def __init__(self, inner: WideCipher):
        self.inner = inner
        self.name = f"counting({inner.name})"
        self.block_bits = inner.block_bits
        self.block_bytes = inner.block_bytes
        self.key_bytes = inner.key_bytes
        self.calls = 0

    def bind(self, key: bytes) -> _CountingKeyed:
        return _CountingKeyed(self.inner.bind(key), self)


CIPHERS = {"feistel-aes256": FeistelAES256, "rijndael256": Rijndael256}
DEFAULT_CIPHER = FeistelAES256()


def get_cipher(name: str) -> WideCipher:
    try:
        return CIPHERS[name]()
    except KeyError:
        raise ParameterError(f"unknown cipher {name!r}; choose from {sorted(CIPHERS)}") from None


def _as_pair_arrays(cipher: WideCipher, left: bytes, right: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(left) != cipher.block_bytes or len(right) != cipher.block_bytes:
        raise SizeMismatchError(f"blocks must be {cipher.block_bytes} bytes")
    return (np.frombuffer(left, dtype=np.uint8)[None, :].copy(),
            np.frombuffer(right, dtype=np.uint8)[None, :].copy())


def cipher_pair(key: bytes, left: bytes, right: bytes, cipher: WideCipher = DEFAULT_CIPHER) -> tuple[bytes, bytes]:
    """Encrypt the concatenation ``left || right`` and split the result."""
    a, b = _as_pair_arrays(cipher, left, right)
    x, y = cipher.bind(key).forward(a, b)
    return x[0].tobytes(), y[0].tobytes()


def cipher_pair_inv(key: bytes, left: bytes, right: bytes, cipher: WideCipher = DEFAULT_CIPHER) -> tuple[bytes, bytes]:
    a, b = _as_pair_arrays(cipher, left, right)
    x, y = cipher.bind(key).inverse(a, b)
    return x[0].tobytes(), y[0].tobytes()


def rounds_for(m: int) -> int:
    if m < 2 or m & (m - 1):
        raise ParameterError(f"block count must be a power of 2 and at least 2, got {m}")
    return m.bit_length() - 1


def _butterfly(perm: KeyedPermutation, blocks: np.ndarray, inverse: bool) -> np.ndarray:
    count, m, width = blocks.shape
    rounds = rounds_for(m)
    state = np.ascontiguousarray(blocks)
    order = range(rounds, 0, -1) if inverse else range(1, rounds + 1)
    apply = perm.inverse if inverse else perm.forward
    for r in order:
        half = 1 << (r - 1)
        # (count, groups, side, offset, width): side 0 is the left position
        view = state.reshape(count, m >> r, 2, half, width)
        left = view[:, :, 0].reshape(-1, width)
        right = view[:, :, 1].reshape(-1, width)
        out_l, out_r = apply(left, right)
        nxt = np.empty_like(view)
        nxt[:, :, 0] = out_l.reshape(count, m >> r, half, width)
        nxt[:, :, 1] = out_r.reshape(count, m >> r, half, width)
        state = nxt.reshape(count, m, width)
    return state


def _check_batch(cipher: WideCipher, blocks: np.ndarray) -> None:
    if blocks.ndim != 3 or blocks.shape[2] != cipher.block_bytes:
        raise SizeMismatchError(f"expected (count, m, {cipher.block_bytes}) uint8 array, got {blocks.shape}")
    rounds_for(blocks.shape[1])


def aont_forward_batch(key: bytes, blocks: np.ndarray, cipher: WideCipher = DEFAULT_CIPHER) -> np.ndarray:
    _check_batch(cipher, blocks)
    return _butterfly(cipher.bind(key), blocks, inverse=False)


def aont_inverse_batch(key: bytes, blocks: np.ndarray, cipher: WideCipher = DEFAULT_CIPHER) -> np.ndarray:
    _check_batch(cipher, blocks)
    return _butterfly(cipher.bind(key), blocks, inverse=True)


def _blocks_to_array(cipher: WideCipher, blocks: Sequence[bytes]) -> np.ndarray:
    if any(len(b) != cipher.block_bytes for b in blocks):
        raise SizeMismatchError(f"every block must be {cipher.block_bytes} bytes")
    rounds_for(len(blocks))
    return np.frombuffer(b"".join(blocks), dtype=np.uint8).reshape(1, len(blocks), cipher.block_bytes)


def aont_forward(key: bytes, blocks: Sequence[bytes], cipher: WideCipher = DEFAULT_CIPHER) -> list[bytes]:
    """Transform ``m`` blocks (``m`` a power of 2, at least 2)."""
    out = aont_forward_batch(key, _blocks_to_array(cipher, blocks), cipher)
    return [row.tobytes() for row in out[0]]


def aont_inverse(key: bytes, blocks: Sequence[bytes], cipher: WideCipher = DEFAULT_CIPHER) -> list[bytes]:
    out = aont_inverse_batch(key, _blocks_to_array(cipher, blocks), cipher)
    return [row.tobytes() for row in out[0]]
