"""Vectorized Rijndael with variable block and key length.

AES is the 128-bit-block member of the family; this module also provides the
256-bit-block variant.  Every call processes a batch of blocks at once: the
input is a ``(count, 4 * nb)`` uint8 array and each row is one block, laid
out column-major exactly as in the Rijndael proposal (byte ``r + 4c`` is row
``r`` of column ``c``).
"""

from __future__ import annotations

import numpy as np


def _xtime(a: int) -> int:
    a <<= 1
    return (a ^ 0x11B) if a & 0x100 else a


def _gmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = _xtime(a)
        b >>= 1
    return out


def _build_sbox() -> tuple[np.ndarray, np.ndarray]:
    inverse = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gmul(a, b) == 1:
                inverse[a] = b
                break
    sbox = np.zeros(256, dtype=np.uint8)
    for a in range(256):
        x = inverse[a]
        s = x
        for _ in range(4):
            x = ((x << 1) | (x >> 7)) & 0xFF
            s ^= x
        sbox[a] = s ^ 0x63
    inv_sbox = np.zeros(256, dtype=np.uint8)
    inv_sbox[sbox] = np.arange(256, dtype=np.uint8)
    return sbox, inv_sbox


SBOX, INV_SBOX = _build_sbox()
_MULT = {c: np.array([_gmul(a, c) for a in range(256)], dtype=np.uint8) for c in (2, 3, 9, 11, 13, 14)}

_SHIFTS = {4: (0, 1, 2, 3), 6: (0, 1, 2, 3), 8: (0, 1, 3, 4)}


def _shift_perm(nb: int) -> np.ndarray:
    shifts = _SHIFTS[nb]
    perm = np.empty(4 * nb, dtype=np.intp)
    for c in range(nb):
        for r in range(4):
            perm[4 * c + r] = 4 * ((c + shifts[r]) % nb) + r
    return perm


class Rijndael:
    """Rijndael keyed with ``key`` for blocks of ``block_bytes`` bytes.

    >>> import binascii
    >>> key = bytes(range(32))
    >>> pt = np.frombuffer(binascii.unhexlify("00112233445566778899aabbccddeeff"), dtype=np.uint8)
    >>> binascii.hexlify(Rijndael(key, 16).encrypt(pt[None, :])[0].tobytes())
    b'8ea2b7ca516745bfeafc49904b496089'
    """

    def __init__(self, key: bytes, block_bytes: int = 32):
        if len(key) not in (16, 24, 32):
            raise ValueError("Rijndael key must be 16, 24 or 32 bytes")
        if block_bytes not in (16, 24, 32):
            raise ValueError("Rijndael block must be 16, 24 or 32 bytes")
        self.nb = block_bytes // 4
        self.nk = len(key) // 4
        self.rounds = max(self.nb, self.nk) + 6
        self.block_bytes = block_bytes
        self._round_keys = self._expand(key)
        self._perm = _shift_perm(self.nb)
        self._inv_perm = np.argsort(self._perm)

    def _expand(self, key: bytes) -> np.ndarray:
        nb, nk = self.nb, self.nk
        words = [list(key[4 * i:4 * i + 4]) for i in range(nk)]
        rcon = 1
        for i in range(nk, nb * (self.rounds + 1)):
            temp = list(words[i - 1])
            if i % nk == 0:
                temp = temp[1:] + temp[:1]
                temp = [int(SBOX[b]) for b in temp]
                temp[0] ^= rcon
                rcon = _xtime(rcon)
            elif nk > 6 and i % nk == 4:
                temp = [int(SBOX[b]) for b in temp]
            words.append([a ^ b for a, b in zip(words[i - nk], temp)])
        flat = np.array(words, dtype=np.uint8).reshape(self.rounds + 1, 4 * nb)
        return flat

    @staticmethod
    def _mix(state: np.ndarray, coeffs: tuple[int, int, int, int]) -> np.ndarray:
        cols = state.reshape(state.shape[0], -1, 4)
        a = [cols[:, :, r] for r in range(4)]
        out = np.empty_like(cols)
        c0, c1, c2, c3 = coeffs
        m = _MULT
        for r in range(4):
            terms = []
            for k, c in enumerate((c0, c1, c2, c3)):
                src = a[(r + k) % 4]
                terms.append(src if c == 1 else m[c][src])
            out[:, :, r] = terms[0] ^ terms[1] ^ terms[2] ^ terms[3]
        return out.reshape(state.shape)

    def encrypt(self, blocks: np.ndarray) -> np.ndarray:
        state = blocks ^ self._round_keys[0]
        for rnd in range(1, self.rounds + 1):
            state = SBOX[state][:, self._perm]
            if rnd != self.rounds:
                state = self._mix(state, (2, 3, 1, 1))
            state ^= self._round_keys[rnd]
        return state

    def decrypt(self, blocks: np.ndarray) -> np.ndarray:
        state = blocks ^ self._round_keys[self.rounds]
        for rnd in range(self.rounds - 1, -1, -1):
            state = INV_SBOX[state[:, self._inv_perm]]
            state ^= self._round_keys[rnd]
            if rnd != 0:
                state = self._mix(state, (14, 11, 13, 9))
        return state
