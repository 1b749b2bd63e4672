"""Arithmetic in GF(2^8) with the 0x11d reduction polynomial.

Scalar helpers work on Python ints; ``MUL`` is a 256x256 lookup table so that
multiplying a whole byte array by a constant is a single numpy gather.
"""

from __future__ import annotations

import numpy as np

PRIMITIVE = 0x11D

EXP = [0] * 512
LOG = [0] * 256


def _init_tables() -> None:
    x = 1
    for i in range(255):
        EXP[i] = x
        LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIMITIVE
    for i in range(255, 512):
        EXP[i] = EXP[i - 255]


_init_tables()


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return EXP[255 - LOG[a]]


def power(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return EXP[(LOG[a] * e) % 255]


def _build_mul_table() -> np.ndarray:
    table = np.zeros((256, 256), dtype=np.uint8)
    for a in range(1, 256):
        for b in range(1, 256):
            table[a, b] = EXP[LOG[a] + LOG[b]]
    return table


MUL = _build_mul_table()


def mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            aik = a[i][k]
            if aik == 0:
                continue
            bk = b[k]
            row = out[i]
            for j in range(cols):
                row[j] ^= mul(aik, bk[j])
    return out


def mat_inv(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inverse; raises ``ZeroDivisionError`` if singular."""
    size = len(m)
    a = [list(row) + [int(i == j) for j in range(size)] for i, row in enumerate(m)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if a[r][col]), None)
        if pivot is None:
            raise ZeroDivisionError("singular matrix")
        a[col], a[pivot] = a[pivot], a[col]
        scale = inv(a[col][col])
        a[col] = [mul(v, scale) for v in a[col]]
        for r in range(size):
            if r != col and a[r][col]:
                f = a[r][col]
                a[r] = [v ^ mul(f, p) for v, p in zip(a[r], a[col])]
    return [row[size:] for row in a]


def combine_rows(coeffs: list[int], rows: list[np.ndarray]) -> np.ndarray:
    """XOR-sum of ``coeff * row`` over GF(256), vectorized over each row array."""
    out = np.zeros_like(rows[0])
    for c, row in zip(coeffs, rows):
        if c == 0:
            continue
        if c == 1:
            out ^= row
        else:
            out ^= MUL[c][row]
    return out
