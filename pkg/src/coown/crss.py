"""Collusion-resistant threshold secret sharing.

A sharing picks a secret exponent polynomial X of degree t-1 and a blinding
polynomial Y of degree t-1 with Y(0) = 0.  Share i is (X(i), Y(i)) and the
secret is g^X(0).  A shareholder delegates share i to identity U as
``g^X(i) * H(U)^Y(i)``.  Interpolating t delegations for the same U in the
exponent yields ``g^X(0) * H(U)^Y(0) = g^X(0)``; delegations issued to
different identities leave a non-zero power of H(U) - H(U') behind.

Lagrange coefficients are computed over the share indices.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .errors import FormatError, InsufficientDelegationsError, ParameterError

KDF_LABEL = b"coown/unit-key/v1"
_sysrand = secrets.SystemRandom()


@dataclass(frozen=True)
class Share:
    index: int
    x: int
    y: int

    def to_bytes(self, group) -> bytes:
        w = group.scalar_bytes
        return struct.pack(">H", self.index) + self.x.to_bytes(w, "big") + self.y.to_bytes(w, "big")

    @classmethod
    def from_bytes(cls, group, data: bytes) -> "Share":
        w = group.scalar_bytes
        if len(data) != 2 + 2 * w:
            raise FormatError(f"share must be {2 + 2 * w} bytes, got {len(data)}")
        (index,) = struct.unpack(">H", data[:2])
        x = int.from_bytes(data[2:2 + w], "big")
        y = int.from_bytes(data[2 + w:], "big")
        if x >= group.order or y >= group.order:
            raise FormatError("share scalar out of range")
        return cls(index, x, y)


@dataclass(frozen=True)
class Delegation:
    index: int
    identity: str
    value: Any

    def to_bytes(self, group) -> bytes:
        ident = self.identity.encode("utf-8")
        return struct.pack(">HH", self.index, len(ident)) + ident + group.encode(self.value)

    @classmethod
    def from_bytes(cls, group, data: bytes) -> "Delegation":
        if len(data) < 4:
            raise FormatError("truncated delegation")
        index, ident_len = struct.unpack(">HH", data[:4])
        if len(data) != 4 + ident_len + group.element_bytes:
            raise FormatError("delegation length does not match its header")
        try:
            identity = data[4:4 + ident_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("delegation identity is not UTF-8") from exc
        return cls(index, identity, group.decode(data[4 + ident_len:]))


@dataclass(frozen=True)
class Secret:
    value: Any


def eval_poly(coeffs: Sequence[int], z: int, q: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * z + c) % q
    return acc


def shares_from_polynomials(group, x_coeffs: Sequence[int], y_coeffs: Sequence[int], n: int) -> tuple[Secret, list[Share]]:
    """Deterministic core of :func:`crss_share` for given polynomials."""
    q = group.order
    if len(x_coeffs) != len(y_coeffs):
        raise ParameterError("secret and blinding polynomials must have equal degree")
    if y_coeffs[0] % q:
        raise ParameterError("blinding polynomial must vanish at zero")
    shares = [Share(i, eval_poly(x_coeffs, i, q), eval_poly(y_coeffs, i, q)) for i in range(1, n + 1)]
    return Secret(group.exp_base(x_coeffs[0])), shares


def crss_share(group, t: int, n: int, rng=None) -> tuple[Secret, list[Share]]:
    """Create a fresh random secret g^x and n shares with threshold t.

    ``rng`` needs a ``randrange`` method; it defaults to the OS CSPRNG.
    """
    if not 1 <= t <= n:
        raise ParameterError(f"need 1 <= t <= n, got t={t}, n={n}")
    if n >= group.order:
        raise ParameterError(f"n={n} must be below the group order")
    rng = rng or _sysrand
    q = group.order
    x_coeffs = [rng.randrange(q) for _ in range(t)]
    y_coeffs = [0] + [rng.randrange(q) for _ in range(t - 1)]
    return shares_from_polynomials(group, x_coeffs, y_coeffs, n)


def crss_delegate(group, share: Share, identity: str) -> Delegation:
    value = group.mul(group.exp_base(share.x), group.exp(group.hash_to_group(identity), share.y))
    return Delegation(share.index, identity, value)


def lagrange_at_zero(indices: Iterable[int], q: int) -> list[int]:
    """Coefficients l_p with sum(l_p * P(i_p)) = P(0) for deg P < len(indices)."""
    idx = [i % q for i in indices]
    if len(set(idx)) != len(idx):
        raise FormatError(f"duplicate indices {list(indices)}")
    if 0 in idx:
        raise FormatError("index 0 is reserved for the secret")
    coeffs = []
    for p, ip in enumerate(idx):
        num = den = 1
        for k, ik in enumerate(idx):
            if k != p:
                num = num * ik % q
                den = den * (ik - ip) % q
        coeffs.append(num * pow(den, -1, q) % q)
    return coeffs


def crss_combine(group, delegations: Sequence[Delegation], t: int) -> Secret:
    """Interpolate delegations in the exponent.

    The result equals the shared secret only when every delegation names
    the same identity; otherwise a different group element comes back and
    the caller finds out when the derived key fails to verify.
    """
    if len(delegations) < t:
        raise InsufficientDelegationsError(f"need {t} delegations, got {len(delegations)}")
    coeffs = lagrange_at_zero([d.index for d in delegations], group.order)
    acc = group.identity
    for d, c in zip(delegations, coeffs):
        acc = group.mul(acc, group.exp(d.value, c))
    return Secret(acc)


def hash_to_group(group, identity: str):
    return group.hash_to_group(identity)


def kdf(group, secret: Secret, key_bytes: int = 32) -> bytes:
    """Symmetric key of ``key_bytes`` bytes derived from a group secret."""
    return hashlib.shake_256(KDF_LABEL + group.encode(secret.value)).digest(key_bytes)
