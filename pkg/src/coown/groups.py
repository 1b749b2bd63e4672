"""Prime-order groups used for collusion-resistant sharing.

Two implementations share one duck-typed interface:

* :class:`Ristretto255` -- the prime-order group built on Curve25519
  (order ``2**252 + 27742317777372353535851937790883648493``) through
  libsodium.  Identities hash to the group with SHA-512 followed by the
  ristretto255 one-way map (``crypto_core_ristretto255_from_hash``).
* :class:`ToyGroup` -- the order-q subgroup of Z*_p for tiny q, so tests can
  enumerate every exponent.

Elements are opaque values; scalars are Python ints reduced mod ``order``.
"""

from __future__ import annotations

import hashlib
from typing import Mapping

import pysodium

from .errors import FormatError, ParameterError

H2G_LABEL = b"coown/hash-to-group/v1"


class Ristretto255:
    name = "ristretto255"
    order = 2**252 + 27742317777372353535851937790883648493
    element_bytes = 32
    scalar_bytes = 32
    identity = bytes(32)

    def __init__(self):
        self.generator = pysodium.crypto_scalarmult_ristretto255_base(self._scalar(1))

    def _scalar(self, k: int) -> bytes:
        return (k % self.order).to_bytes(32, "little")

    def exp(self, element: bytes, k: int) -> bytes:
        k %= self.order
        if k == 0 or element == self.identity:
            return self.identity
        return pysodium.crypto_scalarmult_ristretto255(self._scalar(k), element)

    def exp_base(self, k: int) -> bytes:
        return self.exp(self.generator, k)

    def mul(self, a: bytes, b: bytes) -> bytes:
        if a == self.identity:
            return b
        if b == self.identity:
            return a
        return pysodium.crypto_core_ristretto255_add(a, b)

    def hash_to_group(self, identity: str) -> bytes:
        digest = hashlib.sha512(H2G_LABEL + identity.encode("utf-8")).digest()
        return pysodium.crypto_core_ristretto255_from_hash(digest)

    def is_element(self, element) -> bool:
        return (isinstance(element, bytes) and len(element) == 32
                and (element == self.identity or bool(pysodium.crypto_core_ristretto255_is_valid_point(element))))

    def encode(self, element: bytes) -> bytes:
        return element

    def decode(self, data: bytes) -> bytes:
        if not self.is_element(data):
            raise FormatError("not a canonical ristretto255 encoding")
        return bytes(data)


class ToyGroup:
    """Order-q subgroup of Z*_p generated by g (default p=23, q=11, g=2).

    ``hash_exponents`` pins H(identity) = g^h for chosen identities, which is
    how tests reproduce hand computations; other identities hash to
    g^(SHA-256(identity) mod q).
    """

    name = "toy"

    def __init__(self, p: int = 23, q: int = 11, g: int = 2, hash_exponents: Mapping[str, int] | None = None):
        if (p - 1) % q or pow(g, q, p) != 1 or g % p in (0, 1):
            raise ParameterError(f"g={g} does not generate an order-{q} subgroup of Z*_{p}")
        self.p, self.order, self.generator = p, q, g
        self.identity = 1
        self.element_bytes = (p.bit_length() + 7) // 8
        self.scalar_bytes = (q.bit_length() + 7) // 8
        self.hash_exponents = dict(hash_exponents or {})

    def exp(self, element: int, k: int) -> int:
        return pow(element, k % self.order, self.p)

    def exp_base(self, k: int) -> int:
        return self.exp(self.generator, k)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def log(self, element: int) -> int:
        """Discrete log by enumeration (toy sizes only)."""
        for k in range(self.order):
            if pow(self.generator, k, self.p) == element:
                return k
        raise ValueError(f"{element} is not in the subgroup")

    def hash_to_group(self, identity: str) -> int:
        if identity in self.hash_exponents:
            return self.exp_base(self.hash_exponents[identity])
        h = int.from_bytes(hashlib.sha256(H2G_LABEL + identity.encode("utf-8")).digest(), "big")
        return self.exp_base(h)

    def is_element(self, element) -> bool:
        return isinstance(element, int) and 0 < element < self.p and pow(element, self.order, self.p) == 1

    def encode(self, element: int) -> bytes:
        return element.to_bytes(self.element_bytes, "big")

    def decode(self, data: bytes) -> int:
        value = int.from_bytes(data, "big")
        if len(data) != self.element_bytes or not self.is_element(value):
            raise FormatError("not an element of the toy group")
        return value


DEFAULT_GROUP = Ristretto255()
