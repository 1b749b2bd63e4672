import os

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from coown.aont import FeistelAES256, Rijndael256, cipher_pair
from coown.rijndael import Rijndael

from oracles import feistel_oracle, rijndael_encrypt

PT = bytes.fromhex("00112233445566778899aabbccddeeff")

# published AES vectors (128/192/256-bit keys over the same plaintext)
AES_VECTORS = [
    (bytes(range(16)), "69c4e0d86a7b0430d8cdb78070b4c55a"),
    (bytes(range(24)), "dda97ca4864cdfe06eaf70a0ec0d7191"),
    (bytes(range(32)), "8ea2b7ca516745bfeafc49904b496089"),
]

# frozen from the byte-wise oracle (itself pinned to the AES vectors above)
RIJNDAEL256_KEY = bytes(range(32))
RIJNDAEL256_PT = bytes(range(32))
RIJNDAEL256_CT = "623d2bd4ca3796dc3d02ecf2f37fb637fd3da58509cebb67ab9265b04db51e7d"

# frozen from feistel_oracle
FEISTEL_KEY = bytes(range(32))
FEISTEL_CT = "f65f070f1ef409509867cdc0ae4439f6572ac6a1d1a09221b0c9ff5ada3ee9f5"


def _arr(b):
    return np.frombuffer(b, dtype=np.uint8)[None, :].copy()


@pytest.mark.parametrize("key,ct", AES_VECTORS)
def test_oracle_reproduces_published_aes(key, ct):
    assert rijndael_encrypt(key, PT).hex() == ct


@pytest.mark.parametrize("key,ct", AES_VECTORS)
def test_numpy_rijndael_128bit_blocks(key, ct):
    r = Rijndael(key, 16)
    out = r.encrypt(_arr(PT))
    assert out[0].tobytes().hex() == ct
    np.testing.assert_array_equal(r.decrypt(out), _arr(PT))


def test_numpy_rijndael_matches_library_aes_in_bulk():
    key = os.urandom(32)
    data = os.urandom(16 * 64)
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    expected = enc.update(data) + enc.finalize()
    blocks = np.frombuffer(data, dtype=np.uint8).reshape(64, 16)
    assert Rijndael(key, 16).encrypt(blocks).tobytes() == expected


def test_rijndael_256bit_block_kat():
    out = Rijndael(RIJNDAEL256_KEY, 32).encrypt(_arr(RIJNDAEL256_PT))
    assert out[0].tobytes().hex() == RIJNDAEL256_CT
    assert rijndael_encrypt(RIJNDAEL256_KEY, RIJNDAEL256_PT).hex() == RIJNDAEL256_CT


@pytest.mark.parametrize("seed", range(5))
def test_rijndael_256bit_blocks_agree_with_oracle(seed):
    rng = np.random.default_rng(seed)
    key = rng.integers(0, 256, 32, dtype=np.uint8).tobytes()
    block = rng.integers(0, 256, 32, dtype=np.uint8).tobytes()
    r = Rijndael(key, 32)
    out = r.encrypt(_arr(block))
    assert out[0].tobytes() == rijndael_encrypt(key, block)
    np.testing.assert_array_equal(r.decrypt(out), _arr(block))


def test_wide_rijndael_pair_is_one_block():
    left, right = RIJNDAEL256_PT[:16], RIJNDAEL256_PT[16:]
    a, b = cipher_pair(RIJNDAEL256_KEY, left, right, Rijndael256())
    assert (a + b).hex() == RIJNDAEL256_CT


def test_feistel_kat():
    a, b = cipher_pair(FEISTEL_KEY, bytes(range(16)), bytes(range(16, 32)), FeistelAES256())
    assert (a + b).hex() == FEISTEL_CT
    assert b"".join(feistel_oracle(FEISTEL_KEY, bytes(range(16)), bytes(range(16, 32)))).hex() == FEISTEL_CT


@pytest.mark.parametrize("seed", range(5))
def test_feistel_agrees_with_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    key, left, right = (rng.integers(0, 256, n, dtype=np.uint8).tobytes() for n in (32, 16, 16))
    assert cipher_pair(key, left, right) == feistel_oracle(key, left, right)


def test_rejects_bad_key_sizes():
    with pytest.raises(ValueError):
        Rijndael(bytes(20), 16)
    with pytest.raises(ValueError):
        Rijndael(bytes(16), 20)
