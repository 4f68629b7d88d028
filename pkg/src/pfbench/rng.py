"""Seeded random streams.

Every random draw in the package comes from a NumPy ``Generator`` backed by the
counter-based Philox4x64 bit generator, keyed directly by a 64-bit seed. Sub-stream
seeds are derived, never drawn: ``derive_seed(*parts)`` takes the first 8 bytes
(little endian) of ``blake2b(json.dumps(parts, separators=(",", ":")), digest_size=8)``.
Parts are plain ints/strings, so the derivation is identical on every platform and
does not depend on execution order.
"""

import hashlib
import json

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(*parts):
    """Derive a 64-bit seed from an ordered tuple of ints/strings."""
    payload = json.dumps(list(parts), separators=(",", ":")).encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def generator(seed):
    """Philox-backed generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & SEED_MASK))
