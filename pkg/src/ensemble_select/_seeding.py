from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary hashable parts.

    Python's ``hash`` is salted per process, so a keyed digest of ``repr`` is
    used instead; this keeps every derived stream reproducible across runs.
    """
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
