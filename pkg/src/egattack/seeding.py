"""Seed derivation. All randomness in the package flows through here."""

import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def derive_seed(seed, *keys):
    """Derive a child seed from ``seed`` and a path of int/str keys."""
    ss = np.random.SeedSequence([int(seed), *(_key(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(_key(k) for k in keys)]))
