"""Deterministic, counter-based random streams.

Every draw site gets its own Philox stream keyed by (seed, site label), so
adding a new draw site never perturbs the numbers an existing site sees.
Labels are hashed with BLAKE2s, which is stable across platforms and
interpreter runs (unlike the built-in hash()).
"""

from __future__ import annotations

import hashlib

import numpy as np

_RETRY_OFFSET = 1 << 63


def _label_key(label: str) -> int:
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def site_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one draw site of one sample."""
    ss = np.random.SeedSequence([int(seed) & (2**128 - 1), _label_key(label)])
    return np.random.Generator(np.random.Philox(ss))


def sample_seed(global_seed: int, index: int, attempt: int = 0) -> int:
    """Per-sample seed derived from the run seed and the sample slot.

    Retries after a rejection continue the stream at an offset of 2^63
    per attempt, so the accepted sample for slot i is independent of how
    many earlier slots were rejected.
    """
    key = int(index) + int(attempt) * _RETRY_OFFSET
    ss = np.random.SeedSequence([int(global_seed) & (2**128 - 1), key])
    return int(ss.generate_state(1, np.uint64)[0])
