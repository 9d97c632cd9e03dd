"""Named, independent random streams derived from one run seed."""

import numpy as np

# Fixed spawn keys: appending a stream must never renumber existing ones.
STREAM_KEYS = {
    "distraction": 0,
    "spawn": 1,
    "mobility": 2,
    "los": 3,
    "shadow": 4,
    "phase": 5,
    "mac": 6,
}


def derive_stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream ``name`` of run ``seed``.

    Streams are independent of each other, so e.g. changing the threshold
    (which only affects classification) never perturbs mobility or MAC draws.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = STREAM_KEYS[name]
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
