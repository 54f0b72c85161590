"""Counter-derived random streams.

Every trial or trajectory gets its own Philox stream keyed by
``(master seed, index)``, so results never depend on batching or threads.
"""
import numpy as np

_MASK = 2**64 - 1


def stream(seed: int, index: int, domain: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & _MASK, (int(domain) << 40) | int(index)]))
