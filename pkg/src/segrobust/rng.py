"""Counter-based random streams keyed by (seed, index).

Philox is a counter-based generator: the draw sequence for a key depends
only on that key, never on call order, thread count, or how many other
streams were consumed. Keying one stream per (seed, sample_index) or
(seed, replicate_index) therefore gives bit-identical results under serial
and parallel execution.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one (seed, index) key."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, index & _MASK64]))


def unit_uniform(seed: int, index: int) -> float:
    """First uniform draw in [0, 1) of the (seed, index) stream."""
    return float(stream(seed, index).random())
