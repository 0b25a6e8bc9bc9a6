"""Named random substreams derived from one root seed.

Every source of randomness in the pipeline (parameter init, shuffles,
row subsampling, correlation sampling) draws from a substream named after
its purpose, so a single root seed reproduces a whole run.
"""

import zlib

import numpy as np


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Return a generator for the substream `names` under `seed`.

    The same (seed, names) pair always yields an identical stream; distinct
    names yield statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for name in names:
        if isinstance(name, int):
            entropy.append(name & 0xFFFFFFFFFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(entropy)
