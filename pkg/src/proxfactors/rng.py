"""Counter-based random substreams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, replicate, purpose)``. Replicates can therefore run in any order, or
concurrently, without changing results. Normals use numpy's ziggurat sampler
(``Generator.standard_normal``).
"""

import numpy as np

PURPOSES = {
    "loadings": 1,
    "factors": 2,
    "errors": 3,
    "hetero": 4,
    "bootstrap": 5,
    "order_stats": 6,
    "generic": 7,
}


def substream(seed: int, replicate: int = 0, purpose: str = "generic") -> np.random.Generator:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown purpose tag {purpose!r}")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    ss = np.random.SeedSequence([seed, int(replicate), PURPOSES[purpose]])
    return np.random.Generator(np.random.Philox(ss))
