import zlib
from typing import Union

import numpy as np

SeedKey = Union[int, str]


def derive_seed(*keys: SeedKey) -> int:
    """Mix a run seed with stream labels into an independent 32-bit seed.

    Keys feed ``numpy.random.SeedSequence`` as entropy; string labels enter
    as their CRC32. ``derive_seed(run_seed, "child", i)`` is the child seed.
    """
    entropy = [zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def child_seed(run_seed: int, index: int) -> int:
    return derive_seed(run_seed, "child", index)
