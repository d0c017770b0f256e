import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for component ``name`` under root ``seed``.

    Streams are keyed by a CRC32 of the name so the mapping does not depend
    on call order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return np.random.default_rng(ss)
