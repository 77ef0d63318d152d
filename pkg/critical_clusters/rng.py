"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, sample_index, stream)``, so a sample is reproducible on its own and
independent of which worker produced it.
"""

from __future__ import annotations

import numpy as np


STREAM_SITES = 0
STREAM_SWEEPS = 1
STREAM_SIGNS = 2
STREAM_BOOTSTRAP = 3


def generator(seed: int, sample_index: int = 0, stream: int = 0) -> np.random.Generator:
	return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(sample_index), int(stream)])))
