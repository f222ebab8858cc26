import numpy as np
import pytest

from harq_scma.codebook import ScmaCodebook, default_codebook


@pytest.fixture(scope="session")
def cb6():
    """The shipped J=6, K=4, M=4 codebook."""
    return default_codebook()


@pytest.fixture(scope="session")
def cb_tree():
    """Two orthogonal BPSK users on disjoint resources: a cycle-free instance."""
    cw = np.zeros((2, 2, 2), dtype=complex)
    cw[0, 0, 0], cw[0, 1, 0] = 1.0, -1.0
    cw[1, 0, 1], cw[1, 1, 1] = 1.0, -1.0
    return ScmaCodebook(cw)
