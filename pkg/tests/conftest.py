import numpy as np
import pytest

from layoutforge.core import build_dag, default_taxonomy
from layoutforge.synth import SynthConfig, make_sample


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def dag(taxonomy):
    return build_dag(taxonomy)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sample_of_type(type_id: int, size: int = 64, index: int = 0, seed: int = 0, **kw):
    """(image, mask, poly) of a fixed room type."""
    cfg = SynthConfig(width=size, height=size, seed=seed, type_distribution={type_id: 1.0}, **kw)
    return make_sample(cfg, index)


def bfs_components(binary: np.ndarray) -> int:
    """Independent 4-connected component count by explicit flood fill."""
    H, W = binary.shape
    seen = np.zeros_like(binary, dtype=bool)
    n = 0
    for i in range(H):
        for j in range(W):
            if binary[i, j] and not seen[i, j]:
                n += 1
                stack = [(i, j)]
                seen[i, j] = True
                while stack:
                    a, b = stack.pop()
                    for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        y, x = a + da, b + db
                        if 0 <= y < H and 0 <= x < W and binary[y, x] and not seen[y, x]:
                            seen[y, x] = True
                            stack.append((y, x))
    return n


def adjacency(mask: np.ndarray) -> frozenset:
    """Unordered label pairs that touch across a 4-neighbour edge."""
    pairs = set()
    for a, b in ((mask[:, 1:], mask[:, :-1]), (mask[1:, :], mask[:-1, :])):
        diff = a != b
        for u, v in zip(a[diff], b[diff]):
            pairs.add((min(int(u), int(v)), max(int(u), int(v))))
    return frozenset(pairs)
