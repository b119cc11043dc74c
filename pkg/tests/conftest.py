import numpy as np
import pytest

from dppdesign import KernelMatrix


def random_pd_kernel(n: int, seed: int, ridge: float = 0.5) -> KernelMatrix:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    return KernelMatrix(a @ a.T + ridge * np.eye(n))


def cofactor_det(a) -> float:
    """Plain cofactor-expansion determinant, the independent oracle."""
    a = [list(map(float, row)) for row in a]
    n = len(a)
    if n == 1:
        return a[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in a[1:]]
        total += (-1) ** j * a[0][j] * cofactor_det(minor)
    return total


@pytest.fixture
def pd6():
    return random_pd_kernel(6, seed=42)
