import os

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

from fmatrix.saddle import SaddleSystem

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_f_matrix(rng, n: int, m: int, symmetric: bool = True, density: float = 0.15):
    """Random F-matrix: sparse SPD (or nonsymmetric with PD symmetric part) A,
    B with rows ``+-(e_i - e_j)`` or ``+-e_i``, full column rank."""
    R = sp.random(n, n, density=density, random_state=rng, data_rvs=rng.standard_normal)
    A = (R @ R.T).toarray() + n * 0.1 * np.eye(n)
    if not symmetric:
        S = rng.standard_normal((n, n)) * (R.toarray() != 0)
        A = A + 0.5 * (S - S.T)
    B = np.zeros((n, m))
    rows = rng.permutation(n)
    # the first m rows make B full rank (one pivot per pressure)
    for j in range(m):
        B[rows[j], j] = rng.choice([-1.0, 1.0])
        if j > 0 and rng.random() < 0.6:
            B[rows[j], rng.integers(0, j)] = -B[rows[j], j]
    for i in rows[m:]:
        if m and rng.random() < 0.5:
            a, b = rng.choice(m, size=2, replace=m < 2)
            if a != b:
                B[i, a], B[i, b] = 1.0, -1.0
    return SaddleSystem(sp.csr_matrix(A), sp.csr_matrix(B), symmetric)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
