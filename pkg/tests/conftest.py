from functools import lru_cache

import numpy as np
import pytest
from scipy.special import roots_legendre

from thermoscope import operators as ops


def random_hermitian(rng, d, scale=1.0):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (a + a.conj().T) / 2


def random_state(rng, d, purity=1.0):
    """Full-rank state exp(A)/tr exp(A) with a random Hermitian A."""
    return ops.gibbs_normalize(random_hermitian(rng, d, purity))


@lru_cache(maxsize=4)
def _legendre(n):
    return roots_legendre(n)


def quadrature_km(x, y, rho, n=2000):
    """Kubo-Mori correlation by Gauss-Legendre quadrature of the nu-integral."""
    w, v = np.linalg.eigh(rho)
    nodes, weights = _legendre(n)
    nu = 0.5 * (nodes + 1)
    xt = v.conj().T @ x @ v
    yt = v.conj().T @ y @ v
    # tr(rho^nu X rho^(1-nu) Y) = sum_jk p_j^nu X_jk p_k^(1-nu) Y_kj
    pj = w[None, :, None] ** nu[:, None, None]
    pk = w[None, None, :] ** (1 - nu[:, None, None])
    integrand = np.einsum("njk,jk,kj->n", pj * pk, xt, yt)
    return float(np.real(0.5 * weights @ integrand))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def qubit_dataset(bloch, sizes, reference=None):
    """Noise-free qubit dataset with the given Bloch vectors as Pauli means."""
    from thermoscope import Dataset

    bloch = np.atleast_2d(np.asarray(bloch, dtype=float))
    if np.isscalar(sizes):
        sizes = [int(sizes)] * len(bloch)
    return Dataset(tuple(ops.pauli_matrices()), sizes, bloch, reference, ("X", "Y", "Z"))


def z_family(seed, size=20000, R=10):
    from thermoscope import preset_config, simulate_dataset

    return simulate_dataset(preset_config("z-family", seed=seed, size=size, R=R))
