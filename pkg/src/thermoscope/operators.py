"""Dense Hermitian operator algebra on small Hilbert spaces.

Observables are plain complex ``numpy`` arrays that have passed through
:func:`hermitian`.  States are :class:`DensityMatrix` objects, which cache
their spectral decomposition so that logarithms, powers and relative
entropies never diagonalize the same matrix twice.
"""

import numpy as np

from .errors import DimMismatch, EigensolverFailed, NotHermitian, RankDeficient, ValidationError

#: Smallest eigenvalue kept after regularization.
EPS_RANK = 1e-12

_SYMMETRIZE_TOL = 1e-8


def _clamp_spectrum(w):
    """Affine map of a probability vector so that ``min >= EPS_RANK`` and ``sum == 1``."""
    w = np.maximum(w, 0.0)
    return EPS_RANK + (1.0 - w.size * EPS_RANK) * (w / w.sum())


def hermitian(a):
    """Return ``a`` as a symmetrized complex Hermitian array.

    Asymmetry up to ``1e-8`` (absolute) is attributed to rounding and
    removed; anything larger raises :class:`NotHermitian`.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise NotHermitian("dimension must be at least 2")
    asym = np.max(np.abs(a - a.conj().T))
    if asym > _SYMMETRIZE_TOL:
        raise NotHermitian(f"matrix is not Hermitian (max asymmetry {asym:.3g})")
    return 0.5 * (a + a.conj().T)


def spectral_decompose(a):
    """Eigen-decomposition ``a = V diag(w) V^†`` with ascending ``w``.

    Parameters
    ----------
    a : array_like
        Hermitian matrix.

    Returns
    -------
    w : ndarray of float, shape (d,)
    v : ndarray of complex, shape (d, d)
        Unitary matrix whose columns are the eigenvectors.
    """
    a = hermitian(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailed(f"Hermitian eigensolver did not converge: {exc}") from exc
    return w, v


def _from_spectrum(w, v):
    return (v * w) @ v.conj().T


class DensityMatrix:
    """A normalized positive semidefinite operator with cached spectrum.

    Parameters
    ----------
    matrix : array_like
        Hermitian, unit trace, eigenvalues no smaller than ``-1e-12``.
    regularize : bool
        Clamp eigenvalues at :data:`EPS_RANK` and renormalize, so the matrix
        logarithm always exists.  With ``False`` the spectrum is only clipped
        at zero.
    """

    __slots__ = ("matrix", "eigvals", "eigvecs", "_log")

    def __init__(self, matrix, regularize=True):
        m = hermitian(matrix)
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-8:
            raise ValidationError(f"density matrix must have unit trace, got {tr:.12g}")
        w, v = spectral_decompose(m / tr)
        if w[0] < -1e-10:
            raise ValidationError(f"density matrix has negative eigenvalue {w[0]:.3g}")
        if regularize:
            clipped = _clamp_spectrum(w)
        else:
            clipped = np.maximum(w, 0.0)
            clipped = clipped / clipped.sum()
        if regularize or np.any(clipped != w):
            m = _from_spectrum(clipped, v)
        else:
            m = m / tr
        self.matrix = m
        self.eigvals = clipped
        self.eigvecs = v
        self._log = None

    @classmethod
    def _from_spectrum(cls, w, v):
        # trusted constructor: w already normalized and nonnegative
        obj = cls.__new__(cls)
        w = _clamp_spectrum(w)
        obj.eigvals = w
        obj.eigvecs = v
        obj.matrix = _from_spectrum(w, v)
        obj._log = None
        return obj

    @classmethod
    def maximally_mixed(cls, dim):
        return cls._from_spectrum(np.full(dim, 1.0 / dim), np.eye(dim, dtype=complex))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def full_rank(self):
        return bool(self.eigvals[0] >= EPS_RANK * (1 - 1e-9))

    def log(self):
        """Matrix logarithm (cached)."""
        if self._log is None:
            if not self.full_rank:
                raise RankDeficient(
                    f"state has eigenvalue {self.eigvals[0]:.3g} below {EPS_RANK:g}"
                )
            self._log = _from_spectrum(np.log(self.eigvals), self.eigvecs)
        return self._log

    def power(self, t):
        return _from_spectrum(self.eigvals ** t, self.eigvecs)

    def is_maximally_mixed(self, tol=1e-12):
        return bool(np.ptp(self.eigvals) <= tol)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, eigvals={np.round(self.eigvals, 6)})"


def as_state(rho):
    return rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)


def matrix_log(rho):
    """Logarithm ``V diag(ln p) V^†`` of a full-rank state."""
    return as_state(rho).log()


def gibbs_normalize(a):
    """Return the state ``exp(a) / tr exp(a)`` for Hermitian ``a``.

    The largest eigenvalue is subtracted before exponentiation, so any
    finite exponent is safe.
    """
    w, v = spectral_decompose(a)
    p = np.exp(w - w[-1])
    return DensityMatrix._from_spectrum(p / p.sum(), v)


def log_trace_exp(a):
    """``ln tr exp(a)`` computed without overflow."""
    w, _ = spectral_decompose(a)
    return float(w[-1] + np.log(np.sum(np.exp(w - w[-1]))))


def expectation(x, rho):
    """``tr(rho x)`` as a real number."""
    rho = as_state(rho)
    x = np.asarray(x)
    if x.shape != rho.matrix.shape:
        raise DimMismatch(f"operator shape {x.shape} does not match state dimension {rho.dim}")
    return float(np.real(np.sum(rho.matrix.T * x)))


def expectations(ops, rho):
    """Vector of expectation values of a list of operators."""
    rho = as_state(rho)
    if len(ops) == 0:
        return np.zeros(0)
    stack = np.asarray(ops)
    if stack.shape[1:] != rho.matrix.shape:
        raise DimMismatch(f"operator shape {stack.shape[1:]} does not match state dimension {rho.dim}")
    return np.real(np.einsum("kij,ji->k", stack, rho.matrix))


def _xlogy_spectrum(p, q_log):
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * q_log[pos]
    return out


def von_neumann_entropy(rho):
    rho = as_state(rho)
    p = rho.eigvals
    return float(-np.sum(_xlogy_spectrum(p, np.log(np.where(p > 0, p, 1.0)))))


def relative_entropy(rho, tau):
    """Umegaki relative entropy ``S(rho||tau) = tr rho (ln rho - ln tau)``.

    ``tau`` must be full rank; zero eigenvalues of ``rho`` contribute
    nothing.  The result is clipped at zero to absorb rounding.
    """
    rho, tau = as_state(rho), as_state(tau)
    if rho.dim != tau.dim:
        raise DimMismatch(f"dimensions {rho.dim} and {tau.dim} differ")
    p = rho.eigvals
    neg_entropy = np.sum(_xlogy_spectrum(p, np.log(np.where(p > 0, p, 1.0))))
    cross = expectation(tau.log(), rho)
    return max(float(neg_entropy - cross), 0.0)


def _log_mean(p, q):
    """Logarithmic mean ``(p - q) / (ln p - ln q)``, equal to ``p`` on the diagonal."""
    lp, lq = np.log(p), np.log(q)
    t = lp - lq
    small = np.abs(t) < 1e-8
    safe = np.where(small, 1.0, t)
    return np.where(small, q * (1.0 + 0.5 * t), q * np.expm1(safe) / safe)


def kubo_mori_weights(rho):
    """Matrix ``W_jk`` of logarithmic means of the eigenvalues of ``rho``."""
    rho = as_state(rho)
    if not rho.full_rank:
        raise RankDeficient("Kubo-Mori metric needs a full-rank state")
    p = rho.eigvals
    return _log_mean(p[:, None], p[None, :])


def kubo_mori(x, y, rho):
    """Canonical correlation ``∫_0^1 tr(rho^ν x rho^(1-ν) y) dν``.

    Evaluated in the eigenbasis of ``rho``, where the ν-integral reduces to
    the logarithmic mean of eigenvalue pairs.
    """
    rho = as_state(rho)
    w = kubo_mori_weights(rho)
    v = rho.eigvecs
    xt = v.conj().T @ np.asarray(x) @ v
    yt = v.conj().T @ np.asarray(y) @ v
    return float(np.real(np.sum(xt * w * yt.T)))


def kubo_mori_matrix(ops, rho, centered=True):
    """Gram matrix ``K_ab = <δA_a; δA_b>_rho`` of a list of operators.

    With ``centered=True`` each operator has its expectation value removed
    first, which makes ``K`` the derivative of the expectation values with
    respect to the Lagrange parameters of a Gibbs state.
    """
    rho = as_state(rho)
    k = len(ops)
    if k == 0:
        return np.zeros((0, 0))
    w = kubo_mori_weights(rho)
    v = rho.eigvecs
    stack = np.einsum("ji,kjl,lm->kim", v.conj(), np.asarray(ops), v)
    if centered:
        means = np.real(np.einsum("kii,i->k", stack, rho.eigvals))
        stack = stack - means[:, None, None] * np.eye(rho.dim)
    weighted = stack * w
    mat = np.real(np.einsum("aij,bji->ab", weighted, stack))
    return 0.5 * (mat + mat.T)


def pauli_matrices():
    """The Pauli operators ``(X, Y, Z)``."""
    return [
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]


def qubit_state(bloch):
    """Qubit density matrix ``(1 + r·σ)/2`` for a Bloch vector ``r``."""
    r = np.asarray(bloch, dtype=float)
    if np.linalg.norm(r) > 1 + 1e-12:
        raise ValidationError(f"Bloch vector {r} lies outside the unit ball")
    m = 0.5 * (np.eye(2) + sum(c * s for c, s in zip(r, pauli_matrices())))
    return DensityMatrix(m)


def bloch_vector(rho):
    return expectations(pauli_matrices(), rho)


def hilbert_schmidt_gram(ops):
    """Gram matrix ``tr(A_a^† A_b)``."""
    stack = np.asarray(ops)
    return np.real(np.einsum("aij,bij->ab", stack.conj(), stack))
