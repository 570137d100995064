"""Scoring levels of description against tomography data.

The central quantity is the asymptotic log-likelihood of a level ``G``,

    L(G) = Σ_i N_i [S(pi_i||pi_bar) - S(mu_bar||pi_bar)] - p Λ / 2,

with ``pi_i`` the projection of the i-th tomographic image onto the Gibbs
manifold of ``G`` and ``pi_bar`` the weighted mixture of the projections.
Additive constants common to all levels are dropped, so only differences
between scores of the same dataset carry meaning.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import geometry, operators as ops
from .errors import AlphaUnbounded, DegenerateSpread, SingularMetric, ValidationError
from .geometry import LevelOfDescription

log = logging.getLogger(__name__)

DEGENERATE_GAP = 1e-10
ALPHA_BRACKET = (-30.0, 30.0)
RELIABILITY_FRACTION = 0.5


@dataclass(frozen=True, eq=False)
class CorrelationMetric:
    """Kubo-Mori correlation matrix of the centered observables at ``mu_bar``.

    Contravariant vectors (Hamiltonian coefficients ``xi^b``) and covariant
    ones (expectation values ``f_b``) are related by ``f = C xi``.
    """

    base_state: ops.DensityMatrix
    matrix: np.ndarray
    inverse: np.ndarray

    def dot(self, x, y):
        """Scalar product of two contravariant vectors."""
        return float(np.asarray(x) @ self.matrix @ np.asarray(y))

    def dot_lower(self, a, b):
        """Scalar product of two covariant vectors."""
        return float(np.asarray(a) @ self.inverse @ np.asarray(b))

    def norm(self, x):
        return np.sqrt(max(self.dot(x, x), 0.0))

    def raise_index(self, a):
        return self.inverse @ np.asarray(a)

    def lower_index(self, x):
        return self.matrix @ np.asarray(x)

    def normalize(self, x):
        n = self.norm(x)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return np.asarray(x) / n


def correlation_metric(dataset):
    """Correlation matrix ``C_ab = <δF_a; δF_b>`` evaluated at ``mu_bar``."""
    center = dataset.center
    c = ops.kubo_mori_matrix(dataset.observables, center, centered=True)
    evals = np.linalg.eigvalsh(c)
    if evals[0] <= 1e-12:
        raise SingularMetric(f"correlation matrix is singular (smallest eigenvalue {evals[0]:.3g})")
    inv = np.linalg.inv(c)
    return CorrelationMetric(center, c, 0.5 * (inv + inv.T))


def covariance_matrix(dataset):
    """Weighted covariance ``Γ`` of the sample means and their mean ``f̄``."""
    w = dataset.weights
    fbar = w @ dataset.means
    dev = dataset.means - fbar
    gamma = (dev * w[:, None]).T @ dev
    return 0.5 * (gamma + gamma.T), fbar


@dataclass(frozen=True, eq=False)
class ModelScore:
    """Asymptotic log-likelihood of one level together with its parts."""

    level: LevelOfDescription
    p: int
    asymptotic_log_likelihood: float
    per_sample_entropies: np.ndarray
    misfit: float
    sizes: np.ndarray
    reference_entropy: float
    full_log_likelihood: float = None
    alpha: float = None
    alpha_curvature: float = None
    alpha_reliable: bool = None

    @property
    def Lambda(self):
        return float(np.sum(np.log(self.sizes)))

    @property
    def fit(self):
        """Data-fit term ``Σ_i N_i S(pi_i||pi_bar)``."""
        return float(self.sizes @ self.per_sample_entropies)

    def recompute(self):
        return float(self.sizes @ (self.per_sample_entropies - self.misfit) - 0.5 * self.p * self.Lambda)


@dataclass(frozen=True, eq=False)
class LevelProjections:
    level: LevelOfDescription
    projections: list
    center: ops.DensityMatrix
    per_sample_entropies: np.ndarray
    misfit: float
    reference_entropy: float


def project_dataset(dataset, level):
    """Project every tomographic image onto ``level`` (relative to ``sigma``)."""
    geometry.require_subspace(dataset.level, level)
    projections = [geometry.project(mu, level, dataset.reference) for mu in dataset.images]
    center = geometry.mixture([pr.state for pr in projections], dataset.weights)
    per_sample = np.array([ops.relative_entropy(pr.state, center) for pr in projections])
    misfit = ops.relative_entropy(dataset.center, center)
    ref_entropy = ops.relative_entropy(center, dataset.reference)
    return LevelProjections(level, projections, center, per_sample, misfit, ref_entropy)


def asymptotic_log_likelihood(dataset, level, projections=None):
    """Score ``L(G)`` of a level; see the module docstring."""
    pr = projections or project_dataset(dataset, level)
    sizes = dataset.sizes.astype(float)
    value = float(sizes @ (pr.per_sample_entropies - pr.misfit) - 0.5 * level.p * dataset.Lambda)
    return ModelScore(level, level.p, value, pr.per_sample_entropies, pr.misfit, sizes, pr.reference_entropy)


def _mixing(alpha, sizes):
    return alpha / (alpha + sizes)


def full_log_likelihood(dataset, level, alpha, projections=None):
    """Log-likelihood at finite prior strength ``alpha``.

    Adds to ``L(G)`` the terms ``-Σ_i x_i N_i [S(pi_i||pi_bar) + S(pi_bar||sigma)]``
    and ``(p/2) Σ_i ln(x_i N_i)`` with ``x_i = alpha / (alpha + N_i)``.  The
    small non-Gaussianity correction and alpha-independent constants are
    omitted.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    pr = projections or project_dataset(dataset, level)
    score = asymptotic_log_likelihood(dataset, level, pr)
    sizes = dataset.sizes.astype(float)
    x = _mixing(alpha, sizes)
    penalty = float(np.sum(x * sizes * (pr.per_sample_entropies + pr.reference_entropy)))
    occam = 0.5 * level.p * float(np.sum(np.log(x * sizes)))
    return score.asymptotic_log_likelihood - penalty + occam


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    curvature: float
    reliable: bool


def _alpha_condition(alpha, sizes, entropies, p):
    x = _mixing(alpha, sizes)
    return float(np.sum((1 - x) * (x * sizes * entropies - 0.5 * p)))


def _alpha_curvature(alpha, sizes, entropies, p):
    # -alpha^2 d^2L/dalpha^2 at a root of the condition equals alpha * g'(alpha)
    x = _mixing(alpha, sizes)
    dx = x * (1 - x)  # alpha * dx/dalpha
    return float(np.sum(-dx * (x * sizes * entropies - 0.5 * p) + (1 - x) * dx * sizes * entropies))


def estimate_alpha(dataset, level, projections=None):
    """Most likely prior strength by the evidence procedure.

    Solves ``Σ_i (1 - x_i) N_i {x_i [S(pi_i||pi_bar) + S(pi_bar||sigma)] - p/(2 N_i)} = 0``
    by bisection in ``ln alpha`` on ``[-30, 30]``.  The returned curvature
    ``-alpha^2 ∂²L/∂alpha²`` should be large; for ``N_i >> alpha`` it
    approaches ``pR/2`` from below.  Estimates with curvature below
    ``RELIABILITY_FRACTION * pR/2`` are flagged unreliable.

    Raises
    ------
    AlphaUnbounded
        The condition does not change sign on the bracket, e.g. when all
        projections coincide with the reference state.
    """
    pr = projections or project_dataset(dataset, level)
    sizes = dataset.sizes.astype(float)
    entropies = pr.per_sample_entropies + pr.reference_entropy
    p = level.p
    lo, hi = ALPHA_BRACKET
    g_lo = _alpha_condition(np.exp(lo), sizes, entropies, p)
    g_hi = _alpha_condition(np.exp(hi), sizes, entropies, p)
    if not (g_lo < 0 < g_hi):
        raise AlphaUnbounded(
            f"evidence condition has no sign change on ln(alpha) in [{lo}, {hi}] "
            f"(values {g_lo:.3g}, {g_hi:.3g})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _alpha_condition(np.exp(mid), sizes, entropies, p) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    alpha = float(np.exp(0.5 * (lo + hi)))
    curvature = _alpha_curvature(alpha, sizes, entropies, p)
    return AlphaEstimate(alpha, curvature, bool(curvature >= RELIABILITY_FRACTION * 0.5 * p * dataset.R))


def compare_levels(dataset, coarse, fine):
    """Log-likelihood gain of ``fine`` over the nested ``coarse`` level.

    Uses the reference-shifted form

        Σ_i N_i [S(pi^mu_bar_H(mu_i)||pi^mu_bar_G(mu_i)) + S(pi^sigma_H(mu_bar)||pi^sigma_G(mu_bar))] - sΛ/2,

    valid when all images lie in the Gaussian region.  Positive values
    favour the finer level.
    """
    geometry.check_nested(coarse, fine)
    geometry.require_subspace(dataset.level, fine)
    s = fine.p - coarse.p
    if s == 0:
        return 0.0
    center = dataset.center
    total = 0.0
    for mu, n in zip(dataset.images, dataset.sizes):
        h = geometry.project(mu, fine, center).state
        g = geometry.project(mu, coarse, center).state
        total += n * ops.relative_entropy(h, g)
    h_bar = geometry.project(center, fine, dataset.reference).state
    g_bar = geometry.project(center, coarse, dataset.reference).state
    total += dataset.N * ops.relative_entropy(h_bar, g_bar)
    return float(total - 0.5 * s * dataset.Lambda)


def _canonical_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def generalized_spectrum(matrix, metric):
    """Eigenpairs of ``matrix v = λ C v`` in descending order.

    Eigenvectors are C-orthonormal.  Within (near-)degenerate clusters the
    basis is rebuilt from the coordinate axes and ordered
    lexicographically, so the result depends only on the eigenspaces.
    """
    c = metric.matrix
    evals, evecs = linalg.eigh(matrix, c)
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    m = evals.size
    out_vecs = np.empty_like(evecs)
    i = 0
    while i < m:
        j = i + 1
        while j < m and abs(evals[j - 1] - evals[j]) < DEGENERATE_GAP:
            j += 1
        block = evecs[:, i:j]
        if j - i == 1:
            out_vecs[:, i] = _canonical_sign(block[:, 0])
        else:
            proj = block @ block.T @ c  # C-orthogonal projector onto the cluster
            basis = []
            for e in np.eye(m):
                v = proj @ e
                for b in basis:
                    v = v - metric.dot(b, v) * b
                if metric.norm(v) > 1e-8:
                    basis.append(v / metric.norm(v))
                if len(basis) == j - i:
                    break
            basis = sorted((_canonical_sign(b) for b in basis), key=lambda b: tuple(np.round(b, 12)), reverse=True)
            out_vecs[:, i:j] = np.array(basis).T
        i = j
    return evals, out_vecs


def pca_orientation(dataset, p, metric=None, return_spectrum=False):
    """Level spanned by the top-``p`` generalized eigenvectors of ``(Γ, C)``.

    Each eigenvector ``v`` becomes the observable ``Σ_b v^b F_b``.
    """
    if not 0 <= p <= dataset.m:
        raise ValidationError(f"p must lie in [0, {dataset.m}], got {p}")
    metric = metric or correlation_metric(dataset)
    gamma, _ = covariance_matrix(dataset)
    evals, evecs = generalized_spectrum(gamma, metric)
    level = LevelOfDescription.from_coefficients(evecs[:, :p].T, dataset.observables, f"pca-{p}")
    if return_spectrum:
        return level, evals, evecs
    return level


def anchored_orientation(dataset, p, metric=None):
    """Like :func:`pca_orientation` but with spread measured from ``sigma``.

    Uses the second moment ``Γ + d d^T`` with ``d = f̄ - <F>_sigma``, which in
    the Gaussian approximation maximizes the fit term minus the misfit
    term of ``L(G)`` among levels of dimension ``p``.
    """
    metric = metric or correlation_metric(dataset)
    gamma, fbar = covariance_matrix(dataset)
    d = fbar - ops.expectations(dataset.observables, dataset.reference)
    evals, evecs = generalized_spectrum(gamma + np.outer(d, d), metric)
    return LevelOfDescription.from_coefficients(evecs[:, :p].T, dataset.observables, f"anchored-{p}")


def require_spread(dataset):
    gamma, _ = covariance_matrix(dataset)
    if np.trace(gamma) < 1e-14:
        raise DegenerateSpread("sample means show no spread (tr Γ < 1e-14)")
