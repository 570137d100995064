"""Gibbs manifolds and the coarse-graining projection.

A level of description is the span of the unit operator and a few
observables ``G_a``.  Relative to a reference state ``sigma`` it defines a
manifold of generalized Gibbs states

    omega ∝ exp[(ln sigma - <ln sigma>_sigma) - Σ_a λ^a G_a],

and every state ``mu`` has a unique projection on it: the member that
reproduces ``<G_a>_mu``.  That projection also minimizes ``S(·||sigma)``
under the same constraints, and satisfies the Pythagorean identity
``S(mu||omega) = S(mu||pi) + S(pi||omega)`` for every ``omega`` on the
manifold.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .errors import DependentLevel, DimMismatch, InfeasibleMoments, NotNested, NotSubspace, SolverDiverged
from .operators import DensityMatrix

log = logging.getLogger(__name__)

TOL_MOMENT = 1e-10
MAX_NEWTON_ITER = 200
MAX_CONDITION = 1e8
SUBSPACE_TOL = 1e-8
# beyond this exponent spread the smallest eigenvalue falls under EPS_RANK
_MAX_EXPONENT_SPREAD = -2.0 * np.log(ops.EPS_RANK)

GAUSSIAN_PAIR_RADIUS = 0.5
GAUSSIAN_CENTER_RADIUS = 0.25


@dataclass(frozen=True, eq=False)
class LevelOfDescription:
    """Candidate constants of the motion ``G_1 .. G_p``.

    The unit operator is implicit and must not be passed.  ``p`` is the
    dimension of the associated Gibbs manifold.
    """

    observables: tuple
    label: str = ""

    def __post_init__(self):
        obs = tuple(ops.hermitian(g) for g in self.observables)
        object.__setattr__(self, "observables", obs)
        if obs:
            dims = {g.shape[0] for g in obs}
            if len(dims) != 1:
                raise DependentLevel("observables have different dimensions")
            gram = ops.hilbert_schmidt_gram((np.eye(obs[0].shape[0]),) + obs)
            cond = np.linalg.cond(gram)
            if not np.isfinite(cond) or cond > MAX_CONDITION:
                raise DependentLevel(
                    f"level '{self.label}' is linearly dependent together with the unit "
                    f"operator (Gram condition number {cond:.3g})"
                )

    @property
    def p(self):
        return len(self.observables)

    def __len__(self):
        return self.p

    @classmethod
    def from_coefficients(cls, coefficients, basis, label=""):
        """Level spanned by ``Σ_b c_k^b F_b`` for each coefficient row ``c_k``."""
        coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if coefficients.size == 0:
            return cls((), label)
        stack = np.asarray(basis)
        return cls(tuple(np.tensordot(c, stack, axes=1) for c in coefficients), label)


def _span_residual(targets, basis):
    """Relative Hilbert-Schmidt distance of each target from span(basis)."""
    b = np.array([m.ravel() for m in basis]).T
    out = []
    for t in targets:
        coef, *_ = np.linalg.lstsq(b, t.ravel(), rcond=None)
        res = np.linalg.norm(b @ coef - t.ravel())
        out.append(res / max(np.linalg.norm(t), 1e-300))
    return np.array(out)


def contains(outer, inner, tol=SUBSPACE_TOL):
    """True if ``span{1, inner} ⊆ span{1, outer}``."""
    if inner.p == 0:
        return True
    d = inner.observables[0].shape[0]
    basis = (np.eye(d, dtype=complex),) + tuple(outer.observables)
    return bool(np.all(_span_residual(inner.observables, basis) <= tol))


def require_subspace(outer, inner, error=NotSubspace):
    if not contains(outer, inner):
        raise error(f"level '{inner.label}' is not contained in the span of '{outer.label}'")


@dataclass(frozen=True, eq=False)
class GibbsState:
    """A point on the Gibbs manifold of ``level`` relative to ``reference``."""

    reference: DensityMatrix
    level: LevelOfDescription
    lagrange: np.ndarray
    state: DensityMatrix
    log_partition: float
    iterations: int = 0
    residual: float = 0.0


def _base_exponent(reference):
    # ln sigma - <ln sigma>_sigma; the shift only moves ln Z
    if reference.is_maximally_mixed():
        return np.zeros_like(reference.matrix)
    ln_sigma = reference.log()
    return ln_sigma - ops.expectation(ln_sigma, reference) * np.eye(reference.dim)


def _exponent(base, observables, lagrange):
    if len(observables) == 0:
        return base
    return base - np.tensordot(lagrange, np.asarray(observables), axes=1)


def gibbs_state(reference, level, lagrange):
    """Materialize the Gibbs state with the given Lagrange parameters."""
    lagrange = np.asarray(lagrange, dtype=float)
    a = _exponent(_base_exponent(reference), level.observables, lagrange)
    return GibbsState(reference, level, lagrange, ops.gibbs_normalize(a), ops.log_trace_exp(a))


def solve_lagrange(reference, level, targets, tol=TOL_MOMENT, max_iter=MAX_NEWTON_ITER, start=None):
    """Find the Gibbs state on ``level`` whose expectations equal ``targets``.

    Damped Newton iteration on the convex dual ``ln Z(λ) + λ·g``.  The
    Hessian is the centered Kubo-Mori matrix of the observables, which is
    the exact Jacobian of the expectations.  A step is halved until either
    the dual decreases (Armijo) or the residual norm drops.

    Raises
    ------
    InfeasibleMoments
        The targets lie on or outside the boundary of the attainable set.
    SolverDiverged
        No convergence within ``max_iter`` steps.
    """
    obs = level.observables
    targets = np.asarray(targets, dtype=float)
    base = _base_exponent(reference)
    if len(obs) == 0:
        state = ops.gibbs_normalize(base)
        return GibbsState(reference, level, np.zeros(0), state, ops.log_trace_exp(base))

    stack = np.asarray(obs)
    lam = np.zeros(len(obs)) if start is None else np.asarray(start, dtype=float).copy()

    def evaluate(lam):
        a = _exponent(base, obs, lam)
        w, v = ops.spectral_decompose(a)
        if w[-1] - w[0] > _MAX_EXPONENT_SPREAD:
            return None
        p = np.exp(w - w[-1])
        z = p.sum()
        state = DensityMatrix._from_spectrum(p / z, v)
        logz = float(w[-1] + np.log(z))
        r = ops.expectations(stack, state) - targets
        return state, logz, r, logz + lam @ targets

    cur = evaluate(lam)
    if cur is None:
        raise InfeasibleMoments("initial Lagrange parameters give a rank-deficient state")
    history = []
    for it in range(max_iter + 1):
        state, logz, r, dual = cur
        rnorm = float(np.max(np.abs(r)))
        history.append(rnorm)
        if rnorm <= tol:
            return GibbsState(reference, level, lam, state, logz, it, rnorm)
        if it == max_iter:
            break
        k = ops.kubo_mori_matrix(stack, state)
        try:
            step = np.linalg.solve(k, r)
        except np.linalg.LinAlgError:
            raise InfeasibleMoments(
                "Kubo-Mori Jacobian became singular; target moments are unattainable",
                residual=rnorm,
            )
        decrement = float(r @ step)
        t = 1.0
        accepted = None
        for _ in range(60):
            trial_lam = lam + t * step
            trial = evaluate(trial_lam)
            if trial is not None:
                armijo = trial[3] <= dual - 1e-4 * t * decrement
                if armijo or np.linalg.norm(trial[2]) < np.linalg.norm(r):
                    accepted = trial_lam, trial
                    break
            t *= 0.5
        if accepted is None:
            raise InfeasibleMoments(
                f"no admissible Newton step (max residual {rnorm:.3g}); "
                "target moments lie on or outside the attainable boundary",
                residual=rnorm,
            )
        lam, cur = accepted
    if cur[0].eigvals[0] < 1e-9:
        raise InfeasibleMoments(
            f"moment matching drifted to the boundary of state space "
            f"(max residual {history[-1]:.3g})",
            residual=history[-1],
        )
    raise SolverDiverged(
        f"Lagrange solver did not reach tolerance {tol:g} in {max_iter} iterations "
        f"(max residual {history[-1]:.3g})",
        history,
    )


def tomographic_image(means, observables, reference):
    """State on the experimental manifold reproducing the sample ``means``."""
    means = np.asarray(means, dtype=float)
    level = observables if isinstance(observables, LevelOfDescription) else LevelOfDescription(tuple(observables), "F")
    if means.shape != (level.p,):
        raise DimMismatch(f"got {means.shape[0] if means.ndim else 0} means for {level.p} observables")
    return solve_lagrange(reference, level, means).state


def project(mu, level, reference, start=None):
    """Coarse-grain ``mu`` onto the Gibbs manifold of ``level``.

    Returns the :class:`GibbsState` that matches ``<G_a>_mu`` for every
    observable of the level.  With ``p = 0`` this is the reference itself.
    """
    mu = ops.as_state(mu)
    if level.p == 0:
        return solve_lagrange(reference, level, np.zeros(0))
    targets = ops.expectations(level.observables, mu)
    return solve_lagrange(reference, level, targets, start=start)


def interpolate(projection, reference, x):
    """Normalized ``exp[(1 - x) ln pi + x ln sigma]`` for ``0 <= x <= 1``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"interpolation weight must lie in [0, 1], got {x}")
    pi = projection.state if isinstance(projection, GibbsState) else ops.as_state(projection)
    reference = ops.as_state(reference)
    if x == 0.0:
        return pi
    if x == 1.0:
        return reference
    return ops.gibbs_normalize((1.0 - x) * pi.log() + x * reference.log())


@dataclass(frozen=True, eq=False)
class CenterOfMass:
    exponential_mean: DensityMatrix
    mixture_mean: DensityMatrix


def mixture(states, weights):
    weights = np.asarray(weights, dtype=float)
    m = np.tensordot(weights, np.asarray([ops.as_state(s).matrix for s in states]), axes=1)
    return DensityMatrix(m / np.trace(m).real)


def center_of_mass(states, weights):
    """Exponential (log-average) and ordinary mixture centers of ``states``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to one")
    states = [ops.as_state(s) for s in states]
    log_avg = np.tensordot(weights, np.asarray([s.log() for s in states]), axes=1)
    return CenterOfMass(ops.gibbs_normalize(log_avg), mixture(states, weights))


def pythagoras_residual(mu, level, reference, omega):
    """``S(mu||omega) - S(mu||pi) - S(pi||omega)`` with ``pi`` the projection of ``mu``.

    Vanishes up to rounding for every ``omega`` on the manifold; used as a
    self-test of the projection.
    """
    mu = ops.as_state(mu)
    omega_state = omega.state if isinstance(omega, GibbsState) else ops.as_state(omega)
    pi = project(mu, level, reference).state
    return (
        ops.relative_entropy(mu, omega_state)
        - ops.relative_entropy(mu, pi)
        - ops.relative_entropy(pi, omega_state)
    )


@dataclass(frozen=True, eq=False)
class SampleGeometry:
    image: DensityMatrix
    projection: GibbsState
    interpolant: DensityMatrix
    mixing: float
    weight: float


def sample_geometry(images, sizes, level, reference, alpha):
    """Per-sample images, projections and interpolants for prior strength ``alpha``."""
    sizes = np.asarray(sizes, dtype=float)
    weights = sizes / sizes.sum()
    out = []
    for mu, n, w in zip(images, sizes, weights):
        pi = project(mu, level, reference)
        x = alpha / (alpha + n)
        out.append(SampleGeometry(mu, pi, interpolate(pi, reference, x), x, w))
    return out


@dataclass(frozen=True)
class GaussianRegime:
    ok: bool
    max_pair_entropy: float
    max_center_entropy: float


def gaussian_regime(images, center, pair_radius=GAUSSIAN_PAIR_RADIUS, center_radius=GAUSSIAN_CENTER_RADIUS):
    """Check that all images are close enough for quadratic approximations."""
    pair = max(
        (ops.relative_entropy(a, b) for i, a in enumerate(images) for j, b in enumerate(images) if i != j),
        default=0.0,
    )
    cen = max((ops.relative_entropy(a, center) for a in images), default=0.0)
    return GaussianRegime(pair <= pair_radius and cen <= center_radius, pair, cen)


def check_nested(inner, outer):
    require_subspace(outer, inner, error=NotNested)
