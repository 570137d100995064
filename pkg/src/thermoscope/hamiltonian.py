"""Maximum-likelihood estimation of an effective Hamiltonian.

When a single constant of the motion explains the data it is taken to be
the Hamiltonian, parametrized linearly as ``H(xi) = -Σ_b xi^b F_b``.  The
score of the level ``span{1, H(xi)}`` is

    L(xi) = (N/2) [<Γ>_xi - δf(xi)·δf(xi)] - Λ/2,

where ``<Γ>_xi = xi·Γxi / xi·xi`` and ``δf(xi)`` is the displacement of the
projection of ``mu_bar`` onto the canonical family of ``H(xi)``.  Only the
direction of ``xi`` matters; it is normalized to ``xi·xi = 1`` in the
Kubo-Mori metric.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import geometry, operators as ops, selection
from .errors import BisectionFailed, DegenerateSpread, NonConvergence, NonUniformReference, ValidationError
from .geometry import LevelOfDescription

log = logging.getLogger(__name__)

MARGIN_FACTOR = 3.0
GRADIENT_TOL = 1e-10
_INNER_TOL = 1e-13
_N_RANDOM_STARTS = 4


def hamiltonian_operator(xi, observables):
    """``H(xi) = -Σ_b xi^b F_b`` (additive constant fixed to zero)."""
    return -np.tensordot(np.asarray(xi, dtype=float), np.asarray(observables), axes=1)


def hamiltonian_level(xi, observables, label="H(xi)"):
    return LevelOfDescription((hamiltonian_operator(xi, observables),), label)


def fix_gauge(xi, fbar):
    """Choose the representative with ``xi·f̄ >= 0`` (first nonzero entry positive if tied)."""
    xi = np.asarray(xi, dtype=float)
    s = float(xi @ fbar)
    if abs(s) > 1e-14 * max(np.linalg.norm(xi) * np.linalg.norm(fbar), 1e-300):
        return xi if s > 0 else -xi
    return selection._canonical_sign(xi)


class XiProblem:
    """Cached ingredients of the xi-likelihood for one dataset."""

    def __init__(self, dataset, metric=None):
        self.dataset = dataset
        self.metric = metric or selection.correlation_metric(dataset)
        self.gamma, self.fbar = selection.covariance_matrix(dataset)
        self.stack = np.asarray(dataset.observables)
        self.base = geometry._base_exponent(dataset.reference)
        self.anchor = self.fbar - ops.expectations(dataset.observables, dataset.reference)
        self._warm = {}

    @property
    def C(self):
        return self.metric.matrix

    def canonical_state(self, xi, target):
        """Canonical state ``∝ exp(β xi·F)`` with ``<xi·F> = target``; returns (state, β)."""
        level = LevelOfDescription((np.tensordot(xi, self.stack, axes=1),), "xi.F")
        gs = geometry.solve_lagrange(self.dataset.reference, level, [target], tol=_INNER_TOL)
        return gs.state, -float(gs.lagrange[0])

    def center_projection(self, xi):
        """``(pi_bar(xi), beta_bar, δf)`` for the projection of ``mu_bar``."""
        state, beta = self.canonical_state(xi, float(xi @ self.fbar))
        delta_f = ops.expectations(self.stack, state) - self.fbar
        return state, beta, delta_f

    def value(self, xi):
        """Bracket ``<Γ>_xi - δf·δf`` (scale invariant in xi)."""
        xi = np.asarray(xi, dtype=float)
        _, _, df = self.center_projection(xi)
        return float(xi @ self.gamma @ xi / (xi @ self.C @ xi) - df @ self.metric.inverse @ df)

    def value_and_gradient(self, xi):
        xi = np.asarray(xi, dtype=float)
        c = self.C
        q = float(xi @ c @ xi)
        rayleigh = float(xi @ self.gamma @ xi) / q
        state, beta, df = self.center_projection(xi)
        cinv_df = self.metric.inverse @ df
        value = rayleigh - float(df @ cinv_df)
        grad_rayleigh = 2.0 * (self.gamma @ xi - rayleigh * c @ xi) / q
        # δf depends on xi directly and through β fixed by <xi·F> = xi·f̄
        k = ops.kubo_mori_matrix(self.stack, state)
        kxi = k @ xi
        denom = float(xi @ kxi)
        jac = beta * k - np.outer(kxi, df + beta * kxi) / denom
        grad = grad_rayleigh - 2.0 * jac.T @ cinv_df
        return value, grad, beta, df

    def log_likelihood(self, xi):
        ds = self.dataset
        return 0.5 * ds.N * self.value(xi) - 0.5 * ds.Lambda

    def rayleigh(self, xi):
        return float(xi @ self.gamma @ xi / (xi @ self.C @ xi))

    def mle_residual(self, xi, beta_bar, delta_f):
        """Residual of ``(δ_xi Γ) xi = β̄ (xi·xi) δf(xi)`` (covariant)."""
        xi = np.asarray(xi, dtype=float)
        lhs = self.gamma @ xi - self.rayleigh(xi) * self.C @ xi
        return lhs - beta_bar * float(xi @ self.C @ xi) * delta_f


def _tangent_basis(metric, xi):
    m = xi.size
    basis = []
    for e in np.eye(m):
        v = e - metric.dot(xi, e) * xi
        for b in basis:
            v = v - metric.dot(b, v) * b
        n = metric.norm(v)
        if n > 1e-8:
            basis.append(v / n)
        if len(basis) == m - 1:
            break
    return np.array(basis).T


def _ascend(problem, xi, max_iter=500, tol=GRADIENT_TOL):
    """Natural-gradient ascent on the unit sphere with adaptive step."""
    metric = problem.metric
    xi = metric.normalize(xi)
    value, grad, _, _ = problem.value_and_gradient(xi)
    step = 1.0 / max(np.trace(metric.inverse @ problem.gamma), 1e-12)
    for it in range(max_iter):
        direction = metric.raise_index(grad)
        gnorm = np.sqrt(max(float(grad @ direction), 0.0))
        if gnorm <= tol:
            break
        t = step
        for _ in range(60):
            cand = metric.normalize(xi + t * direction)
            cv, cg, _, _ = problem.value_and_gradient(cand)
            if cv >= value + 1e-4 * t * gnorm ** 2:
                break
            t *= 0.5
        else:
            break
        xi, value, grad = cand, cv, cg
        step = 2.0 * t
        if gnorm < 1e-6:
            break
    return xi, value


def _newton_polish(problem, xi, tol=GRADIENT_TOL, max_iter=20, h=1e-6):
    metric = problem.metric
    xi = metric.normalize(xi)
    value, grad, _, _ = problem.value_and_gradient(xi)

    def tangent_grad(point, basis):
        _, g, _, _ = problem.value_and_gradient(point)
        return basis.T @ g

    for _ in range(max_iter):
        basis = _tangent_basis(metric, xi)
        g_t = basis.T @ grad
        if np.linalg.norm(g_t) <= tol:
            break
        k = basis.shape[1]
        hess = np.empty((k, k))
        for j in range(k):
            plus = metric.normalize(xi + h * basis[:, j])
            minus = metric.normalize(xi - h * basis[:, j])
            hess[:, j] = (tangent_grad(plus, basis) - tangent_grad(minus, basis)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            u = -np.linalg.solve(hess, g_t)
        except np.linalg.LinAlgError:
            break
        cand = metric.normalize(xi + basis @ u)
        cv, cg, _, _ = problem.value_and_gradient(cand)
        if np.linalg.norm(_tangent_basis(metric, cand).T @ cg) >= np.linalg.norm(g_t) and cv < value:
            break
        xi, value, grad = cand, cv, cg
    basis = _tangent_basis(metric, xi)
    return xi, value, float(np.linalg.norm(basis.T @ grad))


def _starts(problem, seed):
    metric = problem.metric
    m = problem.fbar.size
    _, evecs = selection.generalized_spectrum(problem.gamma, metric)
    starts = [evecs[:, k] for k in range(min(3, m))]
    if np.linalg.norm(problem.anchor) > 1e-12:
        starts.append(metric.raise_index(problem.anchor))
    rng = np.random.default_rng(seed)
    starts += [rng.standard_normal(m) for _ in range(_N_RANDOM_STARTS)]
    return [metric.normalize(s) for s in starts]


@dataclass(frozen=True)
class ThermalCheck:
    """Thermalization test for a one-dimensional level ``span{1, H(xi)}``.

    ``lhs = spread_excess + tilt`` where ``spread_excess = tr Γ - Γ_top``
    is the spread no single direction can explain and ``tilt = Γ_top -
    <Γ>_xi + δf·δf`` is the cost of the chosen axis.  The test passes when
    each part is at most ``rhs / margin_factor``.
    """

    passed: bool
    lhs: float
    rhs: float
    margin: float
    spread_excess: float
    tilt: float
    spread_margin: float
    tilt_margin: float
    margin_factor: float


def _ratio(num, den):
    return float(num / den) if den > 0 else float("inf")


def thermalization_condition(dataset, xi, problem=None, margin_factor=MARGIN_FACTOR):
    """Compare the misfit of ``H(xi)`` against the budget ``(Λ/N)(m - 1)``."""
    problem = problem or XiProblem(dataset)
    metric = problem.metric
    xi = np.asarray(xi, dtype=float)
    gen = np.linalg.eigvals(metric.inverse @ problem.gamma).real
    trace = float(np.sum(gen))
    top = float(np.max(gen))
    _, _, df = problem.center_projection(xi)
    misfit = metric.dot_lower(df, df)
    spread_excess = max(trace - top, 0.0)
    tilt = max(top - problem.rayleigh(xi) + misfit, 0.0)
    lhs = spread_excess + tilt
    rhs = dataset.Lambda / dataset.N * (dataset.m - 1)
    sm, tm = _ratio(rhs, spread_excess), _ratio(rhs, tilt)
    return ThermalCheck(
        bool(sm >= margin_factor and tm >= margin_factor),
        lhs, rhs, _ratio(rhs, lhs), spread_excess, tilt, sm, tm, margin_factor,
    )


@dataclass(frozen=True)
class BetaEstimate:
    beta_bar: float
    per_sample: np.ndarray
    energies: np.ndarray
    mean_energy: float
    notes: tuple = ()


def _canonical_energy(hmat, base, beta):
    state = ops.gibbs_normalize(base - beta * hmat)
    return ops.expectation(hmat, state), state


def solve_inverse_temperature(hmat, base, energy, tol=1e-12, max_expand=40):
    """Inverse temperature of ``∝ exp(base - β H)`` with ``<H> = energy``.

    Bracketing by doubling, then Newton steps safeguarded by bisection
    (``<H>`` decreases monotonically in β).
    """
    u = lambda b: _canonical_energy(hmat, base, b)[0]
    lo, hi = -1.0, 1.0
    for _ in range(max_expand):
        if u(lo) >= energy >= u(hi):
            break
        if u(lo) < energy:
            lo *= 2.0
        if u(hi) > energy:
            hi *= 2.0
    else:
        raise BisectionFailed(f"could not bracket energy {energy:.6g}; it lies outside the spectrum range")
    beta = 0.5 * (lo + hi)
    for _ in range(200):
        val, state = _canonical_energy(hmat, base, beta)
        diff = val - energy
        if abs(diff) <= tol:
            return beta
        if diff > 0:
            lo = beta
        else:
            hi = beta
        slope = -ops.kubo_mori(hmat - val * np.eye(hmat.shape[0]), hmat, state)
        trial = beta - diff / slope if slope < 0 else None
        beta = trial if trial is not None and lo < trial < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(beta)):
            return beta
    raise BisectionFailed(f"inverse temperature for energy {energy:.6g} did not converge")


def closed_form_beta_bar(dataset, xi, metric):
    """``β̄ = sqrt(<δ ln mu_bar; δ ln mu_bar> / xi·xi)`` for a uniform reference."""
    if not dataset.reference.is_maximally_mixed():
        raise NonUniformReference("closed-form β̄ requires a maximally mixed reference state")
    center = dataset.center
    ln_mu = center.log()
    ln_mu = ln_mu - ops.expectation(ln_mu, center) * np.eye(dataset.dim)
    value = ops.kubo_mori(ln_mu, ln_mu, center)
    return float(np.sqrt(max(value, 0.0) / metric.dot(xi, xi)))


def estimate_beta(dataset, xi, metric=None):
    """Mean and per-sample inverse temperatures along ``H(xi)``."""
    metric = metric or selection.correlation_metric(dataset)
    xi = np.asarray(xi, dtype=float)
    hmat = hamiltonian_operator(xi, dataset.observables)
    base = geometry._base_exponent(dataset.reference)
    energies = -dataset.means @ xi
    betas = np.array([solve_inverse_temperature(hmat, base, u) for u in energies])
    notes = ()
    try:
        beta_bar = closed_form_beta_bar(dataset, xi, metric)
    except NonUniformReference as exc:
        beta_bar = None
        notes = (str(exc),)
    return BetaEstimate(beta_bar, betas, energies, float(dataset.weights @ energies), notes)


@dataclass(frozen=True, eq=False)
class HamiltonianEstimate:
    xi: np.ndarray
    beta_bar: float
    per_sample_beta: np.ndarray
    internal_energies: np.ndarray
    mean_energy: float
    max_log_likelihood: float
    thermal: ThermalCheck
    method: str
    gradient_norm: float = 0.0
    mle_residual: float = 0.0
    projection_beta: float = None
    effective: bool = False
    notes: tuple = ()

    @property
    def thermal_verdict(self):
        return self.thermal.passed


def estimate_xi_general(dataset, metric=None, seed=0, tol=GRADIENT_TOL):
    """Maximize the xi-likelihood over the unit sphere; returns ``(xi, problem, grad_norm)``.

    Multistart natural-gradient ascent (top Γ eigenvectors, the center of
    mass direction and a few seeded random directions) followed by a
    Newton polish of the best candidate.

    Raises
    ------
    DegenerateSpread
        The sample means show no spread at all.
    NonConvergence
        The stationarity residual stays above ``1e-7``.
    """
    if dataset.m < 2:
        raise ValidationError("Hamiltonian estimation needs at least two observables")
    problem = XiProblem(dataset, metric)
    if np.trace(problem.gamma) < 1e-14:
        raise DegenerateSpread("tr Γ < 1e-14: no spread to orient a Hamiltonian")
    best = None
    for s in _starts(problem, seed):
        xi, value = _ascend(problem, s)
        if best is None or value > best[1] + 1e-14:
            best = (xi, value)
    xi, value, gnorm = _newton_polish(problem, best[0], tol=tol)
    if gnorm > tol:
        if gnorm > 1e-7:
            raise NonConvergence(
                f"xi optimizer stopped with gradient norm {gnorm:.3g}", best=xi, residual=gnorm
            )
        log.info("xi optimizer reached gradient norm %.3g (target %.1g)", gnorm, tol)
    xi = fix_gauge(problem.metric.normalize(xi), problem.anchor)
    return xi, problem, gnorm


def estimate_hamiltonian(dataset, method="exact", margin_factor=MARGIN_FACTOR, metric=None, seed=0):
    """Full estimate: direction ``xi``, temperatures and thermalization test.

    ``method`` selects how ``xi`` is found: ``"exact"`` (general optimizer),
    ``"fixed-point"`` or ``"perturbative"`` (qubit closed forms, which need
    three observables on a two-level system).
    """
    if dataset.R < 2:
        raise ValidationError("covariance-based estimation needs at least two samples", "samples")
    problem = XiProblem(dataset, metric)
    gnorm = 0.0
    notes = []
    if method == "exact":
        xi, problem, gnorm = estimate_xi_general(dataset, problem.metric, seed=seed)
    elif method in ("fixed-point", "perturbative"):
        geo = qubit_geometry(dataset, problem.metric)
        if method == "fixed-point":
            xi = qubit_mle_fixed_point(geo, problem.gamma, problem.fbar)
        else:
            xi = qubit_xi_perturbative(geo)
        xi = fix_gauge(problem.metric.normalize(xi), problem.anchor)
    else:
        raise ValidationError(f"unknown method '{method}'", "method")
    _, beta_proj, df = problem.center_projection(xi)
    residual = float(np.linalg.norm(problem.mle_residual(xi, beta_proj, df)))
    beta = estimate_beta(dataset, xi, problem.metric)
    notes.extend(beta.notes)
    effective = not dataset.informationally_complete
    if effective:
        notes.append("observables are informationally incomplete: H is an effective Hamiltonian")
    return HamiltonianEstimate(
        xi=xi,
        beta_bar=beta.beta_bar,
        per_sample_beta=beta.per_sample,
        internal_energies=beta.energies,
        mean_energy=beta.mean_energy,
        max_log_likelihood=problem.log_likelihood(xi),
        thermal=thermalization_condition(dataset, xi, problem, margin_factor),
        method=method,
        gradient_norm=gnorm,
        mle_residual=residual,
        projection_beta=beta_proj,
        effective=effective,
        notes=tuple(notes),
    )


# --- qubit specialization -------------------------------------------------


@dataclass(frozen=True, eq=False)
class QubitGeometry:
    """Anisotropic-covariance description of qubit data.

    Vectors are contravariant and unit length in ``metric``.  ``Γ`` is
    modelled as one dominant eigenvalue ``gamma_plus`` along ``gamma_dir``
    and an isotropic ``gamma_minus`` in the complement.
    """

    gamma_plus: float
    gamma_minus: float
    gamma_dir: np.ndarray
    f_bar: np.ndarray
    f_hat: np.ndarray
    eta: np.ndarray
    theta: float
    metric: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def f_norm2(self):
        return float(self.f_bar @ self.metric @ self.f_bar)

    @property
    def sin_theta(self):
        return float(self.eta @ self.metric @ self.f_hat)

    def gamma_matrix(self):
        """Covariant ``Γ_ab`` of the anisotropic model."""
        cg = self.metric @ self.gamma_dir
        return self.gamma_minus * self.metric + (self.gamma_plus - self.gamma_minus) * np.outer(cg, cg)

    def f_lower(self):
        return self.metric @ self.f_bar

    @classmethod
    def from_parameters(cls, gamma_plus, gamma_minus, f_norm2, theta, metric=None):
        """Geometry in a frame where ``gamma_dir`` is the third axis and ``f̂`` lies in the 1-3 plane."""
        c = np.eye(3) if metric is None else np.asarray(metric, dtype=float)
        chol = np.linalg.cholesky(c)
        # C-orthonormal frame from the coordinate axes
        frame = np.linalg.inv(chol.T)
        e1, e3 = frame[:, 0], frame[:, 2]
        f_hat = np.sin(theta) * e1 + np.cos(theta) * e3
        return cls(
            float(gamma_plus), float(gamma_minus), e3, np.sqrt(f_norm2) * f_hat, f_hat, e1, float(theta), c
        )


def _cdot(c, x, y):
    return float(x @ c @ y)


def qubit_geometry(dataset, metric=None):
    """Fit the anisotropic model to a qubit dataset with three observables."""
    if dataset.dim != 2 or dataset.m != 3:
        raise ValidationError("qubit geometry needs a two-level system with three observables")
    metric = metric or selection.correlation_metric(dataset)
    gamma, fbar = selection.covariance_matrix(dataset)
    anchor = fbar - ops.expectations(dataset.observables, dataset.reference)
    evals, evecs = selection.generalized_spectrum(gamma, metric)
    c = metric.matrix
    g = evecs[:, 0]
    f_up = metric.raise_index(anchor)
    if _cdot(c, g, f_up) < 0:
        g = -g
    fn = np.sqrt(max(_cdot(c, f_up, f_up), 0.0))
    if fn == 0:
        f_hat = g.copy()
        eta = evecs[:, 1]
    else:
        f_hat = f_up / fn
        perp = f_hat - _cdot(c, g, f_hat) * g
        pn = np.sqrt(max(_cdot(c, perp, perp), 0.0))
        eta = perp / pn if pn > 1e-14 else evecs[:, 1]
    theta = float(np.arctan2(_cdot(c, eta, f_hat), _cdot(c, g, f_hat)))
    return QubitGeometry(
        float(evals[0]), float(max(np.mean(evals[1:]), 0.0)), g, f_up, f_hat, eta, theta, c
    )


def qubit_mle_residual(xi, metric, gamma, fbar):
    """Residual of ``(δ_xi Γ) xi = (xi·f̄)²/(xi·xi) xi - (xi·f̄) f̄`` (covariant)."""
    xi = np.asarray(xi, dtype=float)
    cxi = metric @ xi
    q = float(xi @ cxi)
    s = float(xi @ fbar)
    lhs = gamma @ xi - float(xi @ gamma @ xi) / q * cxi
    rhs = s * s / q * cxi - s * fbar
    return lhs - rhs


def qubit_mle_fixed_point(geometry, gamma, fbar, start=None, tol=1e-10, max_iter=100000):
    """Solve the qubit likelihood condition by fixed-point iteration.

    Rearranging the condition gives ``xi ∝ C⁻¹(Γ xi + (xi·f̄) f̄)``; the map
    is iterated on the unit sphere until the residual drops below ``tol``.
    ``gamma`` and ``fbar`` are covariant (as measured).
    """
    c = geometry.metric
    cinv = np.linalg.inv(c)
    gamma = np.asarray(gamma, dtype=float)
    fbar = np.asarray(fbar, dtype=float)
    xi = geometry.gamma_dir if start is None else np.asarray(start, dtype=float)
    xi = xi / np.sqrt(_cdot(c, xi, xi))
    trace = []
    for it in range(max_iter):
        res = qubit_mle_residual(xi, c, gamma, fbar)
        rnorm = np.sqrt(max(float(res @ cinv @ res), 0.0))
        if it % 1000 == 0:
            trace.append(rnorm)
        if rnorm <= tol:
            return fix_gauge(xi, fbar)
        new = cinv @ (gamma @ xi + float(xi @ fbar) * fbar)
        nn = np.sqrt(_cdot(c, new, new))
        if nn == 0:
            break
        xi = new / nn
    raise NonConvergence(f"qubit fixed point did not converge (residual trace {trace})", best=xi, residual=rnorm)


def qubit_xi_perturbative(geometry):
    """First-order solution in the misalignment between ``gamma_dir`` and ``f̂``."""
    sin_t = geometry.sin_theta
    if abs(sin_t) > 0.3:
        warnings.warn(f"perturbative xi used at large misalignment sin(theta) = {sin_t:.3f}", stacklevel=2)
    spread = geometry.gamma_plus - geometry.gamma_minus
    ff = geometry.f_norm2
    along_eta = sin_t / (1.0 + spread / ff) if ff > 0 else 0.0
    along_gamma = np.sqrt(max(1.0 - along_eta ** 2, 0.0))
    xi = along_gamma * geometry.gamma_dir + along_eta * geometry.eta
    return xi / np.sqrt(_cdot(geometry.metric, xi, xi))


def _tilt_stiffness(geometry):
    # [1/(f̄·f̄) + 1/(Γ+ - Γ-)]^-1, zero when either term diverges
    spread = geometry.gamma_plus - geometry.gamma_minus
    ff = geometry.f_norm2
    if spread <= 0 or ff <= 0:
        return 0.0
    return spread * ff / (spread + ff)


def qubit_max_likelihood(geometry, N, Lambda):
    """Maximized xi-likelihood to lowest order in the misalignment."""
    return 0.5 * N * (geometry.gamma_plus - _tilt_stiffness(geometry) * geometry.sin_theta ** 2) - 0.5 * Lambda


@dataclass(frozen=True)
class QubitThermalCheck:
    passed: bool
    margins: tuple
    margin_factor: float


def qubit_thermal_conditions(geometry, N, Lambda, margin_factor=MARGIN_FACTOR):
    """Both qubit thermalization inequalities with their margins.

    ``Γ- << Λ/N`` and ``θ²/2 << (Λ/N) [1/(f̄·f̄) + 1/(Γ+ - Γ-)]``; each margin
    is right-hand side over left-hand side.
    """
    scale = Lambda / N
    first = _ratio(scale, geometry.gamma_minus)
    spread = geometry.gamma_plus - geometry.gamma_minus
    ff = geometry.f_norm2
    bracket = (1.0 / ff if ff > 0 else np.inf) + (1.0 / spread if spread > 0 else np.inf)
    second = _ratio(scale * bracket, 0.5 * geometry.theta ** 2)
    return QubitThermalCheck(bool(first >= margin_factor and second >= margin_factor), (first, second), margin_factor)
