import warnings

import numpy as np
import pytest
from scipy import linalg

from thermoscope import Dataset, hamiltonian as ham, operators as ops, selection as sel
from thermoscope.errors import NonUniformReference, ValidationError
from thermoscope.hamiltonian import QubitGeometry
from thermoscope.simulate import worked_qubit_states, preset_config, simulate_dataset

from conftest import quadrature_km, qubit_dataset, random_hermitian, random_state

SCALE = np.log(20000) / 20000
N, LAM = 10 * 20000, 10 * np.log(20000)


def angle(u, v, c=np.eye(3)):
    cosang = abs(u @ c @ v) / np.sqrt((u @ c @ u) * (v @ c @ v))
    return np.degrees(np.arccos(min(cosang, 1.0)))


def worked_geometry(**kw):
    args = dict(gamma_plus=0.01, gamma_minus=1e-4, f_norm2=0.01, theta=np.pi / 16)
    args.update(kw)
    return QubitGeometry.from_parameters(**args)


def test_qubit_thermal_worked_example():
    chk = ham.qubit_thermal_conditions(worked_geometry(), N, LAM)
    first, second = chk.margins
    assert np.isclose(first, SCALE / 1e-4)
    assert np.isclose(first, 4.952, atol=1e-3)
    assert np.isclose(second, SCALE * (100 + 1 / 0.0099) / ((np.pi / 16) ** 2 / 2))
    assert np.isclose(second, 5.164, atol=1e-3)
    assert chk.passed
    assert not ham.qubit_thermal_conditions(worked_geometry(), N, LAM, margin_factor=5).passed


def test_qubit_thermal_failures_and_ideal():
    assert np.isclose(ham.qubit_thermal_conditions(worked_geometry(gamma_minus=0.01), N, LAM).margins[0],
                      SCALE / 0.01)
    tilted = ham.qubit_thermal_conditions(worked_geometry(theta=np.pi / 4), N, LAM)
    assert not tilted.passed
    assert (np.pi / 4) ** 2 / 2 > SCALE * (100 + 1 / 0.0099)
    ideal = ham.qubit_thermal_conditions(worked_geometry(theta=0.0, gamma_minus=0.0), N, LAM)
    assert ideal.passed and ideal.margins == (np.inf, np.inf)


def test_perturbative_worked_example():
    geo = worked_geometry()
    xi = ham.qubit_xi_perturbative(geo)
    assert np.isclose(xi @ geo.eta, np.sin(np.pi / 16) / 1.99, atol=1e-12)
    assert np.isclose(xi @ geo.eta, 0.09804, atol=1e-5)
    assert abs(angle(xi, geo.gamma_dir) - 5.626) < 0.01
    assert abs(angle(xi, geo.gamma_dir) - np.degrees(np.pi / 32)) < 0.05


def test_perturbative_limits():
    iso = worked_geometry(gamma_plus=1e-4)
    assert angle(ham.qubit_xi_perturbative(iso), iso.f_hat) < 1e-8
    stiff = worked_geometry(gamma_plus=100.0)
    assert angle(ham.qubit_xi_perturbative(stiff), stiff.gamma_dir) < 0.01
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ham.qubit_xi_perturbative(worked_geometry(theta=0.5))
    assert caught


def linear_bracket(xi, gamma, fbar):
    """<Γ>_xi - δf·δf with the linear qubit relation and C = 1."""
    xi = xi / np.linalg.norm(xi)
    df = (xi @ fbar) * xi - fbar
    return xi @ gamma @ xi - df @ df


def test_qubit_max_likelihood():
    geo = worked_geometry(theta=0.0)
    assert np.isclose(ham.qubit_max_likelihood(geo, N, LAM), 0.5 * N * 0.01 - 0.5 * LAM)
    iso = worked_geometry(gamma_plus=1e-4)
    assert np.isclose(ham.qubit_max_likelihood(iso, N, LAM), 0.5 * N * 1e-4 - 0.5 * LAM)
    geo = worked_geometry()
    xi = ham.qubit_xi_perturbative(geo)
    direct = 0.5 * N * linear_bracket(xi, geo.gamma_matrix(), geo.f_bar) - 0.5 * LAM
    theta = np.pi / 16
    assert abs(ham.qubit_max_likelihood(geo, N, LAM) - direct) <= theta**4 * N * 0.01


def rayleigh_oracle(gamma, fbar, c=np.eye(3)):
    """Top generalized eigenvector of (Γ + f̄f̄ᵀ, C)."""
    _, v = linalg.eigh(gamma + np.outer(fbar, fbar), c)
    return v[:, -1]


def test_fixed_point_examples():
    geo = worked_geometry(theta=0.0)
    xi = ham.qubit_mle_fixed_point(geo, geo.gamma_matrix(), geo.f_bar)
    assert angle(xi, geo.gamma_dir) < 1e-6
    zero = worked_geometry(f_norm2=0.0)
    xi = ham.qubit_mle_fixed_point(zero, zero.gamma_matrix(), np.zeros(3))
    assert angle(xi, zero.gamma_dir) < 1e-6
    geo = worked_geometry()
    xi = ham.qubit_mle_fixed_point(geo, geo.gamma_matrix(), geo.f_bar)
    assert angle(xi, rayleigh_oracle(geo.gamma_matrix(), geo.f_bar)) < 1e-6
    res = ham.qubit_mle_residual(xi, geo.metric, geo.gamma_matrix(), geo.f_bar)
    assert np.linalg.norm(res) <= 1e-10


def test_fixed_point_scale_invariance():
    geo = worked_geometry(theta=0.3)
    start = np.array([0.3, 0.2, 1.0])
    a = ham.qubit_mle_fixed_point(geo, geo.gamma_matrix(), geo.f_bar, start=start)
    for c in (1e-3, 7.0, 1e4):
        b = ham.qubit_mle_fixed_point(geo, geo.gamma_matrix(), geo.f_bar, start=c * start)
        assert angle(a, b) <= 1e-8


@pytest.mark.filterwarnings("ignore:perturbative xi")
def test_perturbative_error_bound():
    rng = np.random.default_rng(3)
    for _ in range(200):
        gp, gm, ff = np.sort(10 ** rng.uniform(-4, -1, 2))[::-1].tolist() + [10 ** rng.uniform(-4, -1)]
        theta = rng.uniform(0, np.pi / 8)
        geo = QubitGeometry.from_parameters(gp, gm, ff, theta)
        exact = ham.qubit_mle_fixed_point(geo, geo.gamma_matrix(), geo.f_bar)
        pert = ham.qubit_xi_perturbative(geo)
        assert abs(pert @ geo.eta - exact @ geo.eta) <= np.sin(theta) ** 2


def aligned_dataset():
    """Means spread along the center-of-mass axis, symmetric transverse jitter."""
    axis = np.array([1.0, 2.0, 2.0]) / 3
    perp1 = np.array([2.0, -2.0, 1.0]) / 3
    perp2 = np.cross(axis, perp1)
    t = np.linspace(-1, 1, 8)
    jitter = np.array([1, -1, 1, -1, -1, 1, -1, 1]) * 0.005
    bloch = 0.1 * axis + np.outer(0.08 * t, axis) + np.outer(jitter, perp1) + np.outer(jitter[::-1], perp2)
    return qubit_dataset(bloch, 20000)


def test_general_estimator_aligned():
    ds = aligned_dataset()
    metric = sel.correlation_metric(ds)
    xi, _, gnorm = ham.estimate_xi_general(ds, metric)
    f_up = metric.raise_index(ds.mean_vector)
    assert angle(xi, f_up, metric.matrix) < 1e-6
    assert np.isclose(metric.dot(xi, xi), 1.0, atol=1e-10)


def test_general_estimator_stays_in_plane():
    ds = qubit_dataset(worked_qubit_states(), 20000)
    est = ham.estimate_hamiltonian(ds)
    # the y-axis is a symmetry axis of both Γ and C
    assert abs(est.xi[1]) <= 1e-6
    fp = ham.estimate_hamiltonian(ds, "fixed-point")
    assert abs(fp.xi[1]) <= 1e-6


def test_general_estimator_stationary():
    ds = simulate_dataset(preset_config("worked-qubit", seed=7))
    xi, problem, _ = ham.estimate_xi_general(ds)
    metric = problem.metric
    h = 1e-5
    for e in np.eye(3):
        t = e - metric.dot(xi, e) * xi
        t = t / metric.norm(t)
        up = problem.log_likelihood(metric.normalize(xi + h * t))
        dn = problem.log_likelihood(metric.normalize(xi - h * t))
        assert abs(up - dn) / (2 * h) <= 1e-6 * ds.N


def test_general_vs_fixed_point_and_perturbative():
    ds = simulate_dataset(preset_config("worked-qubit", seed=7))
    exact = ham.estimate_hamiltonian(ds, "exact")
    fixed = ham.estimate_hamiltonian(ds, "fixed-point")
    pert = ham.estimate_hamiltonian(ds, "perturbative")
    c = sel.correlation_metric(ds).matrix
    assert angle(exact.xi, fixed.xi, c) < 0.1
    assert angle(exact.xi, pert.xi, c) < 0.7


def test_beta_moment_consistency_and_mean():
    ds = simulate_dataset(preset_config("z-family", seed=1))
    est = ham.estimate_hamiltonian(ds)
    hmat = ham.hamiltonian_operator(est.xi, ds.observables)
    for b, u in zip(est.per_sample_beta, est.internal_energies):
        state = ops.gibbs_normalize(-b * hmat)
        assert abs(ops.expectation(hmat, state) - u) <= 1e-9
    assert abs(ds.weights @ est.per_sample_beta - est.beta_bar) / est.beta_bar <= 0.2
    assert np.isclose(sel.correlation_metric(ds).dot(est.xi, est.xi), 1.0, atol=1e-10)


def test_beta_bar_closed_form_qubit():
    b = 0.2
    ds = qubit_dataset([[0, 0, b - 0.01], [0, 0, b + 0.01]], 1000)
    metric = sel.correlation_metric(ds)
    xi = metric.normalize(np.array([0, 0, 1.0]))
    mu = ds.center.matrix
    bz = ops.bloch_vector(ds.center)[2]
    lnmu = linalg.logm(mu)
    lnmu = lnmu - np.trace(mu @ lnmu).real * np.eye(2)
    oracle = np.sqrt(quadrature_km(lnmu, lnmu, mu) / metric.dot(xi, xi))
    beta = ham.estimate_beta(ds, xi, metric).beta_bar
    assert np.isclose(beta, oracle, atol=1e-6)
    # xi = z / sqrt(1 - b^2) has unit C-norm
    assert np.isclose(beta, np.arctanh(bz) * np.sqrt(1 - bz**2), atol=1e-6)


def test_beta_at_maximally_mixed_center():
    ds = qubit_dataset([[0, 0, 1e-4], [0, 0, -1e-4]], 1000)
    est = ham.estimate_beta(ds, np.array([0, 0, 1.0]))
    assert abs(est.beta_bar) < 1e-12
    assert np.all(np.abs(est.per_sample) < 1e-3)


def test_thermal_condition_perfect_line():
    betas = np.linspace(0.1, 0.3, 6)
    bloch = np.outer(np.tanh(betas), [0, 0, 1.0])
    ds = qubit_dataset(bloch, 20000)
    est = ham.estimate_hamiltonian(ds)
    assert est.thermal.lhs < 1e-12
    assert est.thermal.passed
    assert np.allclose(est.per_sample_beta / est.per_sample_beta[0], betas / betas[0], rtol=1e-8)


def test_guards_and_notes(rng):
    with pytest.raises(ValidationError):
        ham.estimate_hamiltonian(qubit_dataset([[0.1, 0, 0]], 100))
    with pytest.raises(ValidationError):
        ham.estimate_hamiltonian(z_family_small(), method="nope")
    obs = tuple(random_hermitian(rng, 3) for _ in range(3))
    states = [random_state(rng, 3, 0.2) for _ in range(6)]
    ds = Dataset(obs, [5000] * 6, [ops.expectations(obs, s) for s in states])
    est = ham.estimate_hamiltonian(ds)
    assert est.effective
    ref = ops.qubit_state([0.1, 0.0, 0.0])
    ds = qubit_dataset([[0.1, 0, 0.1], [0.1, 0, 0.2], [0.12, 0, 0.15]], 5000, reference=ref)
    est = ham.estimate_hamiltonian(ds)
    assert est.beta_bar is None
    assert any("maximally mixed" in n for n in est.notes)
    with pytest.raises(NonUniformReference):
        ham.closed_form_beta_bar(ds, est.xi, sel.correlation_metric(ds))


def z_family_small():
    return simulate_dataset(preset_config("z-family", seed=0, R=4))


def test_gauge_fixing():
    xi = ham.fix_gauge(np.array([0, 0, -1.0]), np.array([0, 0, 0.2]))
    assert xi[2] > 0
    assert np.all(ham.fix_gauge(np.array([-1.0, 2.0, 0]), np.zeros(3)) == [1.0, -2.0, 0])
