"""Synthetic tomography data and Monte Carlo recovery studies.

Random numbers come from NumPy's ``PCG64`` generator.  A study seeds one
``SeedSequence`` and spawns an independent child stream per trial, so a
trial's dataset depends only on the master seed and the trial index.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, operators as ops
from .dataset import Dataset
from .errors import ThermoscopeError, ValidationError

log = logging.getLogger(__name__)

RNG_NAME = "PCG64"
NOISE_MODELS = ("multinomial", "gaussian")


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Generative model for a synthetic dataset.

    The true final states are either the canonical family
    ``rho_i ∝ exp(beta_i xi·F)`` (give ``xi`` and ``betas``) or an explicit
    list ``states``.
    """

    observables: tuple
    sizes: tuple
    xi: np.ndarray = None
    betas: np.ndarray = None
    states: tuple = None
    noise_model: str = "gaussian"
    seed: int = 0
    names: tuple = ()
    true_dimension: int = None
    label: str = ""

    def __post_init__(self):
        if self.noise_model not in NOISE_MODELS:
            raise ValidationError(f"noise model must be one of {NOISE_MODELS}", "noise")
        if (self.states is None) == (self.xi is None):
            raise ValidationError("give either explicit states or a canonical family (xi, betas)")
        if self.xi is not None:
            betas = np.asarray(self.betas, dtype=float)
            if betas.shape != (len(self.sizes),) or not np.all(np.isfinite(betas)):
                raise ValidationError("need one finite inverse temperature per sample", "betas")
        elif len(self.states) != len(self.sizes):
            raise ValidationError("need one state per sample", "states")
        if any(int(n) < 1 for n in self.sizes):
            raise ValidationError("sample sizes must be positive", "sizes")

    @property
    def dim(self):
        return np.asarray(self.observables[0]).shape[0]

    @property
    def R(self):
        return len(self.sizes)

    def truth(self):
        """The true final state of every sample."""
        if self.states is not None:
            return [ops.as_state(s) for s in self.states]
        field_op = np.tensordot(np.asarray(self.xi, dtype=float), np.asarray(self.observables), axes=1)
        return [ops.gibbs_normalize(b * field_op) for b in self.betas]


def _measure_multinomial(state, observables, n, rng):
    means = []
    for f in observables:
        w, v = ops.spectral_decompose(f)
        probs = np.real(np.einsum("ji,jk,ki->i", v.conj(), state.matrix, v))
        probs = np.clip(probs, 0.0, None)
        counts = rng.multinomial(n, probs / probs.sum())
        means.append(float(counts @ w) / n)
    return means


def _measure_gaussian(state, observables, n, rng):
    stack = np.asarray(observables)
    mean = ops.expectations(stack, state)
    second = ops.expectations(np.einsum("kij,kjl->kil", stack, stack), state)
    var = np.clip(second - mean ** 2, 0.0, None)
    return mean + rng.standard_normal(mean.size) * np.sqrt(var / n)


def simulate_dataset(config, rng=None):
    """Draw one dataset.

    ``multinomial``: every observable is measured on ``N_i // m`` fresh
    copies and its eigenvalue outcomes are sampled with Born
    probabilities.  ``gaussian``: each mean is the exact expectation plus
    normal noise of variance ``var(F_b)/N_i``.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    observables = [ops.hermitian(f) for f in config.observables]
    m = len(observables)
    means = []
    for state, n in zip(config.truth(), config.sizes):
        if config.noise_model == "multinomial":
            per_axis = int(n) // m
            if per_axis < 1:
                raise ValidationError(f"sample size {n} is smaller than the number of observables {m}", "sizes")
            means.append(_measure_multinomial(state, observables, per_axis, rng))
        else:
            means.append(_measure_gaussian(state, observables, int(n), rng))
    meta = {
        "generator": RNG_NAME,
        "seed": int(config.seed),
        "noise_model": config.noise_model,
    }
    if config.label:
        meta["preset"] = config.label
    return Dataset(tuple(observables), np.asarray(config.sizes), np.array(means), names=tuple(config.names), metadata=meta)


def trial_streams(seed, trials):
    """Independent generators for each trial index."""
    children = np.random.SeedSequence(seed).spawn(trials)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _orthogonal_patterns(R, k):
    """``k`` orthonormal zero-mean sample patterns (deterministic)."""
    i = np.arange(R)
    cols = [np.ones(R), np.linspace(-1, 1, R)]
    for j in range(1, k + 2):
        cols.append(np.cos(np.pi * j * (i + 0.5) / R) + 0.5 * (-1.0) ** (i * j))
    q, _ = np.linalg.qr(np.array(cols).T)
    return q[:, 1 : k + 1] * np.sign(q[0, 1 : k + 1])


def worked_qubit_states(R=10, size=20000, gamma_plus=0.01, gamma_minus=1e-4, f_norm=0.1, theta=np.pi / 16):
    """Bloch vectors with the covariance pattern of the worked qubit example.

    The spread along the dominant axis is ``gamma_plus``; transverse spread
    is chosen so that true spread plus projection noise of ``~1/size``
    per axis gives ``gamma_minus``.
    """
    pats = _orthogonal_patterns(R, 3) * np.sqrt(R)
    f_hat = np.array([np.sin(theta), 0.0, np.cos(theta)])
    center = f_norm * f_hat
    transverse = np.sqrt(max(gamma_minus - 1.0 / size, 0.0))
    bloch = (
        center
        + np.sqrt(gamma_plus) * pats[:, [0]] * np.array([0.0, 0.0, 1.0])
        + transverse * pats[:, [1]] * np.array([1.0, 0.0, 0.0])
        + transverse * pats[:, [2]] * np.array([0.0, 1.0, 0.0])
    )
    return bloch


PRESETS = ("worked-qubit", "z-family", "isotropic")


def preset_config(name, seed=0, noise_model="gaussian", size=None, R=10):
    """Ready-made qubit configurations.

    ``worked-qubit``
        The worked example: Γ+ = f̄·f̄ = 0.01, Γ- = 1e-4, tilt π/16, N_i = 20000.
    ``z-family``
        Canonical states along Z with β_i spread ±20% about 0.2.
    ``isotropic``
        Bloch vectors of length 0.1 in random directions (drawn from ``seed``).
    """
    paulis = tuple(ops.pauli_matrices())
    names = ("X", "Y", "Z")
    if name == "worked-qubit":
        n = size or 20000
        states = tuple(ops.qubit_state(b) for b in worked_qubit_states(R, n))
        return SimulationConfig(paulis, (n,) * R, states=states, noise_model=noise_model, seed=seed,
                                names=names, true_dimension=1, label=name)
    if name == "z-family":
        n = size or 20000
        return SimulationConfig(paulis, (n,) * R, xi=np.array([0.0, 0.0, 1.0]), betas=np.linspace(0.16, 0.24, R),
                                noise_model=noise_model, seed=seed, names=names, true_dimension=1, label=name)
    if name == "isotropic":
        n = size or 20000
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
        dirs = rng.standard_normal((R, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        states = tuple(ops.qubit_state(0.1 * d) for d in dirs)
        return SimulationConfig(paulis, (n,) * R, states=states, noise_model=noise_model, seed=seed,
                                names=names, true_dimension=3, label=name)
    raise ValidationError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})", "preset")


def _angle_deg(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(min(c, 1.0))))


STUDY_FIELDS = (
    "trial", "true_p", "selected_p", "correct_p", "winner", "verdict",
    "xi_angle_error_deg", "beta_rel_error_median", "error",
)


def recovery_study(config, trials, margin_factor=3.0, estimate=True):
    """Repeat simulate → assess → estimate and tabulate how well the truth is recovered.

    Returns ``(rows, summary)``: one dict per trial and one aggregate dict
    (dimension-recovery fraction, angle and β error quantiles, verdict
    counts).  Failed trials are counted, not raised.
    """
    from .pipeline import assess

    if trials < 1:
        raise ValidationError("trials must be at least 1", "study")
    rows = []
    for k, rng in enumerate(trial_streams(config.seed, trials)):
        row = dict.fromkeys(STUDY_FIELDS, "")
        row["trial"] = k
        row["true_p"] = "" if config.true_dimension is None else config.true_dimension
        try:
            ds = simulate_dataset(config, rng)
            report = assess(ds, margin_factor=margin_factor, estimate=estimate)
            row["selected_p"] = report.winner_p
            row["winner"] = report.winner
            row["verdict"] = report.verdict
            if config.true_dimension is not None:
                row["correct_p"] = int(report.winner_p == config.true_dimension)
            est = report.hamiltonian
            if est is not None and config.xi is not None:
                row["xi_angle_error_deg"] = _angle_deg(est.xi, config.xi)
                # compare natural parameters along the true axis
                scale = float(est.xi @ config.xi) / float(np.dot(config.xi, config.xi))
                rel = np.abs(est.per_sample_beta * scale - config.betas) / np.abs(config.betas)
                row["beta_rel_error_median"] = float(np.median(rel))
        except ThermoscopeError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows, summarize_study(rows)


def summarize_study(rows):
    def col(name):
        return np.array([r[name] for r in rows if r[name] != ""], dtype=float)

    correct = col("correct_p")
    angles = col("xi_angle_error_deg")
    betas = col("beta_rel_error_median")
    verdicts = {}
    for r in rows:
        if r["verdict"]:
            verdicts[r["verdict"]] = verdicts.get(r["verdict"], 0) + 1
    q = lambda a, p: float(np.quantile(a, p)) if a.size else float("nan")
    return {
        "trials": len(rows),
        "failures": sum(1 for r in rows if r["error"]),
        "dimension_recovery": float(correct.mean()) if correct.size else float("nan"),
        "angle_error_q50": q(angles, 0.5),
        "angle_error_q90": q(angles, 0.9),
        "beta_error_q50": q(betas, 0.5),
        "beta_error_q90": q(betas, 0.9),
        "verdict_thermalized": verdicts.get("thermalized", 0),
        "verdict_not_thermalized": verdicts.get("not-thermalized", 0),
        "verdict_inconclusive": verdicts.get("inconclusive", 0),
    }


def write_study_csv(rows, summary, stream):
    """Per-trial rows followed by one ``summary`` row carrying the aggregates."""
    fields = list(STUDY_FIELDS) + [k for k in summary if k not in STUDY_FIELDS]
    writer = csv.DictWriter(stream, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) for k, v in r.items()})
    writer.writerow({"trial": "summary", **{k: _fmt(v) for k, v in summary.items()}})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
