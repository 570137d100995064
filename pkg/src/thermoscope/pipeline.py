"""Assess thermalization: score candidate levels, pick a winner, estimate H."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import geometry, hamiltonian, selection
from .errors import ThermoscopeError, ValidationError
from .geometry import LevelOfDescription

log = logging.getLogger(__name__)

CAVEAT = (
    "log-likelihoods omit additive constants shared by all levels of one dataset; "
    "only differences between scores are meaningful"
)


@dataclass(frozen=True, eq=False)
class ScoreEntry:
    label: str
    p: int
    log_likelihood: float
    alpha: float = None
    alpha_curvature: float = None
    reliable: bool = None
    full_log_likelihood: float = None
    coefficients: list = None
    score: selection.ModelScore = None


@dataclass(frozen=True)
class Comparison:
    coarse: str
    fine: str
    criterion: float
    direct: float


@dataclass(frozen=True, eq=False)
class AssessmentReport:
    dataset_digest: str
    gaussian_regime: bool
    max_pair_entropy: float
    max_center_entropy: float
    scores: list
    winner: str
    winner_p: int
    comparisons: list
    hamiltonian: hamiltonian.HamiltonianEstimate
    verdict: str
    margins: dict
    margin_factor: float
    warnings: list = field(default_factory=list)
    caveat: str = CAVEAT


def _coefficients(level, dataset):
    """Coefficients of each level observable in the basis ``{1, F_b}``."""
    if level.p == 0:
        return []
    basis = np.array([np.eye(dataset.dim).ravel()] + [f.ravel() for f in dataset.observables]).T
    out = []
    for g in level.observables:
        c, *_ = np.linalg.lstsq(basis, g.ravel(), rcond=None)
        out.append([float(x) for x in np.real(c[1:])])
    return out


def _same_span(a, b):
    return a.p == b.p and geometry.contains(a, b) and geometry.contains(b, a)


def auto_candidates(dataset, metric):
    """For every ``p`` the PCA level and the reference-anchored level."""
    chains = {"pca": [], "anchored": []}
    levels = []
    for p in range(dataset.m + 1):
        pca = selection.pca_orientation(dataset, p, metric)
        anch = selection.anchored_orientation(dataset, p, metric)
        if p == 0:
            pca = LevelOfDescription((), "empty")
            anch = pca
        elif p == dataset.m:
            pca = LevelOfDescription(dataset.observables, "full")
            anch = pca
        chains["pca"].append(pca)
        chains["anchored"].append(anch)
        levels.append(pca)
        if not _same_span(pca, anch):
            levels.append(anch)
    return levels, chains


def _nested_pairs(levels):
    pairs = []
    for a in levels:
        for b in levels:
            if a is not b and a.p < b.p and geometry.contains(b, a):
                pairs.append((a, b))
    return pairs


def assess(dataset, candidates="auto", margin_factor=hamiltonian.MARGIN_FACTOR, alpha="auto", estimate=True, seed=0):
    """Score levels of description and decide whether the data look thermal.

    Parameters
    ----------
    dataset : Dataset
    candidates : "auto" or list of LevelOfDescription
        ``"auto"`` scores, for every dimension ``p = 0..m``, the PCA
        orientation and the orientation anchored at the reference state.
    margin_factor : float
        How many times smaller than its budget each part of the
        thermalization condition must be.
    alpha : "auto" or float
        Prior strength used for the finite-sample log-likelihood; ``"auto"``
        runs the evidence procedure per level.
    estimate : bool
        Estimate the Hamiltonian when a one-dimensional level wins.

    Returns
    -------
    AssessmentReport
    """
    from .serialization import dataset_digest

    if dataset.R < 2:
        raise ValidationError("assessment needs at least two samples (Γ is undefined for R = 1)", "samples")
    warnings = []
    regime = dataset.regime
    if not regime.ok:
        warnings.append(
            f"data outside the Gaussian regime (max pairwise S = {regime.max_pair_entropy:.3g}, "
            f"max S to center = {regime.max_center_entropy:.3g}); quadratic approximations may be poor"
        )
    gamma, _ = selection.covariance_matrix(dataset)
    degenerate = np.trace(gamma) < 1e-14
    if degenerate:
        warnings.append("degenerate spread: all samples have identical means")
    metric = selection.correlation_metric(dataset)

    if isinstance(candidates, str):
        if candidates != "auto":
            raise ValidationError(f"unknown candidate mode '{candidates}'", "candidates")
        levels, chains = auto_candidates(dataset, metric)
        pairs = []
        for chain in chains.values():
            pairs += [(chain[k], chain[k + 1]) for k in range(len(chain) - 1)]
        seen, unique = set(), []
        for a, b in pairs:
            key = (a.label, b.label)
            if key not in seen:
                seen.add(key)
                unique.append((a, b))
        pairs = unique
    else:
        levels = list(candidates)
        if not levels:
            raise ValidationError("no candidate levels given", "candidates")
        pairs = _nested_pairs(levels)

    scores = {}
    for level in levels:
        try:
            pr = selection.project_dataset(dataset, level)
            sc = selection.asymptotic_log_likelihood(dataset, level, pr)
            entry = dict(label=level.label, p=level.p, log_likelihood=sc.asymptotic_log_likelihood,
                         coefficients=_coefficients(level, dataset), score=sc)
            if alpha == "auto":
                try:
                    est = selection.estimate_alpha(dataset, level, pr)
                    entry.update(alpha=est.alpha, alpha_curvature=est.curvature, reliable=est.reliable)
                    entry["full_log_likelihood"] = selection.full_log_likelihood(dataset, level, est.alpha, pr)
                except ThermoscopeError as exc:
                    entry.update(reliable=False)
                    if level.p > 0:
                        warnings.append(f"{level.label}: {exc}")
            else:
                a = float(alpha)
                entry.update(alpha=a, full_log_likelihood=selection.full_log_likelihood(dataset, level, a, pr))
            scores[level.label] = ScoreEntry(**entry)
        except ThermoscopeError as exc:
            warnings.append(f"{level.label}: scoring failed ({type(exc).__name__}: {exc})")
    if not scores:
        raise next(iter([ThermoscopeError("all candidate levels failed to score")]))

    ranked = sorted(scores.values(), key=lambda s: (-s.log_likelihood, s.p, s.label))
    best = ranked[0]

    comparisons = []
    for a, b in pairs:
        if a.label in scores and b.label in scores:
            try:
                crit = selection.compare_levels(dataset, a, b)
            except ThermoscopeError as exc:
                warnings.append(f"comparison {a.label} < {b.label} failed: {exc}")
                continue
            comparisons.append(Comparison(a.label, b.label, crit,
                                          scores[b.label].log_likelihood - scores[a.label].log_likelihood))

    estimate_result = None
    margins = {}
    if best.p == 1 and estimate and not degenerate:
        try:
            estimate_result = hamiltonian.estimate_hamiltonian(dataset, "exact", margin_factor, metric, seed=seed)
            th = estimate_result.thermal
            margins = {"spread": th.spread_margin, "tilt": th.tilt_margin, "overall": th.margin}
        except ThermoscopeError as exc:
            warnings.append(f"Hamiltonian estimation failed: {type(exc).__name__}: {exc}")

    if best.p == 1 and estimate_result is not None:
        verdict = "thermalized" if estimate_result.thermal.passed else "inconclusive"
    elif best.p >= 2:
        verdict = "not-thermalized"
        if best.p < dataset.m:
            warnings.append(f"data favour {best.p} constants of the motion (generalized Gibbs ensemble)")
    else:
        verdict = "inconclusive"

    return AssessmentReport(
        dataset_digest=dataset_digest(dataset),
        gaussian_regime=regime.ok,
        max_pair_entropy=regime.max_pair_entropy,
        max_center_entropy=regime.max_center_entropy,
        scores=ranked,
        winner=best.label,
        winner_p=best.p,
        comparisons=comparisons,
        hamiltonian=estimate_result,
        verdict=verdict,
        margins=margins,
        margin_factor=float(margin_factor),
        warnings=warnings,
    )
