"""The experimental input: measured observables and per-sample means."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geometry, operators as ops
from .errors import DimMismatch, ValidationError
from .operators import DensityMatrix


@dataclass(frozen=True, eq=False)
class Dataset:
    """Output-side tomography data from ``R`` samples.

    Attributes
    ----------
    observables : tuple of ndarray
        The measured observables ``F_b`` (``m`` of them, unit operator
        excluded).
    sizes : ndarray of int, shape (R,)
        Sample sizes ``N_i``.
    means : ndarray of float, shape (R, m)
        Sample means ``f^i_b``.
    reference : DensityMatrix
        Prior bias ``sigma``; the maximally mixed state when omitted.
    names : tuple of str
        Observable labels, used only for reporting.
    """

    observables: tuple
    sizes: np.ndarray
    means: np.ndarray
    reference: DensityMatrix = None
    names: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        level = geometry.LevelOfDescription(tuple(self.observables), "F")
        object.__setattr__(self, "observables", level.observables)
        object.__setattr__(self, "_level", level)
        if level.p == 0:
            raise ValidationError("at least one observable is required", "observables")
        d = self.dim
        if level.p > d * d - 1:
            raise ValidationError(f"{level.p} observables exceed d^2 - 1 = {d * d - 1}", "observables")
        sizes = np.asarray(self.sizes)
        if sizes.ndim != 1 or sizes.size == 0:
            raise ValidationError("need a non-empty list of samples", "samples")
        if not np.all(sizes == np.round(sizes)) or np.any(sizes < 1):
            raise ValidationError("sample sizes must be positive integers", "samples")
        object.__setattr__(self, "sizes", sizes.astype(np.int64))
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape != (sizes.size, level.p):
            raise DimMismatch(f"means have shape {means.shape}, expected {(sizes.size, level.p)}", "samples")
        if not np.all(np.isfinite(means)):
            raise ValidationError("means must be finite", "samples")
        object.__setattr__(self, "means", means)
        ref = self.reference
        if ref is None:
            ref = DensityMatrix.maximally_mixed(d)
        ref = ops.as_state(ref)
        if ref.dim != d:
            raise DimMismatch(f"reference state has dimension {ref.dim}, observables {d}", "reference_state")
        object.__setattr__(self, "reference", ref)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"F{b}" for b in range(level.p)))

    @property
    def level(self):
        """The experimental level of description ``span{1, F_b}``."""
        return self._level

    @property
    def dim(self):
        return self.observables[0].shape[0]

    @property
    def m(self):
        return len(self.observables)

    @property
    def R(self):
        return int(self.sizes.size)

    @property
    def N(self):
        return int(self.sizes.sum())

    @property
    def Lambda(self):
        """``Σ_i ln N_i``."""
        return float(np.sum(np.log(self.sizes)))

    @property
    def weights(self):
        return self.sizes / self.sizes.sum()

    @property
    def mean_vector(self):
        """Weighted mean ``f̄_b``."""
        return self.weights @ self.means

    @property
    def informationally_complete(self):
        return self.m == self.dim ** 2 - 1

    @cached_property
    def images(self):
        """Tomographic images ``mu_i`` on the experimental manifold."""
        return [geometry.tomographic_image(f, self.level, self.reference) for f in self.means]

    @cached_property
    def center(self):
        """Mixture ``mu_bar = Σ w_i mu_i``."""
        return geometry.mixture(self.images, self.weights)

    @cached_property
    def regime(self):
        return geometry.gaussian_regime(self.images, self.center)

    def with_sizes(self, sizes):
        return Dataset(self.observables, sizes, self.means, self.reference, self.names, dict(self.metadata))

    def with_means(self, means):
        return Dataset(self.observables, self.sizes, means, self.reference, self.names, dict(self.metadata))
