"""Linear subspace models of image sets (mean image + orthonormal basis)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Hashable

import numpy as np

from .projection import ImageGeometry, ProjectionMatrix, downsample_images

__all__ = [
    "ImageSet",
    "SubspaceModel",
    "DegenerateSpectrumWarning",
    "estimate_subspace",
    "choose_dimension",
    "downsample_set",
    "spectrum",
]


class DegenerateSpectrumWarning(UserWarning):
    """The learnt span is not unique (tied singular values at the cut)."""


@dataclass(frozen=True, eq=False)
class ImageSet:
    """``N`` rasterised greyscale images of one class under one condition.

    ``samples`` is an ``(N, d)`` array, one row-major image per row.
    """

    geometry: ImageGeometry
    samples: np.ndarray
    class_label: Hashable = None
    condition_label: Hashable = None

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=float)
        if X.ndim != 2:
            raise ValueError("samples must be a 2-D (N, d) array")
        if X.shape[1] != self.geometry.pixels:
            raise ValueError(
                f"samples have {X.shape[1]} pixels, geometry {self.geometry} needs "
                f"{self.geometry.pixels}"
            )
        if X.shape[0] < 2:
            raise ValueError("an image set needs at least 2 samples")
        object.__setattr__(self, "samples", X)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class SubspaceModel:
    geometry: ImageGeometry
    mean: np.ndarray
    basis: np.ndarray
    energy_captured: float
    class_label: Hashable = None
    condition_label: Hashable = None
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]


def spectrum(image_set: ImageSet) -> np.ndarray:
    """Singular values of the centred data scaled by ``1/sqrt(N-1)``.

    Their squares are the nonzero eigenvalues of the sample covariance.
    """
    X = image_set.samples
    Z = (X - X.mean(axis=0)) / np.sqrt(X.shape[0] - 1)
    return np.linalg.svd(Z, compute_uv=False)


def estimate_subspace(image_set: ImageSet, dim: int) -> SubspaceModel:
    """Mean and top-``dim`` principal directions of an image set.

    The basis comes from a thin SVD of the centred ``(d, N)`` data matrix,
    so the ``d x d`` covariance is never formed.
    """
    X = image_set.samples
    n, d = X.shape
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim!r}")
    if dim > min(n - 1, d):
        raise ValueError(f"dimension {dim} exceeds min(N-1, d) = {min(n - 1, d)}")

    mean = X.mean(axis=0)
    Z = (X - mean).T / np.sqrt(n - 1)
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    total = float(np.sum(s**2))
    if total == 0.0 or s[0] <= 0.0:
        raise ValueError("image set has zero variance")
    if dim < s.size and abs(s[dim - 1] - s[dim]) <= 1e-12 * s[0]:
        warnings.warn(
            f"singular values {dim} and {dim + 1} coincide; the learnt span is not unique",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
    energy = float(np.sum(s[:dim] ** 2)) / total
    return SubspaceModel(
        geometry=image_set.geometry,
        mean=mean,
        basis=np.ascontiguousarray(U[:, :dim]),
        energy_captured=min(energy, 1.0),
        class_label=image_set.class_label,
        condition_label=image_set.condition_label,
    )


def choose_dimension(image_set: ImageSet, energy_fraction: float) -> int:
    """Smallest dimension whose captured energy reaches ``energy_fraction``."""
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError("energy_fraction must lie in (0, 1]")
    s = spectrum(image_set)
    power = s**2
    total = power.sum()
    if total == 0.0:
        raise ValueError("image set has zero variance")
    cumulative = np.cumsum(power) / total
    limit = min(image_set.n_samples - 1, image_set.geometry.pixels)
    hits = np.nonzero(cumulative[:limit] >= energy_fraction - 1e-12)[0]
    return int(hits[0]) + 1 if hits.size else limit


def downsample_set(image_set: ImageSet, P: ProjectionMatrix) -> ImageSet:
    """Apply a downsampling operator to every image in a set."""
    if image_set.geometry != P.src:
        raise ValueError(f"set geometry {image_set.geometry} does not match P source {P.src}")
    return replace(image_set, geometry=P.dst, samples=downsample_images(P, image_set.samples))
