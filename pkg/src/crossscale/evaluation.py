"""Recognition-style evaluation of cross-scale subspace matching.

The protocol: class models are learnt from downsampled images recorded
under one condition (the gallery) and compared against full-resolution
models of the same classes recorded under another condition (the
probes).  The resulting similarity matrix is summarised by the mean
within-class and between-class mismatch confidences and their ratio,
the class separation.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Sequence

import numpy as np

from .learning import ImageSet, SubspaceModel, downsample_set, estimate_subspace
from .matching import CorrectionModelCache, MatchMethod, PairwiseMatcher, default_cache
from .projection import ImageGeometry, KernelKind

__all__ = [
    "SimilarityMatrix",
    "SeparationReport",
    "SweepConfig",
    "InfiniteSeparationWarning",
    "similarity_matrix",
    "class_separation",
    "classify",
    "classification_accuracy",
    "add_gaussian_noise",
    "generate_synthetic_classes",
    "split_by_condition",
    "run_scale_sweep",
    "run_noise_sweep",
    "improvement_ratios",
    "relative_to_baseline",
]

log = logging.getLogger(__name__)

# below this mean within-class mismatch the separation is reported as infinite
WITHIN_FLOOR = 1e-12


class InfiniteSeparationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """``values[i, j]`` is the similarity of gallery model ``i`` and probe ``j``."""

    values: np.ndarray
    gallery_labels: list
    probe_labels: list

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SeparationReport:
    within_confidence: float
    between_confidence: float
    separation: float
    method: MatchMethod | None = None
    kernel: KernelKind | None = None
    low_geometry: ImageGeometry | None = None
    high_geometry: ImageGeometry | None = None
    noise_sigma: float = 0.0
    seed: int | None = None

    @property
    def scale_pair(self) -> tuple[ImageGeometry | None, ImageGeometry | None]:
        return (self.low_geometry, self.high_geometry)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.separation)


@dataclass(frozen=True)
class SweepConfig:
    scales: Sequence[ImageGeometry]
    kernels: Sequence[KernelKind] = (KernelKind.BILINEAR, KernelKind.BICUBIC)
    methods: Sequence[MatchMethod] = (MatchMethod.NAIVE, MatchMethod.CONSTRAINED)
    noise_sigmas: Sequence[float] = (0.0,)
    subspace_dim: int = 4
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(self.scales))
        object.__setattr__(self, "kernels", tuple(KernelKind(k) for k in self.kernels))
        object.__setattr__(self, "methods", tuple(MatchMethod(m) for m in self.methods))
        object.__setattr__(self, "noise_sigmas", tuple(float(s) for s in self.noise_sigmas))
        for name in ("scales", "kernels", "methods", "noise_sigmas"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be at least 1")
        if any(s < 0 for s in self.noise_sigmas):
            raise ValueError("noise sigmas must be non-negative")


def _oriented(matcher: PairwiseMatcher, a: SubspaceModel, b: SubspaceModel) -> float:
    # the smaller image space is always the one reconstructed
    if a.geometry.pixels <= b.geometry.pixels:
        return matcher.similarity(a, b)
    return matcher.similarity(b, a)


def similarity_matrix(
    gallery: Sequence[SubspaceModel],
    probes: Sequence[SubspaceModel],
    kernel: KernelKind | str = KernelKind.BILINEAR,
    method: MatchMethod | str = MatchMethod.CONSTRAINED,
    *,
    jobs: int = 1,
    cache: CorrectionModelCache | None = None,
) -> SimilarityMatrix:
    """Similarity of every gallery model to every probe model.

    Probes are reordered to follow the gallery's class order, so the
    diagonal holds same-class pairs.  Whichever side of a pair has the
    smaller geometry is treated as the low-resolution one.
    """
    if not gallery or not probes:
        raise ValueError("gallery and probes must be non-empty")
    g_labels = [m.class_label for m in gallery]
    p_index = {m.class_label: m for m in probes}
    if len(set(g_labels)) != len(g_labels) or len(p_index) != len(probes):
        raise ValueError("expected one model per class on each side")
    if set(g_labels) != set(p_index):
        raise ValueError(
            f"class labels differ: gallery {sorted(map(str, g_labels))} "
            f"vs probes {sorted(map(str, p_index))}"
        )
    ordered = [p_index[label] for label in g_labels]
    matcher = PairwiseMatcher(kernel, method, cache=cache)
    M = len(gallery)
    cells = [(i, j) for i in range(M) for j in range(M)]

    def cell(ij):
        i, j = ij
        return _oriented(matcher, gallery[i], ordered[j])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(cell, cells))
    else:
        flat = [cell(ij) for ij in cells]
    values = np.array(flat, dtype=float).reshape(M, M)
    return SimilarityMatrix(values=values, gallery_labels=g_labels, probe_labels=list(g_labels))


def class_separation(sm: SimilarityMatrix | np.ndarray, **context) -> SeparationReport:
    """Mean within/between-class mismatch and their ratio.

    ``within = 1 - mean(diag)``, ``between = 1 - mean(off-diagonal)`` and
    ``separation = between / within``.  A within-class mismatch at or
    below ``1e-12`` yields ``separation = inf`` and a warning.  Keyword
    arguments are copied onto the report (method, kernel, geometries, ...).
    """
    values = np.asarray(sm.values if isinstance(sm, SimilarityMatrix) else sm, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("similarity matrix must be square")
    M = values.shape[0]
    if M < 2:
        raise ValueError("class separation needs at least two classes")
    diag = float(np.trace(values))
    within = 1.0 - diag / M
    between = 1.0 - (float(values.sum()) - diag) / (M * (M - 1))
    if within <= WITHIN_FLOOR:
        warnings.warn(
            "within-class mismatch is zero; separation reported as infinite",
            InfiniteSeparationWarning,
            stacklevel=2,
        )
        mu = math.inf
    else:
        mu = between / within
    return SeparationReport(within, between, mu, **context)


def classify(
    probe: SubspaceModel,
    gallery: Sequence[SubspaceModel],
    kernel: KernelKind | str = KernelKind.BILINEAR,
    method: MatchMethod | str = MatchMethod.CONSTRAINED,
    *,
    cache: CorrectionModelCache | None = None,
) -> Hashable:
    """Label of the most similar gallery model (lowest index on ties)."""
    if not gallery:
        raise ValueError("gallery is empty")
    matcher = PairwiseMatcher(kernel, method, cache=cache)
    sims = np.array([_oriented(matcher, probe, g) for g in gallery])
    best = int(np.argmax(sims))
    tied = np.flatnonzero(sims == sims[best])
    if tied.size > 1:
        log.info(
            "tie between gallery entries %s at similarity %.12g; picked %s",
            [gallery[t].class_label for t in tied], sims[best], gallery[best].class_label,
        )
    return gallery[best].class_label


def classification_accuracy(
    probes: Sequence[SubspaceModel],
    gallery: Sequence[SubspaceModel],
    kernel: KernelKind | str = KernelKind.BILINEAR,
    method: MatchMethod | str = MatchMethod.CONSTRAINED,
) -> float:
    hits = [classify(p, gallery, kernel, method) == p.class_label for p in probes]
    return float(np.mean(hits))


def add_gaussian_noise(image_set: ImageSet, sigma: float, seed: int | Sequence[int]) -> ImageSet:
    """Add i.i.d. zero-mean Gaussian noise of std ``sigma`` to every pixel.

    Values are not clipped to the 8-bit range.  For a fixed seed the
    underlying standard-normal draws are the same for every ``sigma``.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return replace(image_set, samples=image_set.samples.copy())
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(image_set.samples.shape)
    return replace(image_set, samples=image_set.samples + sigma * noise)


def _cosine_atoms(geometry: ImageGeometry, max_freq: int) -> tuple[np.ndarray, np.ndarray]:
    rows = (np.arange(geometry.height) + 0.5) / geometry.height
    cols = (np.arange(geometry.width) + 0.5) / geometry.width
    freqs = np.array([(u, v) for u in range(max_freq) for v in range(max_freq)])
    atoms = np.array(
        [np.outer(np.cos(np.pi * u * rows), np.cos(np.pi * v * cols)).ravel() for u, v in freqs]
    )
    return atoms, freqs


def _unit_rms(image: np.ndarray) -> np.ndarray:
    return image / np.sqrt(np.mean(image**2))


def generate_synthetic_classes(
    n_classes: int,
    n_samples: int,
    geometry: ImageGeometry,
    intrinsic_dim: int,
    seed: int,
    *,
    n_conditions: int = 2,
    max_freq: int = 8,
    spectral_decay: float = 1.5,
    variation_rms: float = 40.0,
    mean_contrast: float = 20.0,
    condition_strength: float = 0.15,
) -> list[ImageSet]:
    """Smooth synthetic image sets with planted linear appearance variation.

    Every image is a random combination of low-frequency 2-D cosine images
    whose amplitudes fall off as ``(1 + f) ** -spectral_decay``.  A class
    has a smooth mean image (grey level 128, RMS contrast
    ``mean_contrast``) and ``intrinsic_dim`` orthogonal variation directions
    of equal energy, scaled so the per-pixel variation has RMS
    ``variation_rms``.  Samples draw their basis coefficients uniformly
    from a sphere, which keeps the peak excursion bounded.

    Each (class, condition) pair multiplies the class appearance by its
    own smooth gain field ``1 + condition_strength * g`` with unit-RMS
    ``g``, a crude stand-in for an illumination change.  If anything falls
    outside ``[0, 255]``, one affine map shared by every set (so subspaces
    are unaffected) shrinks the data back into range.

    Returns ``n_classes * n_conditions`` sets ordered by class, then condition.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if intrinsic_dim < 1:
        raise ValueError("intrinsic_dim must be at least 1")
    if n_samples < intrinsic_dim + 2:
        raise ValueError(
            f"need n_samples >= intrinsic_dim + 2 ({intrinsic_dim + 2}), got {n_samples}"
        )
    if n_conditions < 1:
        raise ValueError("need at least one condition")
    rng = np.random.default_rng(seed)
    atoms, freqs = _cosine_atoms(geometry, max_freq)
    amp = (1.0 + np.hypot(freqs[:, 0], freqs[:, 1])) ** -spectral_decay
    zero_mean = amp.copy()
    zero_mean[0] = 0.0
    coarse = freqs.max(axis=1) < 3

    raw = []
    for c in range(n_classes):
        mean = 128.0 + mean_contrast * _unit_rms((rng.standard_normal(len(atoms)) * zero_mean) @ atoms)
        smooth = (rng.standard_normal((intrinsic_dim, len(atoms))) * amp) @ atoms
        # orthogonal planted directions of equal energy, per-pixel RMS variation_rms overall
        basis = np.linalg.qr(smooth.T)[0].T * (variation_rms * np.sqrt(geometry.pixels / intrinsic_dim))
        for k in range(n_conditions):
            field = (rng.standard_normal(int(coarse.sum())) * zero_mean[coarse]) @ atoms[coarse]
            gain = 1.0 + condition_strength * _unit_rms(field)
            coeffs = rng.standard_normal((n_samples, intrinsic_dim))
            coeffs *= np.sqrt(intrinsic_dim) / np.linalg.norm(coeffs, axis=1, keepdims=True)
            raw.append((c, k, gain * (mean + coeffs @ basis)))

    lo = min(0.0, min(X.min() for *_, X in raw))
    hi = max(255.0, max(X.max() for *_, X in raw))
    return [
        ImageSet(
            geometry,
            X if (lo, hi) == (0.0, 255.0) else (X - lo) * (255.0 / (hi - lo)),
            class_label=f"c{c:02d}",
            condition_label=k,
        )
        for c, k, X in raw
    ]


def split_by_condition(sets: Iterable[ImageSet]) -> tuple[list[ImageSet], list[ImageSet]]:
    """Split sets into (training, query) by their two condition labels.

    The lowest condition label is the training condition and the next one
    the query condition; sets under other conditions are ignored.
    """
    sets = list(sets)
    conditions = sorted({s.condition_label for s in sets}, key=str)
    if len(conditions) < 2:
        raise ValueError("evaluation needs image sets under at least two conditions")
    train = [s for s in sets if s.condition_label == conditions[0]]
    query = [s for s in sets if s.condition_label == conditions[1]]
    return train, query


def _noise_seed(seed: int, class_index: int) -> list[int]:
    return [int(seed), 7919, int(class_index)]


def _sweep_cell(cfg, key, train, high_models, cache):
    scale, kernel, sigma = key
    P = cache.get(train[0].geometry, scale, kernel).projection
    gallery = []
    for idx, s in enumerate(train):
        low = downsample_set(s, P)
        if sigma > 0:
            low = add_gaussian_noise(low, sigma, _noise_seed(cfg.seed, idx))
        gallery.append(estimate_subspace(low, cfg.subspace_dim))
    reports = []
    for method in cfg.methods:
        sm = similarity_matrix(gallery, high_models, kernel, method, cache=cache)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InfiniteSeparationWarning)
            rep = class_separation(
                sm,
                method=method,
                kernel=kernel,
                low_geometry=scale,
                high_geometry=train[0].geometry,
                noise_sigma=sigma,
                seed=cfg.seed,
            )
        if rep.is_infinite:
            log.warning("infinite separation for %s", key)
        reports.append(rep)
    return reports


def _run(cfg: SweepConfig, data, sigmas, cache) -> list[SeparationReport]:
    train, query = split_by_condition(data)
    high = train[0].geometry
    if any(s.geometry != high for s in train + query):
        raise ValueError("all input sets must share the high-resolution geometry")
    cache = cache if cache is not None else default_cache
    high_models = [estimate_subspace(s, cfg.subspace_dim) for s in query]
    keys = [(scale, kernel, sigma) for scale in cfg.scales for kernel in cfg.kernels for sigma in sigmas]

    def work(key):
        return _sweep_cell(cfg, key, train, high_models, cache)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(k) for k in keys]
    reports = [r for batch in results for r in batch]
    return sorted(reports, key=_report_key)


def _report_key(r: SeparationReport):
    return (
        str(r.kernel),
        r.noise_sigma,
        -(r.low_geometry.pixels if r.low_geometry else 0),
        str(r.low_geometry),
        str(r.method),
        r.seed if r.seed is not None else -1,
    )


def run_scale_sweep(
    cfg: SweepConfig, data: Sequence[ImageSet], *, cache: CorrectionModelCache | None = None
) -> list[SeparationReport]:
    """Class separation for every (scale, kernel, method) on clean data.

    ``data`` holds full-resolution sets under (at least) two conditions;
    see :func:`split_by_condition`.  Reports come back in a fixed order
    that does not depend on ``cfg.jobs``.
    """
    return _run(cfg, data, (0.0,), cache)


def run_noise_sweep(
    cfg: SweepConfig, data: Sequence[ImageSet], *, cache: CorrectionModelCache | None = None
) -> list[SeparationReport]:
    """As :func:`run_scale_sweep`, with noise added to the downsampled training images.

    A noise-free baseline is always included so results can be expressed
    relative to it.
    """
    sigmas = tuple(sorted(set(cfg.noise_sigmas) | {0.0}))
    return _run(cfg, data, sigmas, cache)


def improvement_ratios(reports: Iterable[SeparationReport]) -> dict[tuple, float]:
    """Constrained-over-naive separation ratio per (kernel, low geometry, sigma, seed)."""
    by_key: dict[tuple, dict] = {}
    for r in reports:
        key = (r.kernel, r.low_geometry, r.noise_sigma, r.seed)
        by_key.setdefault(key, {})[r.method] = r.separation
    out = {}
    for key, mus in by_key.items():
        if MatchMethod.NAIVE in mus and MatchMethod.CONSTRAINED in mus:
            out[key] = _ratio(mus[MatchMethod.CONSTRAINED], mus[MatchMethod.NAIVE])
    return out


def relative_to_baseline(reports: Iterable[SeparationReport]) -> dict[tuple, float]:
    """Separation at each noise level divided by the noise-free separation.

    Keyed by (method, kernel, low geometry, sigma, seed).
    """
    reports = list(reports)
    base = {
        (r.method, r.kernel, r.low_geometry, r.seed): r.separation
        for r in reports
        if r.noise_sigma == 0.0
    }
    out = {}
    for r in reports:
        b = base.get((r.method, r.kernel, r.low_geometry, r.seed))
        if b is not None:
            out[(r.method, r.kernel, r.low_geometry, r.noise_sigma, r.seed)] = _ratio(
                r.separation, b
            )
    return out


def _ratio(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 1.0
    if b == 0:
        return math.inf
    return a / b
