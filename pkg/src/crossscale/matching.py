"""Similarity between subspaces learnt at different image resolutions.

A low-resolution basis ``B_X`` (``d_low x D``) is carried into the
high-resolution space in one of two ways before it is compared with a
reference basis ``B_Y`` (``d_high x D``):

``naive``
    Reverse-project the basis vectors and orthonormalise them.
``constrained``
    Additionally allow any correction lying in the nullspace of the
    downsampling operator, then pick the ``D`` directions of that larger
    span that best align with ``B_Y``.

The similarity score is the largest principal correlation.
"""

from __future__ import annotations

import enum
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .learning import SubspaceModel
from .linalg import (
    SingularAlignment,
    _svd_alignment,
    extend_basis,
    nullspace_basis,
    orthonormalize,
    paired_alignment,
    reverse_projection,
)
from .projection import ImageGeometry, KernelKind, ProjectionMatrix, build_projection

__all__ = [
    "MatchMethod",
    "MatchResult",
    "CorrectionModel",
    "CorrectionModelCache",
    "DegenerateMatchError",
    "DegenerateMatchWarning",
    "DimensionMismatchWarning",
    "default_cache",
    "prepare_correction_model",
    "naive_reconstruct",
    "joint_basis",
    "naive_match",
    "constrained_reconstruct",
    "match",
    "PairwiseMatcher",
]


class MatchMethod(str, enum.Enum):
    NAIVE = "naive"
    CONSTRAINED = "constrained"

    def __str__(self) -> str:
        return self.value


class DegenerateMatchError(ValueError):
    """The constrained span is so large that every reference matches it perfectly."""


class DegenerateMatchWarning(UserWarning):
    pass


class DimensionMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class CorrectionModel:
    """Data-independent part of the constrained reconstruction for one geometry pair."""

    projection: ProjectionMatrix
    reverse: np.ndarray
    ambiguity_basis: np.ndarray

    @property
    def d_low(self) -> int:
        return self.projection.d_low

    @property
    def d_high(self) -> int:
        return self.projection.d_high


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Outcome of matching a low-resolution basis against a reference.

    ``rotation`` is the ``(D + d_high - d_low, D)`` matrix selecting the
    aligned directions from the joint basis; it is ``None`` for naive
    matching.  ``mode_pairs`` holds ``(reference_mode, reconstructed_mode)``
    image-space vectors, most similar pair first.
    """

    similarity: float
    spectrum: np.ndarray
    reconstructed_basis: np.ndarray
    method: MatchMethod
    rotation: np.ndarray | None = None
    mode_pairs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def prepare_correction_model(P: ProjectionMatrix) -> CorrectionModel:
    """Reverse projection and nullspace basis for ``P``.

    Both depend only on the two geometries and the kernel, never on data.
    """
    R = reverse_projection(P.entries)
    if P.is_identity:
        B_c = np.zeros((P.d_high, 0))
    else:
        B_c = nullspace_basis(P.entries)
    R.setflags(write=False)
    B_c.setflags(write=False)
    return CorrectionModel(projection=P, reverse=R, ambiguity_basis=B_c)


class CorrectionModelCache:
    """Thread-safe LRU of correction models keyed by ``(src, dst, kernel)``.

    A 50x50 -> 5x5 entry holds a 2500 x 2475 nullspace basis (~50 MB), so
    the cache is bounded.
    """

    def __init__(self, maxsize: int = 10):
        self.maxsize = maxsize
        self._entries: OrderedDict[tuple, CorrectionModel] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, src: ImageGeometry, dst: ImageGeometry, kernel) -> CorrectionModel:
        key = (src, dst, KernelKind(kernel))
        with self._lock:
            cm = self._entries.get(key)
            if cm is not None:
                self._entries.move_to_end(key)
                return cm
            cm = prepare_correction_model(build_projection(src, dst, key[2]))
            self._entries[key] = cm
            while len(self._entries) > self.maxsize:
                self._entries.popitem(last=False)
            return cm

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


default_cache = CorrectionModelCache()


def _check_low_basis(B_X: np.ndarray, cm: CorrectionModel) -> np.ndarray:
    B_X = np.asarray(B_X, dtype=float)
    if B_X.ndim != 2 or B_X.shape[0] != cm.d_low:
        raise ValueError(f"low-resolution basis must have {cm.d_low} rows, got shape {B_X.shape}")
    return B_X


def naive_reconstruct(B_X, cm: CorrectionModel) -> np.ndarray:
    """Orthonormalised reverse projection of a low-resolution basis."""
    B_X = _check_low_basis(B_X, cm)
    return orthonormalize(cm.reverse @ B_X)


def _joint_blocks(B_star: np.ndarray, B_c: np.ndarray) -> np.ndarray:
    # B_star already lies in the row space of P, orthogonal to B_c, so only
    # its own columns need treatment
    if B_c.shape[1] == 0:
        return B_star
    return extend_basis(B_c, B_star)


def joint_basis(B_star, B_c) -> np.ndarray:
    """Orthonormal basis of ``span([B_star | B_c])``, ``B_star``'s part first."""
    B_star = np.asarray(B_star, dtype=float)
    B_c = np.asarray(B_c, dtype=float)
    return np.hstack([_joint_blocks(B_star, B_c), B_c])


def _mode_pairs(B_Y, left, recon, k):
    return [(B_Y @ left[:, i], recon[:, i]) for i in range(k)]


def _warn_dims(d_x: int, d_y: int) -> None:
    if d_x != d_y:
        warnings.warn(
            f"matching a {d_x}-dimensional subspace against a {d_y}-dimensional one",
            DimensionMismatchWarning,
            stacklevel=3,
        )


def naive_match(B_X, B_Y, cm: CorrectionModel) -> MatchResult:
    """Compare ``B_Y`` with the plain reverse projection of ``B_X``."""
    B_star = naive_reconstruct(B_X, cm)
    B_Y = np.asarray(B_Y, dtype=float)
    _warn_dims(B_star.shape[1], B_Y.shape[1])
    al = paired_alignment(B_Y, B_star)
    k = min(B_star.shape[1], B_Y.shape[1])
    recon = B_star @ al.right[:, :k]
    return MatchResult(
        similarity=float(al.values[0]),
        spectrum=al.values[:k].copy(),
        reconstructed_basis=B_star,
        method=MatchMethod.NAIVE,
        rotation=None,
        mode_pairs=_mode_pairs(B_Y, al.left, recon, k),
    )


def _lift(B_X, cm: CorrectionModel) -> np.ndarray:
    """Orthonormal part of the joint basis contributed by ``B_X``."""
    return _joint_blocks(naive_reconstruct(B_X, cm), cm.ambiguity_basis)


def _reference_null_coords(B_Y: np.ndarray, cm: CorrectionModel) -> np.ndarray:
    """``B_c.T @ B_Y``: coordinates of the reference in the ambiguity subspace."""
    return cm.ambiguity_basis.T @ B_Y


def _constrained_alignment(E, B_Y, null_coords) -> SingularAlignment:
    # B_Y.T @ [E | B_c], assembled without materialising the joint basis
    M = B_Y.T @ E
    if null_coords.shape[0]:
        M = np.hstack([M, null_coords.T])
    return _svd_alignment(M)


def _check_degenerate(d_x: int, cm: CorrectionModel, allow_degenerate: bool) -> None:
    if cm.ambiguity_basis.shape[1] and d_x >= cm.d_low:
        msg = (
            f"subspace dimension {d_x} >= low-resolution pixel count {cm.d_low}; "
            "the constrained match is vacuous"
        )
        if not allow_degenerate:
            raise DegenerateMatchError(msg)
        warnings.warn(msg, DegenerateMatchWarning, stacklevel=3)


def constrained_reconstruct(
    B_X, B_Y, cm: CorrectionModel, allow_degenerate: bool = False
) -> MatchResult:
    """Best high-resolution reconstruction of ``B_X`` consistent with downsampling.

    The joint basis ``[B*_X | B_c]`` spans every high-resolution subspace
    that downsamples onto ``span(B_X)``.  The SVD of ``B_Y.T @ joint``
    gives the rotation ``T`` (first ``D`` right singular vectors) and the
    reconstruction ``joint @ T``.

    Raises
    ------
    DegenerateMatchError
        If ``D >= d_low`` while the nullspace is non-trivial: the joint
        span then has dimension ``d_high`` and the similarity is 1 for any
        reference.  Pass ``allow_degenerate=True`` to downgrade to a warning.
    """
    B_X = _check_low_basis(B_X, cm)
    B_Y = np.asarray(B_Y, dtype=float)
    if B_Y.ndim != 2 or B_Y.shape[0] != cm.d_high:
        raise ValueError(f"reference basis must have {cm.d_high} rows, got shape {B_Y.shape}")
    _check_degenerate(B_X.shape[1], cm, allow_degenerate)
    _warn_dims(B_X.shape[1], B_Y.shape[1])

    B_c = cm.ambiguity_basis
    E = _lift(B_X, cm)
    D = E.shape[1]
    al = _constrained_alignment(E, B_Y, _reference_null_coords(B_Y, cm))
    k = min(D, B_Y.shape[1])
    T = al.right[:, :k]
    recon = E @ T[:D]
    if B_c.shape[1]:
        recon = recon + B_c @ T[D:]
    return MatchResult(
        similarity=float(al.values[0]),
        spectrum=al.values[:k].copy(),
        reconstructed_basis=recon,
        method=MatchMethod.CONSTRAINED,
        rotation=T,
        mode_pairs=_mode_pairs(B_Y, al.left, recon, k),
    )


class PairwiseMatcher:
    """Similarity scores for many model pairs, reusing per-model work.

    Each low-resolution basis is lifted once and each reference is
    projected onto the ambiguity subspace once per geometry pair; only
    the small per-pair SVD is repeated.  Scores are identical to
    ``match(...).similarity``.
    """

    def __init__(self, kernel, method, *, allow_degenerate=False, cache=None):
        self.kernel = KernelKind(kernel)
        self.method = MatchMethod(method)
        self.allow_degenerate = allow_degenerate
        self.cache = cache if cache is not None else default_cache
        self._low: dict = {}
        self._ref: dict = {}
        self._lock = threading.Lock()

    def _memo(self, store, key, fn):
        with self._lock:
            if key in store:
                return store[key]
        value = fn()
        with self._lock:
            return store.setdefault(key, value)

    def similarity(self, model_lo: SubspaceModel, model_hi: SubspaceModel) -> float:
        lo, hi = model_lo.geometry, model_hi.geometry
        if lo.pixels > hi.pixels:
            raise ValueError(f"low-resolution model ({lo}) is larger than the reference ({hi})")
        cm = self.cache.get(hi, lo, self.kernel)
        if self.method is MatchMethod.NAIVE:
            B_star = self._memo(self._low, (id(model_lo), hi), lambda: naive_reconstruct(model_lo.basis, cm))
            _warn_dims(B_star.shape[1], model_hi.basis.shape[1])
            return float(paired_alignment(model_hi.basis, B_star).values[0])
        _check_degenerate(model_lo.dim, cm, self.allow_degenerate)
        _warn_dims(model_lo.dim, model_hi.dim)
        E = self._memo(self._low, (id(model_lo), hi), lambda: _lift(model_lo.basis, cm))
        Z = self._memo(
            self._ref, (id(model_hi), lo), lambda: _reference_null_coords(model_hi.basis, cm)
        )
        return float(_constrained_alignment(E, model_hi.basis, Z).values[0])


def match(
    model_lo: SubspaceModel,
    model_hi: SubspaceModel,
    kernel: KernelKind | str = KernelKind.BILINEAR,
    method: MatchMethod | str = MatchMethod.CONSTRAINED,
    *,
    allow_degenerate: bool = False,
    cache: CorrectionModelCache | None = None,
) -> MatchResult:
    """Similarity of a low-resolution model to a high-resolution reference.

    Matching is directional: ``model_lo`` is reconstructed towards
    ``model_hi``.  Equal geometries are allowed; both methods then reduce
    to a direct comparison of the two bases.
    """
    method = MatchMethod(method)
    lo, hi = model_lo.geometry, model_hi.geometry
    if lo.pixels > hi.pixels:
        raise ValueError(f"low-resolution model ({lo}) is larger than the reference ({hi})")
    cm = (cache if cache is not None else default_cache).get(hi, lo, kernel)
    if method is MatchMethod.NAIVE:
        return naive_match(model_lo.basis, model_hi.basis, cm)
    return constrained_reconstruct(
        model_lo.basis, model_hi.basis, cm, allow_degenerate=allow_degenerate
    )
