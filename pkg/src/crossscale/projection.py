"""Linear downsampling operators.

A downsampling of an ``H x W`` greyscale image to ``h x w`` pixels is
modelled as a dense matrix ``P`` of shape ``(h*w, H*W)`` acting on the
row-major rasterisation of the image.  ``P`` is separable: it is the
Kronecker product of a 1-D row resampler and a 1-D column resampler.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageGeometry",
    "KernelKind",
    "ProjectionMatrix",
    "kernel_weight",
    "resampling_matrix_1d",
    "build_projection",
    "apply_downsample",
    "downsample_images",
]

ASPECT_TOL = 1e-9
# cubic convolution parameter
BICUBIC_A = -0.5


@dataclass(frozen=True, order=True)
class ImageGeometry:
    """Pixel dimensions of a greyscale image."""

    height: int
    width: int

    def __post_init__(self):
        for name in ("height", "width"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def pixels(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def aspect(self) -> float:
        return self.height / self.width

    @classmethod
    def parse(cls, text: str) -> "ImageGeometry":
        """Parse ``"WxH"`` (width first), e.g. ``"50x50"`` or ``"192x144"``."""
        m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
        if m is None:
            raise ValueError(f"geometry must look like WxH, got {text!r}")
        width, height = int(m.group(1)), int(m.group(2))
        return cls(height=height, width=width)

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


class KernelKind(str, enum.Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"

    def __str__(self) -> str:
        return self.value

    @property
    def radius(self) -> int:
        return 1 if self is KernelKind.BILINEAR else 2


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """Dense downsampling operator with the geometries it maps between.

    ``entries`` has shape ``(dst.pixels, src.pixels)`` and is read-only.
    """

    entries: np.ndarray
    src: ImageGeometry
    dst: ImageGeometry
    kernel: KernelKind

    @property
    def d_low(self) -> int:
        return self.dst.pixels

    @property
    def d_high(self) -> int:
        return self.src.pixels

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def is_identity(self) -> bool:
        return self.src == self.dst

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        return self.entries @ other


def kernel_weight(kernel: KernelKind | str, offset: float) -> float:
    """Interpolation weight of a source sample at distance ``offset``.

    >>> kernel_weight("bilinear", 0.5)
    0.5
    >>> kernel_weight("bicubic", 1.0)
    0.0
    """
    kernel = KernelKind(kernel)
    x = abs(float(offset))
    if kernel is KernelKind.BILINEAR:
        return max(0.0, 1.0 - x)
    a = BICUBIC_A
    if x <= 1.0:
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    if x < 2.0:
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    return 0.0


def resampling_matrix_1d(src_len: int, dst_len: int, kernel: KernelKind | str) -> np.ndarray:
    """Row-stochastic ``(dst_len, src_len)`` matrix resampling a 1-D signal.

    Output sample ``j`` sits at source coordinate
    ``(j + 0.5) * src_len / dst_len - 0.5``.  Taps falling outside the
    signal are clamped to the nearest edge sample; every row is then
    renormalised to sum to one.
    """
    kernel = KernelKind(kernel)
    if src_len < 1 or dst_len < 1:
        raise ValueError("lengths must be positive")
    if dst_len == src_len:
        return np.eye(src_len)
    scale = src_len / dst_len
    radius = kernel.radius
    R = np.zeros((dst_len, src_len))
    for j in range(dst_len):
        centre = (j + 0.5) * scale - 0.5
        base = math.floor(centre)
        for i in range(base - radius + 1, base + radius + 1):
            w = kernel_weight(kernel, centre - i)
            if w != 0.0:
                R[j, min(max(i, 0), src_len - 1)] += w
    R /= R.sum(axis=1, keepdims=True)
    return R


def build_projection(
    src: ImageGeometry, dst: ImageGeometry, kernel: KernelKind | str = KernelKind.BILINEAR
) -> ProjectionMatrix:
    """Build the matrix that downsamples ``src``-sized images to ``dst``.

    Raises
    ------
    ValueError
        On an upsampling request or an aspect-ratio mismatch.
    """
    kernel = KernelKind(kernel)
    if dst.height > src.height or dst.width > src.width:
        raise ValueError(f"cannot upsample: {src} -> {dst}")
    if abs(src.aspect - dst.aspect) > ASPECT_TOL:
        raise ValueError(f"aspect ratio mismatch: {src} vs {dst}")
    rows = resampling_matrix_1d(src.height, dst.height, kernel)
    cols = resampling_matrix_1d(src.width, dst.width, kernel)
    entries = np.kron(rows, cols)
    # kron of two renormalised factors drifts by a few ulp
    entries /= entries.sum(axis=1, keepdims=True)
    entries.setflags(write=False)
    return ProjectionMatrix(entries=entries, src=src, dst=dst, kernel=kernel)


def apply_downsample(P: ProjectionMatrix, image) -> np.ndarray:
    """Downsample one rasterised image (a vector of ``P.d_high`` values)."""
    x = np.asarray(image, dtype=float)
    if x.ndim != 1 or x.shape[0] != P.d_high:
        raise ValueError(f"expected a vector of length {P.d_high}, got shape {x.shape}")
    return P.entries @ x


def downsample_images(P: ProjectionMatrix, images) -> np.ndarray:
    """Downsample a stack of rasterised images given as rows of an ``(N, d_high)`` array."""
    X = np.asarray(images, dtype=float)
    if X.ndim != 2 or X.shape[1] != P.d_high:
        raise ValueError(f"expected shape (N, {P.d_high}), got {X.shape}")
    return X @ P.entries.T
