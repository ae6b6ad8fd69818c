from __future__ import annotations

import numpy as np
import pytest

from crossscale.learning import ImageSet
from crossscale.projection import ImageGeometry


def random_orthonormal(rng, d, k):
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return Q


def planted_set(rng, geometry, dim, n=None, noise=0.0, label=None):
    """A rank-``dim`` affine image set (plus optional isotropic noise)."""
    n = n or 3 * dim + 5
    basis = rng.standard_normal((dim, geometry.pixels))
    coeffs = rng.standard_normal((n, dim))
    X = 100.0 + coeffs @ basis + noise * rng.standard_normal((n, geometry.pixels))
    return ImageSet(geometry, X, class_label=label)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


G = ImageGeometry


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
