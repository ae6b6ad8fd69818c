"""Cross-resolution matching of linear appearance subspaces.

A subspace learnt from low-resolution images is mapped into a
high-resolution image space through a known downsampling operator and
then rotated, within the operator's nullspace, to best agree with a
high-resolution reference subspace.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .projection import (
    ImageGeometry,
    KernelKind,
    ProjectionMatrix,
    apply_downsample,
    build_projection,
    downsample_images,
)
from .linalg import (
    RankDeficientError,
    householder_qr,
    nullspace_basis,
    orthonormalize,
    paired_alignment,
    principal_angles,
    reverse_projection,
)
from .learning import (
    DegenerateSpectrumWarning,
    ImageSet,
    SubspaceModel,
    choose_dimension,
    downsample_set,
    estimate_subspace,
)
from .matching import (
    CorrectionModel,
    CorrectionModelCache,
    DegenerateMatchError,
    MatchMethod,
    MatchResult,
    PairwiseMatcher,
    constrained_reconstruct,
    joint_basis,
    match,
    naive_match,
    naive_reconstruct,
    prepare_correction_model,
)
from .evaluation import (
    SeparationReport,
    SimilarityMatrix,
    SweepConfig,
    add_gaussian_noise,
    class_separation,
    classification_accuracy,
    classify,
    generate_synthetic_classes,
    improvement_ratios,
    relative_to_baseline,
    run_noise_sweep,
    run_scale_sweep,
    similarity_matrix,
)
from .dataset_io import (
    FormatError,
    export_modes,
    load_image_sets,
    load_model,
    save_image_sets,
    save_model,
    write_report,
)
