"""
Models, mode images and reports on disk
=======================================

Writes a small synthetic dataset, learns models from it, saves and
reloads one, exports the best-aligned mode pair as images and writes a
separation report.  Everything goes to a temporary folder.
"""

import tempfile
from pathlib import Path

import numpy as np

from crossscale import (
    ImageGeometry,
    class_separation,
    estimate_subspace,
    export_modes,
    generate_synthetic_classes,
    load_image_sets,
    load_model,
    match,
    save_image_sets,
    save_model,
    similarity_matrix,
    write_report,
)
from crossscale.evaluation import split_by_condition
from crossscale.learning import downsample_set
from crossscale.matching import default_cache

out = Path(tempfile.mkdtemp(prefix="crossscale-demo-"))
high, low = ImageGeometry(30, 30), ImageGeometry(6, 6)

manifest = save_image_sets(generate_synthetic_classes(3, 20, high, 3, seed=4), out / "data")
train, query = split_by_condition(load_image_sets(manifest))
cm = default_cache.get(high, low, "bicubic")
gallery = [estimate_subspace(downsample_set(s, cm.projection), 3) for s in train]
probes = [estimate_subspace(s, 3) for s in query]

save_model(gallery[0], out / "c00_low.model")
again = load_model(out / "c00_low.model")
print("model round trip bit-exact:", again.basis.tobytes() == gallery[0].basis.tobytes())

result = match(gallery[0], probes[0], "bicubic")
files = export_modes(result, probes[0].mean, cm.reverse @ gallery[0].mean, high, out / "modes" / "c00", count=1)
print("mode images:", [f.name for f in files])

reports = []
for method in ("naive", "constrained"):
    sm = similarity_matrix(gallery, probes, "bicubic", method)
    print(method, "\n", np.round(sm.values, 4))
    reports.append(class_separation(sm, method=method, kernel="bicubic", low_geometry=low, high_geometry=high))
write_report(reports, "csv", out / "separation.csv")
print((out / "separation.csv").read_text())
print("files written under", out)
