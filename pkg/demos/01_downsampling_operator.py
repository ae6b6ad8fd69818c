"""
The downsampling operator and its nullspace
===========================================

Builds the linear operator that turns a 10x10 image into a 5x5 one,
then looks at the two objects derived from it: the reverse projection
and the basis of corrections that downsampling cannot see.
"""

import numpy as np

from crossscale import ImageGeometry, build_projection
from crossscale.matching import prepare_correction_model

# a 25 x 100 matrix, one row per low-resolution pixel
P = build_projection(ImageGeometry(10, 10), ImageGeometry(5, 5), "bicubic")
print("P shape:", P.shape)
print("row sums within", np.abs(P.entries.sum(axis=1) - 1).max(), "of 1")
print("most negative weight (bicubic side lobe):", P.entries.min().round(4))

# the weights feeding low-resolution pixel (2, 2), laid out on the source grid
print(np.round(P.entries[2 * 5 + 2].reshape(10, 10), 3))

cm = prepare_correction_model(P)
print("reverse projection:", cm.reverse.shape, " nullspace basis:", cm.ambiguity_basis.shape)
print("|P P_R - I| =", np.abs(P.entries @ cm.reverse - np.eye(25)).max())

# any image splits into a part fixed by its low-resolution version and a
# part invisible to the operator
rng = np.random.default_rng(0)
y = rng.uniform(0, 255, 100)
visible = cm.reverse @ (P.entries @ y)
hidden = y - visible
print("|P hidden| =", np.abs(P.entries @ hidden).max())
coords = cm.ambiguity_basis.T @ hidden
print("hidden part lies in the nullspace:", np.allclose(cm.ambiguity_basis @ coords, hidden))
