"""Blocks, DCT descriptors and the label similarity test.

Run: python demos/00_blocks_and_similarity.py
"""

import numpy as np

from mrfbg.blocks import Label, NodeCoord, dct2, descriptors, idct2, zigzag_indices
from mrfbg.similarity import correlation, mad, similar

rng = np.random.default_rng(0)
node = NodeCoord(0, 0)

# A smooth 16x16 patch puts almost all of its energy in a few low-frequency coefficients.
yy, xx = np.mgrid[0:16, 0:16]
patch = 120 + 30 * np.cos(xx / 5.0) + 10 * np.sin(yy / 7.0)
coeffs = dct2(patch)
rows, cols = zigzag_indices(16)
energy = coeffs[rows, cols] ** 2
print("share of energy in the first 4 zigzag coefficients: %.4f" % (energy[:4].sum() / energy.sum()))
print("round-trip error:", np.abs(idct2(coeffs) - patch).max())
print("descriptor (D=4):", descriptors(patch[None, None, :, :, None], 4)[0, 0].round(1))

# Similarity: correlation must exceed 0.8 and MAD stay below 3 gray levels.
a = rng.integers(30, 220, (16, 16, 1)).astype(np.uint8)
cases = {
    "sensor noise +-2": np.clip(a.astype(int) + rng.integers(-2, 3, a.shape), 0, 255),
    "brightness +10": np.clip(a.astype(int) + 10, 0, 255),
    "different texture": rng.integers(30, 220, a.shape),
}
la = Label.from_block(node, a)
for name, b in cases.items():
    lb = Label.from_block(node, b.astype(np.uint8))
    print(f"{name:18s} corr={correlation(la, lb):6.3f} mad={mad(la, lb):6.2f} similar={similar(la, lb)}")

# Flat blocks have no defined correlation; they compare by mean alone.
flat = Label.from_block(node, np.full((16, 16, 1), 90, np.uint8))
print("flat vs flat+2:", similar(flat, Label.from_block(node, np.full((16, 16, 1), 92, np.uint8))))
print("flat vs textured:", similar(flat, la))
