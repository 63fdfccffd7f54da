"""Render a synthetic lenticular scan from an RGB image and look at what the film records.

Each lenticule spreads the red, green and blue light of one image column over
three sub-bands of a black-and-white frame, with a dark line between lenticules.
"""
import os

import numpy as np

from _common import out_dir
from lenticolor.images import write_gray16, write_rgb16
from lenticolor.raster import write_grid
from lenticolor.simulate import SimParams, random_source, render_scan

out = out_dir("simulate")

src = random_source(256, 384, seed=1)
params = SimParams(mean_width=16, tilt=0.6, noise_sigma=0.01, seed=1)
scene = render_scan(src, params)

g = scene.truth_grid
print(f"source {src.shape}, scan {scene.scan.shape}, {g.M} boundaries")
print(f"lenticule spacing {np.diff(g.t).min():.2f}..{np.diff(g.t).max():.2f} px (5% drift)")
print(f"tilt {params.tilt} deg shears each line by {(g.b - g.t)[0]:.2f} px top to bottom")

# one scan row: three plateaus per lenticule, a dip at every boundary
row = scene.scan[0, int(g.t[3]):int(g.t[5]) + 1]
print("row 0 across two lenticules:", np.round(row, 2))

write_rgb16(os.path.join(out, "source.png"), src)
write_gray16(os.path.join(out, "scan.png"), scene.scan)
write_grid(os.path.join(out, "truth.lgrid"), g)
