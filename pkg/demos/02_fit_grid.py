"""Find the lenticule boundaries in a scan: likelihood map, width, then the grid fit."""
import os

import numpy as np

from _common import out_dir
from lenticolor.detect import detect_ridges, estimate_width
from lenticolor.fit import fit_grid
from lenticolor.images import write_rgb16
from lenticolor.pipeline import overlay
from lenticolor.simulate import SimParams, grid_error, random_source, render_scan

out = out_dir("fit")
scene = render_scan(random_source(512, 512, seed=4), SimParams(tilt=-0.8, seed=4))

# every pixel scores how much the scan around it looks like a thin dark valley
z = detect_ridges(scene.scan)
print(f"likelihood map {z.shape}, range {z.min():.2f}..{z.max():.2f}")

# the valleys repeat, so the column profile of z has a dominant period
w = estimate_width(z)
print(f"estimated width {w.w_hat:.3f} px (truth {np.diff(scene.truth_grid.t).mean():.3f}), "
      f"peak confidence {w.confidence:.1f}")

# straight lines, nearly even spacing, pulled onto the valleys of z
grid, rep = fit_grid(z, w)
err = grid_error(scene.truth_grid, grid)
print(f"{grid.M} boundaries after {rep.iterations} iterations, objective {rep.objective:.1f}")
print(f"endpoint error: rms {err['rms']:.3f} px, worst {err['max']:.3f} px")

write_rgb16(os.path.join(out, "overlay.png"), overlay(scene.scan, grid))
