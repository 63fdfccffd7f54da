"""Fill the two missing channels of every stripe column and compare the fillers."""
import numpy as np

from _common import out_dir
from lenticolor.demosaic import analytic_weights, build_neighbor_index, fill_baseline, fill_convex
from lenticolor.raster import StripeImage
from lenticolor.simulate import SimParams, random_source, render_scan, resample_to_source, round_trip_error

out_dir("demosaic")

idx = build_neighbor_index(12)
print("column 4 borrows red from columns", idx.cols[4, 0, :idx.count[4, 0]].tolist())
w = analytic_weights(build_neighbor_index(30), "convex-cubic")
print("convex-cubic weights at column 13, red:", np.round(w[13, 0], 3).tolist())

# a step edge: cubic rings past the data, a convex combination cannot
v = np.full((1, 30), 0.2)
v[0, 15:] = 0.8
s = StripeImage(v, (0, 1, 2))
print(f"step edge red range: cubic {fill_baseline(s, 'cubic')[..., 0].min():.3f}.."
      f"{fill_baseline(s, 'cubic')[..., 0].max():.3f}, convex {fill_convex(s)[..., 0].min():.3f}.."
      f"{fill_convex(s)[..., 0].max():.3f}")

scene = render_scan(random_source(256, 512, seed=7), SimParams(seed=7))
stripe = scene.truth_stripe
for name, rgb in (("nearest", fill_baseline(stripe, "nearest")), ("linear", fill_baseline(stripe, "linear")),
                  ("cubic", fill_baseline(stripe, "cubic")), ("convex", fill_convex(stripe))):
    psnr = round_trip_error(scene, resample_to_source(rgb, scene.truth_grid))["psnr"]
    print(f"{name:8s} {psnr:.2f} dB against the source")
