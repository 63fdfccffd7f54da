"""Run the command line tool on a small batch, including one broken file."""
import glob
import json
import os

from _common import out_dir
from lenticolor.cli import main
from lenticolor.images import write_gray16
from lenticolor.simulate import SimParams, random_source, render_scan

d = out_dir("batch")
scans = os.path.join(d, "scans")
os.makedirs(scans, exist_ok=True)
for seed in range(3):
    sc = render_scan(random_source(256, 384, seed), SimParams(seed=seed, tilt=0.4 * (seed - 1)))
    write_gray16(os.path.join(scans, f"frame{seed}.png"), sc.scan)
with open(os.path.join(scans, "frame9.png"), "wb") as f:
    f.write(b"\x89PNG truncated")

code = main(["pipeline", os.path.join(scans, "*.png"), "-o", os.path.join(d, "out"), "--save-overlay"])
print("exit status", code, "(1: at least one image failed, the others still finished)")
for p in sorted(glob.glob(os.path.join(d, "out", "*.report.json"))):
    rep = json.load(open(p))
    if rep["status"] == "ok":
        print(f"{os.path.basename(p)}: {rep['boundaries']} boundaries, output {rep['output_shape']}, "
              f"{rep['timings']['total']:.2f} s")
    else:
        print(f"{os.path.basename(p)}: {rep['error']}")

# the stages also run one at a time
z, g = os.path.join(d, "z.lfr"), os.path.join(d, "g.lgrid")
main(["detect", os.path.join(scans, "frame0.png"), "-o", z])
main(["fit", z, "-o", g])
