"""Map lenticular RGB to Adobe RGB with the stored matrix and take it apart."""
import numpy as np

from _common import out_dir
from lenticolor import colorspace as cs

out_dir("color")
m = cs.LENTICULAR_TO_ADOBE
print("stored matrix:\n", m)
white = cs.apply_matrix(np.ones(3), m, clamp=False)
print("lenticular white ->", np.round(white, 3), "-> clamped", cs.apply_matrix(np.ones(3), m))

# the matrix is a chain: lenticular RGB -> XYZ -> cone space, white scaling, -> XYZ -> Adobe RGB
adapt = cs.adaptation_to_adobe()
print("adaptation sends the lenticular white to", np.round(adapt @ cs.LENTICULAR_WHITE, 4))
A = cs.recover_step_a()
print("implied RGB -> XYZ step maps (1,1,1) to", np.round(A @ np.ones(3), 3),
      "vs whitepoint", cs.LENTICULAR_WHITE)

img = np.random.default_rng(0).uniform(size=(4, 4, 3))
raw = cs.apply_matrix(img, m, clamp=False)
print(f"{cs.out_of_gamut(raw)} of 16 random pixels leave the Adobe gamut before clamping")
