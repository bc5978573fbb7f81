"""
Sensitivity maps from the calibration region
============================================

Estimate coil maps from the fully sampled ACS band alone and compare them with
the simulated truth.
"""

# %%
import numpy as np

from contextrecon import ForwardModel, estimate_maps, make_mask, mvue, psnr
from contextrecon.espirit import _gauge_fix
from contextrecon.phantom import generate_dataset

rec = generate_dataset(1, seed=3, grid=(64, 64), num_coils=4)[0]
mask = make_mask("uniform1d", 64, 64, accel=4, acs_fraction=0.25, seed=0)
y = ForwardModel(rec.maps, mask).forward(rec.image)
est = estimate_maps(y, mask=mask)

# %%
# Maps are defined up to a common phase, so both sets are rotated to make the
# first coil real before comparing magnitudes over the object.
support = (abs(rec.image) > 0.1 * abs(rec.image).max()) & (est.power() > 0)
truth = _gauge_fix(rec.maps.maps)
for c in range(4):
    r = np.corrcoef(abs(est.maps[c][support]), abs(truth[c][support]))[0, 1]
    print("coil %d magnitude correlation %.5f" % (c, r))

# %%
# Reconstructing with estimated instead of true maps changes little.
x_true = mvue(y, rec.maps)
x_est = mvue(y, est)
print("zero-filled MVUE, true maps %.2f dB, estimated maps %.2f dB"
      % (psnr(abs(rec.image), abs(x_true)), psnr(abs(rec.image), abs(x_est))))
