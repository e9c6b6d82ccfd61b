"""
Training a field on a simulated panoramic image
===============================================

A small run on a 32 x 32 x 16 phantom.  The multi-head field maps an axial
position to a whole column of intensities; reconstruction queries it on the
axial voxel grid and stacks the columns.
"""

import time

from oral_nexf import config
from oral_nexf.experiment import run
from oral_nexf.training import smoothed

settings = config.load("desk")
settings.set("volume.dims", (32, 32, 16))
settings.set("geometry.segments", 72)
settings.set("train.iterations", 1500)
settings.set("train.lr_switch", 1000)

t0 = time.time()
outcome = run(settings, callback=lambda it, loss, lr, model: print(f"iter {it:5d} loss {loss:10.1f}"))
print(f"trained in {time.time() - t0:.0f}s")
print("loss by 500-iteration window", smoothed(outcome.result.losses, 500).round(1))
print(outcome.report.to_text())
