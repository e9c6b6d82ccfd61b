"""
Ablations
=========

Switch off one ingredient at a time and compare on the same phantom and seed:

* M: a single-head field over (x, y, z) instead of one head per slice
* D: a fixed sampling rate of 1 instead of a random rate per ray
* S: the Beer-Lambert line integral instead of the soft law

The full desk profile takes a while per variant; the iteration count below is
cut down for a quick look.
"""

from oral_nexf import config
from oral_nexf.experiment import run, variant
from oral_nexf.volume import generate_phantom

settings = config.load("desk")
settings.set("train.iterations", 2000)
settings.set("train.lr_switch", 500)
volume = generate_phantom(settings.phantom_spec(), settings.dims)

for letters in ("", "M", "D", "S"):
    report = run(variant(settings, letters), volume).report
    print(f"{letters or 'full':4s} psnr {report.psnr:6.2f}  ssim {report.ssim:.3f}  "
          f"dice {report.dice:.3f}  overall {report.overall:6.2f}")
