"""Short discovery run on Example-1 data.

Trains three seeds at once on the multiaxial training path and reports the
loss reduction, the learned output weights and the uniaxial test error of the
seed with the lowest final loss. The default of 300 epochs takes a few
minutes; pass a larger number (3000 is the full setting) as the first argument.
"""

import sys

import numpy as np

from icann import datasets as ds
from icann.drivers import surrogate_training_path, uniaxial_test_driver, uniaxial_test_stretch
from icann.trainer import TrainConfig, params_to_model, relative_rmse, train_seeds, weight_report

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
am = ds.example1()
data = ds.normalize(ds.generate_reference(am, surrogate_training_path()))
cfg = TrainConfig(epochs=epochs, stagger_schedule=[None])


def progress(stage, done, vals):
    if done % 100 == 0:
        print(f"epoch {done:5d}  losses " + "  ".join(f"{v:.3e}" for v in vals))


runs = train_seeds([data], cfg, seeds=(0, 1, 2), progress=progress)
k = int(np.argmin([h[-1][-1] for _, h in runs]))
params, hist = runs[k]
print(f"\nseed {k}: loss {hist[0][0]:.3e} -> {hist[-1][-1]:.3e}")
print(weight_report(params))

t, lam = uniaxial_test_stretch()
_, ref = uniaxial_test_driver(am.model(), t, lam)
_, pred = uniaxial_test_driver(params_to_model(params), t, lam)
print(f"uniaxial test RMSE {relative_rmse(pred[:, 0, 0] * data.s_max, ref[:, 0, 0]):.2%} of max |S11|")
