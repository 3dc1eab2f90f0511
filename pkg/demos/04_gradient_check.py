"""
Checking hand-written gradients
===============================

Every operation in the tensor library carries its own backward rule.  The
finite-difference checker compares them against central differences, and
stop-gradient nodes are frozen at their recorded values while it perturbs.
"""

# %%
import numpy as np

from fod import forward
from fod.banks import ReferenceBank
from fod.correlation import GridGeometry
from fod.features import FeatureSequence
from fod.gradcheck import gradient_check
from fod.model import LevelModel, ModelConfig
from fod.training import LossWeights, phase_losses

rng = np.random.default_rng(0)
geom = GridGeometry(2, 2)
x = FeatureSequence(rng.uniform(-1, 1, (4, 5)), geom, 8)
bank = ReferenceBank(rng.uniform(-1, 1, (3, 5)), geom.positions()[:3], "mean")
model = LevelModel(ModelConfig(5, 5, d_model=4, heads=2, layers=2), seed=0)

# %%
for phase in (0, 1):
    report = gradient_check(lambda: phase_losses(forward(x, bank, model), LossWeights())[phase], model.params())
    print(f"phase {phase + 1}: {'ok' if report.ok else 'MISMATCH'}, "
          f"{sum(p.data.size for p in model.params())} coordinates checked, {len(report.mismatches)} mismatches")
