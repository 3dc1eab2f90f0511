"""
Five ways to summarize the normal set
=====================================

The inter-image branch attends to a bank built from training features.
This script builds each kind on the level-16 features and prints its size,
whether it keeps grid positions, and how close test patches land to it.
"""

# %%
import numpy as np

from fod import SyntheticSpec, build_bank_source, generate_dataset
from fod.banks import make_stack, quantize
from fod.features import extract_stack

ds = generate_dataset(SyntheticSpec(seed=0, n_train=16, n_test=8))
train_feats = extract_stack(ds.train, seed=0)[16]
test_feats = extract_stack(ds.test, seed=0)[16]
stack = make_stack(train_feats)
print("feature stack", stack.shape)

# %%
for kind in ("mean", "nearest", "coreset", "prototype", "codebook"):
    src = build_bank_source(kind, stack, seed=0, codebook_size=16)
    dists = []
    for seq in test_feats:
        bank = src.for_query(seq)
        d = np.linalg.norm(seq.features[:, None, :] - bank.features[None], axis=-1).min(axis=1)
        dists.append(d.mean())
    bank = src.for_query(test_feats[0])
    print(f"{kind:9s} entries={bank.size:4d} positions={'yes' if bank.positions is not None else 'no ':3s} "
          f"mean distance to nearest entry={np.mean(dists):.3f}")

# %%
# Prototype entries are unit vectors, so their distances are not comparable
# to the others; the codebook quantizes test features directly.
cb = build_bank_source("codebook", stack, seed=0, codebook_size=16).bank
q = quantize(test_feats[0], cb)
print("distinct codes used by one test image:", len(np.unique(q.features, axis=0)))
