"""
==========
Quickstart
==========

Train one denoising autoencoder per room on synthetic fingerprints and
locate a few held-out samples by picking the room whose autoencoder
reconstructs them best.
"""

# %%
# Synthetic fingerprints
# ----------------------
#
# Each room gets a cluster centre in the six-feature space; samples are
# spread around it and alternate between two phones.

import numpy as np

from daepos import dataset, ensemble, metrics, nn

fps = dataset.synth_generate(n_spaces=4, per_space=200, seed=0)
split = dataset.combine_and_split(dataset.by_phone(fps), ratio=0.8, seed=0)
print(split.counts())

# %%
# Training
# --------
#
# Features are min-max scaled with bounds fitted on the training rows
# only. Every room's autoencoder sees its own rows with half the entries
# knocked out at random and learns to restore them.

Xtr, Xte = split.normalized()
per_space = {s: Xtr[split.y_train == s.index] for s in split.spaces}
config = nn.TrainConfig(max_epochs=200, early_stop_patience=20, rng_seed=0)
model = ensemble.train_ensemble(per_space, config, p_loss=0.5, normalizer=split.normalizer)

# %%
# One fingerprint at a time
# -------------------------

for x, true in zip(Xte[:5], split.y_test[:5]):
    space, post = ensemble.predict(model, x)
    print(f"true={split.spaces[true].name:12s} predicted={space.name:12s} "
          f"p={post.probs[space.index]:.3f} losses={np.round(post.losses, 3)}")

# %%
# Whole test set, clean and with 50% of entries lost

for p_loss in (0.0, 0.5):
    X = ensemble.corrupt(Xte, p_loss, np.random.default_rng(1))
    pred, _ = ensemble.predict_batch(model, X)
    rep = metrics.report(metrics.confusion(split.y_test, pred, len(split.spaces)))
    print(f"p_loss={p_loss}: accuracy={rep.accuracy:.3f} macro F1={rep.macro_f1:.3f}")

# %%
# Models round-trip exactly through a directory of text files.

import tempfile

with tempfile.TemporaryDirectory() as tmp:
    ensemble.save(model, tmp)
    assert ensemble.load(tmp) == model
