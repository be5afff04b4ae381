"""
================================
Accuracy as signal loss increases
================================

Sweep the test-time loss probability and compare the autoencoder ensemble
with tuned k-NN and SVM baselines trained on the same partition.
"""

# %%
# A shared config drives data, training and the sweep grid. The grids are
# trimmed here so the script finishes in well under a minute.

from daepos import experiments

config = experiments.ExperimentConfig(
    synth={"n_spaces": 6, "per_space": 150, "noise": 0.05},
    seed=3,
    max_epochs=300,
    folds=3,
    knn_grid=[{"k": k} for k in (1, 5, 9)],
    svm_grid=[{"C": 10.0, "gamma": g} for g in (1.0, 10.0)],
    sweep_step=0.1,
    sweep_stop=0.9,
)
split, _ = experiments.load_split(config)
trained = experiments.train_methods(split, config)
print("chosen hyperparameters:", trained.chosen)

# %%
# Every method sees the same corrupted test matrix at each step.

result = experiments.run_ploss_sweep(config, trained)
p, _ = result.accuracy("dae")
print("p_loss " + " ".join(f"{v:5.2f}" for v in p))
for method in config.methods:
    _, acc = result.accuracy(method)
    print(f"{method:6s} " + " ".join(f"{a:5.3f}" for a in acc))
