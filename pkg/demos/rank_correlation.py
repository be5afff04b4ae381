"""
=================================
Consistency of repeated recordings
=================================

Rank correlations between measurement series taken on different days.
High values mean the fingerprint fields keep their relative order, so a
model trained on one day stays usable on the next.
"""

# %%
# Three synthetic days: the second is a noisy copy of the first, the third
# is unrelated.

import tempfile
from pathlib import Path

import numpy as np

from daepos import dataset, experiments, metrics

rng = np.random.default_rng(0)
base = rng.uniform([-110, -15, -5, 0, 0, -120], [-70, -5, 25, 15, 15, -80], (50, 6))
days = {
    "day1": base,
    "day2": base + rng.normal(0, 1.0, base.shape),
    "day3": rng.uniform([-110, -15, -5, 0, 0, -120], [-70, -5, 25, 15, 15, -80], (50, 6)),
}

# %%
# The fields are flattened in row order before ranking, so the spread
# between fields (dBm versus dB) dominates and all pairs correlate.

with tempfile.TemporaryDirectory() as tmp:
    paths = []
    for name, rows in days.items():
        fps = [
            dataset.Fingerprint("20200101000000", "1", 1, 0, 256,
                                float(r[0]), float(r[1]), float(r[2]), int(r[3]), int(r[4]), float(r[5]))
            for r in rows
        ]
        path = Path(tmp) / f"{name}.csv"
        dataset.write_csv(fps, path)
        paths.append(path)
    result = experiments.run_validation(paths)
print(result.to_csv())

# %%
# Ranking a single field across samples gives a sharper picture.

for a, b in (("day1", "day2"), ("day1", "day3")):
    print(a, b, "RSRP spearman", round(metrics.spearman(days[a][:, 0], days[b][:, 0]), 3),
          "kendall", round(metrics.kendall(days[a][:, 0], days[b][:, 0]), 3))
