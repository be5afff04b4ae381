"""One denoising autoencoder per symbolic space, classified by reconstruction loss.

Each space gets its own DAE trained only on that space's fingerprints,
with inputs randomly zeroed (simulated signal loss) and clean targets. At
test time every DAE reconstructs the sample; the space whose DAE does best
wins, and the losses are turned into a distribution with a softmax over
their reciprocals.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import nn
from .dataset import N_FEATURES, NormalizationParams, SpaceLabel

#: Hidden widths 256-64-16-64-256 around the 6-dimensional fingerprint.
DEFAULT_WIDTHS = (N_FEATURES, 256, 64, 16, 64, 256, N_FEATURES)
LOSS_FLOOR = 1e-6
FORMAT_VERSION = 1


def default_architecture() -> list[nn.LayerSpec]:
    return nn.chain(DEFAULT_WIDTHS, hidden="relu", output="sigmoid")


def corrupt(x, p_loss: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each entry independently with probability ``p_loss``.

    Works on a single vector or a batch; the input array is not modified.
    """
    if not 0.0 <= p_loss <= 1.0:
        raise ValueError(f"p_loss must lie in [0, 1], got {p_loss}")
    x = np.asarray(x, dtype=np.float64)
    if p_loss == 0.0:
        return x.copy()
    if p_loss == 1.0:
        return np.zeros_like(x)
    mask = rng.random(x.shape) >= p_loss
    return x * mask


def corruptor(p_loss: float):
    """``corrupt`` bound to ``p_loss`` in the shape :func:`nn.train` expects."""
    if not 0.0 <= p_loss <= 1.0:
        raise ValueError(f"p_loss must lie in [0, 1], got {p_loss}")
    return lambda batch, rng: corrupt(batch, p_loss, rng)


@dataclass(frozen=True)
class PosteriorDistribution:
    probs: np.ndarray
    losses: np.ndarray


@dataclass(frozen=True)
class EnsembleModel:
    spaces: tuple
    daes: tuple
    normalizer: Optional[NormalizationParams] = None
    train_p_loss: float = 0.5

    def __post_init__(self):
        if len(self.spaces) < 2 or len(self.daes) != len(self.spaces):
            raise ValueError("an ensemble needs n >= 2 spaces and exactly one DAE per space")
        layers = self.daes[0].layers
        if any(d.layers != layers for d in self.daes):
            raise ValueError("all DAEs must share one architecture")
        if [s.index for s in self.spaces] != list(range(len(self.spaces))):
            raise ValueError("space indices must be 0..n-1 in order")

    @property
    def n_spaces(self) -> int:
        return len(self.spaces)

    def __eq__(self, other):
        return (
            isinstance(other, EnsembleModel)
            and self.spaces == other.spaces
            and self.train_p_loss == other.train_p_loss
            and self.normalizer == other.normalizer
            and all(a == b for a, b in zip(self.daes, other.daes))
        )

    __hash__ = None


def space_seed(base_seed: int, index: int) -> int:
    """Per-DAE seed derived from the run seed and the space index."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _train_one(data, arch, config: nn.TrainConfig, p_loss: float, index: int):
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    seed = space_seed(config.rng_seed, index)
    cfg = replace(config, rng_seed=seed)
    if int(X.shape[0] * cfg.val_fraction) == 0:
        # too few samples for a validation slice: train without early stopping
        cfg = replace(cfg, val_fraction=0.0)
    net = nn.init_network(arch, seed)
    return nn.train(net, X, X, cfg, corruptor(p_loss))


def train_ensemble(
    per_space_data: Mapping[SpaceLabel, np.ndarray],
    config: nn.TrainConfig = nn.TrainConfig(),
    p_loss: float = 0.5,
    arch: Optional[Sequence[nn.LayerSpec]] = None,
    normalizer: Optional[NormalizationParams] = None,
    n_jobs: int = 1,
    return_histories: bool = False,
):
    """Train one DAE per space on that space's (normalised) feature vectors.

    Parallel (``n_jobs > 1``) and serial training give identical models
    because every DAE draws from its own derived seed.
    """
    arch = list(arch) if arch is not None else default_architecture()
    if arch[0].input_dim != N_FEATURES or arch[-1].output_dim != N_FEATURES:
        raise nn.ConfigurationError(f"DAE must map {N_FEATURES} features back to {N_FEATURES}")
    if not 0.0 <= p_loss <= 1.0:
        raise ValueError(f"p_loss must lie in [0, 1], got {p_loss}")
    spaces = sorted(per_space_data)
    for s in spaces:
        X = np.atleast_2d(np.asarray(per_space_data[s]))
        if X.shape[0] == 0 or X.size == 0:
            raise ValueError(f"space {s.name!r} has no training samples")
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"space {s.name!r}: expected {N_FEATURES} features, got {X.shape[1]}")

    jobs = [(per_space_data[s], arch, config, p_loss, s.index) for s in spaces]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda job: _train_one(*job), jobs))
    else:
        results = [_train_one(*job) for job in jobs]

    model = EnsembleModel(
        spaces=tuple(spaces),
        daes=tuple(net for net, _ in results),
        normalizer=normalizer,
        train_p_loss=p_loss,
    )
    if return_histories:
        return model, [h for _, h in results]
    return model


def reconstruction_losses(model: EnsembleModel, x) -> np.ndarray:
    """BCE of each DAE's reconstruction against ``x``.

    ``x`` is already normalised (and, for robustness tests, already
    corrupted). A single vector gives shape ``(n,)``; a batch ``(m, n)``.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
    losses = np.column_stack([nn.bce_rows(nn.forward(dae, X).post[-1], X) for dae in model.daes])
    return losses[0] if single else losses


def posterior(losses) -> PosteriorDistribution:
    """Softmax of reciprocal losses.

    Losses are floored at ``LOSS_FLOOR`` and the largest reciprocal is
    subtracted before exponentiating, so tiny losses cannot overflow.
    """
    L = np.asarray(losses, dtype=np.float64)
    if L.shape[-1] < 1:
        raise ValueError("need at least one loss")
    if np.any(L < 0) or not np.all(np.isfinite(L)):
        raise ValueError("losses must be finite and non-negative")
    s = 1.0 / np.maximum(L, LOSS_FLOOR)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return PosteriorDistribution(e / e.sum(axis=-1, keepdims=True), L)


def predict(model: EnsembleModel, x) -> tuple[SpaceLabel, PosteriorDistribution]:
    """Most likely space for one normalised fingerprint (ties go to the lower index)."""
    losses = reconstruction_losses(model, x)
    if losses.ndim != 1:
        raise ValueError("predict takes one fingerprint; use predict_batch for many")
    return model.spaces[int(np.argmin(losses))], posterior(losses)


def predict_batch(model: EnsembleModel, X) -> tuple[np.ndarray, PosteriorDistribution]:
    """Predicted space indices for every row of ``X``, plus the posteriors."""
    losses = np.atleast_2d(reconstruction_losses(model, X))
    return np.argmin(losses, axis=1), posterior(losses)


def predict_raw(model: EnsembleModel, raw) -> tuple[SpaceLabel, PosteriorDistribution]:
    """Like :func:`predict` but normalises the raw reading with the embedded scaler."""
    if model.normalizer is None:
        raise ValueError("model has no embedded normaliser")
    return predict(model, model.normalizer(raw))


# ---------------------------------------------------------------------------
# serialisation: a directory with ensemble.json plus one text file per DAE


def save(model: EnsembleModel, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for s, dae in zip(model.spaces, model.daes):
        name = f"dae_{s.index:02d}.txt"
        nn.save(dae, d / name)
        files.append(name)
    meta = {
        "format": "daepos-ensemble",
        "version": FORMAT_VERSION,
        "spaces": [s.name for s in model.spaces],
        "train_p_loss": float(model.train_p_loss).hex(),
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "daes": files,
    }
    (d / "ensemble.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return d


def load(directory) -> EnsembleModel:
    d = Path(directory)
    meta = json.loads((d / "ensemble.json").read_text(encoding="utf-8"))
    if meta.get("format") != "daepos-ensemble" or meta.get("version") != FORMAT_VERSION:
        raise ValueError(f"{d} does not hold a supported ensemble")
    norm = meta.get("normalizer")
    return EnsembleModel(
        spaces=tuple(SpaceLabel(i, n) for i, n in enumerate(meta["spaces"])),
        daes=tuple(nn.load(d / f) for f in meta["daes"]),
        normalizer=NormalizationParams.from_dict(norm) if norm else None,
        train_p_loss=float.fromhex(meta["train_p_loss"]),
    )
