"""Synthetic labelled spectra with label noise and adulterated test units.

Spectra are a smooth wavy baseline plus class-dependent offsets on a few
relevant channels plus independent channel noise. Some irrelevant channels
can be made to track a relevant one, so that they look discriminative
marginally but carry nothing extra once the relevant channel is known.

Four adulterations can be appended to the test set, mirroring the ones used
on real food spectra: a channel shift, additive white noise, a single-channel
spike and a multiplicative slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSpectra

SHIFT = "shift"
NOISE = "noise"
SPIKE = "spike"
SLOPE = "slope"
RECIPE_KINDS = (SHIFT, NOISE, SPIKE, SLOPE)


@dataclass(frozen=True)
class OutlierRecipe:
    """One adulterated test unit.

    ``magnitude`` means: channels shifted for ``shift``; noise sd in units of
    the mean channel sd for ``noise``; spike height in units of that
    channel's sd for ``spike``; multiplicative constant for ``slope``.
    ``channel`` applies to spikes: an index, ``"relevant"`` or
    ``"irrelevant"`` (a random channel of that kind).
    """

    kind: str
    magnitude: float | None = None
    channel: int | str = "relevant"
    base_class: int | None = None

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ValueError(f"unknown outlier recipe {self.kind!r}")
        if self.magnitude is not None and self.magnitude < 0:
            raise ValueError("outlier magnitudes must be non-negative")

    @property
    def resolved_magnitude(self) -> float:
        if self.magnitude is not None:
            return float(self.magnitude)
        return {SHIFT: 15, NOISE: 2.0, SPIKE: 10.0, SLOPE: 1.2}[self.kind]


@dataclass(frozen=True)
class ContaminationSpec:
    label_noise_rate: float = 0.0
    outliers: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.label_noise_rate < 1.0:
            raise ValueError("label_noise_rate must lie in [0, 1)")


def adulteration_recipes(spike_channel="relevant", noise=None, spike=None, slope=None, shift=None):
    """The four standard adulterations, in the order shift, noise, spike, slope."""
    return (
        OutlierRecipe(SHIFT, shift),
        OutlierRecipe(NOISE, noise),
        OutlierRecipe(SPIKE, spike, channel=spike_channel),
        OutlierRecipe(SLOPE, slope),
    )


@dataclass(frozen=True)
class SimulationConfig:
    n_classes: int = 3
    n_train: int = 300
    n_test: int = 150
    n_channels: int = 30
    n_relevant: int = 4
    separation: float = 3.0
    noise_sd: float = 0.01
    baseline_level: float = 0.6
    baseline_amplitude: float = 0.1
    baseline_period: float = 40.0
    correlated_fraction: float = 0.2
    correlation: float = 0.6
    contamination: ContaminationSpec = field(default_factory=ContaminationSpec)
    seed: int = 0


@dataclass(frozen=True)
class GroundTruth:
    relevant: np.ndarray
    noisy_labels: np.ndarray
    outliers: np.ndarray
    outlier_kinds: tuple
    spike_channels: tuple = ()
    correlated: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def _class_sizes(n, G):
    sizes = np.full(G, n // G)
    sizes[: n % G] += 1
    return sizes


def simulate_contaminated(config: SimulationConfig | None = None):
    """Draw a training set and a test set with known contamination.

    Returns
    -------
    train, test : LabeledSpectra
    truth : GroundTruth
        Relevant channel indices, indices of training rows whose label was
        flipped, and indices of the adulterated test rows (appended last).
    """
    cfg = config or SimulationConfig()
    G, P, R = cfg.n_classes, cfg.n_channels, cfg.n_relevant
    if G < 1 or P < 1:
        raise ValueError("need at least one class and one channel")
    if not 0 <= R <= P:
        raise ValueError(f"n_relevant={R} must lie between 0 and n_channels={P}")
    if cfg.n_train < 2 * G or cfg.n_test < 0:
        raise ValueError("training set too small for the number of classes")
    if cfg.separation < 0 or cfg.noise_sd <= 0:
        raise ValueError("separation must be non-negative and noise_sd positive")
    spec = cfg.contamination
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    crng = np.random.default_rng(np.random.SeedSequence([cfg.seed, spec.seed, 1]))

    j = np.arange(P)
    baseline = cfg.baseline_level + cfg.baseline_amplitude * np.sin(
        2 * np.pi * j / cfg.baseline_period + rng.uniform(0, 2 * np.pi)
    )
    relevant = np.sort(rng.choice(P, size=R, replace=False))
    irrelevant = np.setdiff1d(j, relevant)
    offsets = np.zeros((G, P))
    levels = (np.arange(G) - (G - 1) / 2.0) * cfg.separation * cfg.noise_sd
    for r in relevant:
        offsets[:, r] = rng.permutation(levels)

    n_corr = int(round(cfg.correlated_fraction * irrelevant.size)) if R else 0
    correlated = np.sort(rng.choice(irrelevant, size=n_corr, replace=False)) if n_corr else np.empty(0, int)
    partner = {int(o): int(rng.choice(relevant)) for o in correlated}

    def draw(labels, gen):
        x = baseline + offsets[labels] + gen.normal(0.0, cfg.noise_sd, size=(labels.size, P))
        for o, r in partner.items():
            # irrelevant channel that tracks a relevant one; same marginal noise scale
            x[:, o] = baseline[o] + cfg.correlation * (x[:, r] - baseline[r]) + gen.normal(
                0.0, cfg.noise_sd * math.sqrt(1 - cfg.correlation**2), size=labels.size
            )
        return x

    y_train = np.repeat(np.arange(G), _class_sizes(cfg.n_train, G))
    y_test = np.repeat(np.arange(G), _class_sizes(cfg.n_test, G))
    x_train = draw(y_train, rng)
    x_test = draw(y_test, rng)

    n_flip = int(math.floor(spec.label_noise_rate * cfg.n_train + 1e-9))
    noisy = np.sort(crng.choice(cfg.n_train, size=n_flip, replace=False)) if n_flip else np.empty(0, int)
    observed = y_train.copy()
    for i in noisy:
        observed[i] = (y_train[i] + crng.integers(1, G)) % G if G > 1 else y_train[i]

    class_means = np.stack([x_train[y_train == g].mean(axis=0) for g in range(G)])
    channel_sd = x_train.std(axis=0)
    mean_sd = float(channel_sd.mean())

    rows, row_labels, kinds, spikes = [], [], [], []
    for rec in spec.outliers:
        g = int(crng.integers(G)) if rec.base_class is None else int(rec.base_class)
        base = draw(np.array([g]), crng)[0]
        mag = rec.resolved_magnitude
        if rec.kind == SHIFT:
            k = int(mag)
            if not 0 < k < P:
                raise ValueError(f"shift of {k} channels is invalid for {P} channels")
            out = np.concatenate([base[k:], class_means[g, P - k:]])
        elif rec.kind == NOISE:
            out = base + crng.normal(0.0, mag * mean_sd, size=P)
        elif rec.kind == SPIKE:
            ch = rec.channel
            if ch == "relevant":
                ch = int(crng.choice(relevant))
            elif ch == "irrelevant":
                plain = np.setdiff1d(irrelevant, correlated)
                ch = int(crng.choice(plain if plain.size else irrelevant))
            ch = int(ch)
            if not 0 <= ch < P:
                raise ValueError(f"spike channel {ch} out of range")
            out = base.copy()
            out[ch] += mag * channel_sd[ch]
            spikes.append(ch)
        else:
            if mag <= 0:
                raise ValueError("slope constant must be positive")
            out = base * mag
        rows.append(out)
        row_labels.append(g)
        kinds.append(rec.kind)

    n_clean = x_test.shape[0]
    if rows:
        x_test = np.vstack([x_test, np.stack(rows)])
        y_test = np.concatenate([y_test, row_labels])
    outliers = np.arange(n_clean, n_clean + len(rows))

    names = [f"class{g + 1}" for g in range(G)]
    axis = 1100.0 + 2.0 * j
    train = LabeledSpectra(x_train, observed, axis, "nm", names)
    test = LabeledSpectra(x_test, y_test, axis, "nm", names)
    truth = GroundTruth(
        relevant=relevant, noisy_labels=noisy, outliers=outliers, outlier_kinds=tuple(kinds),
        spike_channels=tuple(spikes), correlated=correlated,
    )
    return train, test, truth
