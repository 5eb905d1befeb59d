"""Seeded synthetic cohorts with the shape of a three-month diary study.

Each subject carries a latent severity ``z_t = trait + state_t`` where
``state_t`` is a stationary AR(1) process. Every feature column is an affine
function of ``z_t`` plus independent noise (loadings have mixed signs, so
some items rise with severity and others fall). The PHQ-2 label is
``clip(round(6 + label_scale * z_t + noise), 0, 12)``.

Missingness is block-wise per day: with probability ``q`` the whole day is
skipped (both blocks and the label), with probability ``r`` only the ESM block
is lost. ``q`` and ``r`` keep the 14:3 ratio between diary-only and extra ESM
loss, so the three feature views miss roughly 17%, 14% and 17% of days at the
default rate and average to ``missing_rate``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import (
    DEFAULT_COLUMNS,
    PHQ2_MAX,
    PHQ2_MIN,
    Cohort,
    FeatureSet,
    SubjectSeries,
    select_columns,
)
from .errors import InvalidConfig

START_DATE = np.datetime64("2021-03-01", "D")

# share of missing_rate lost as whole days vs. ESM-only days
_WHOLE_DAY_SHARE = 14 / 16
_ESM_ONLY_SHARE = 3 / 16


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 48
    n_days: int = 90
    missing_rate: float = 0.16
    ar_coefficient: float = 0.8
    noise_sd: float = 0.5
    seed: int = 0
    trait_sd: float = 0.7
    label_scale: float = 2.5

    def validate(self) -> None:
        if not 0 <= self.missing_rate < 1:
            raise InvalidConfig(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.n_subjects < 2:
            raise InvalidConfig("n_subjects must be at least 2")
        if self.n_days < 8:
            raise InvalidConfig("n_days must be at least 8")
        if not 0 < self.ar_coefficient < 1:
            raise InvalidConfig("ar_coefficient must be in (0, 1)")
        if not self.noise_sd > 0:
            raise InvalidConfig("noise_sd must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")


def _population_params(cfg: SynthConfig, n_features: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    signs = np.where(np.arange(n_features) % 3 == 1, -1.0, 1.0)
    loadings = signs * rng.uniform(0.6, 1.4, n_features)
    intercepts = rng.uniform(3.0, 7.0, n_features)
    scales = rng.choice([1.0, 2.0, 5.0], n_features)
    return loadings, intercepts, scales


def _simulate_subject(cfg: SynthConfig, index: int, loadings, intercepts, scales, esm_mask):
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, index)))
    phi = cfg.ar_coefficient
    innovation_sd = np.sqrt(1 - phi**2)
    state = np.empty(cfg.n_days)
    state[0] = rng.standard_normal()
    for t in range(1, cfg.n_days):
        state[t] = phi * state[t - 1] + innovation_sd * rng.standard_normal()
    z = cfg.trait_sd * rng.standard_normal() + state

    noise = cfg.noise_sd * rng.standard_normal((cfg.n_days, len(loadings)))
    feats = scales * (intercepts + np.outer(z, loadings) + noise)
    feats = np.round(feats, 3)

    label_noise = cfg.noise_sd * rng.standard_normal(cfg.n_days)
    labels = np.clip(np.round(6 + cfg.label_scale * z + label_noise), PHQ2_MIN, PHQ2_MAX)

    u = rng.random(cfg.n_days)
    whole = u < cfg.missing_rate * _WHOLE_DAY_SHARE
    esm_only = ~whole & (u < cfg.missing_rate * (_WHOLE_DAY_SHARE + _ESM_ONLY_SHARE))
    feats[whole] = np.nan
    feats[np.ix_(esm_only, esm_mask)] = np.nan
    labels[whole] = np.nan

    dates = START_DATE + np.arange(cfg.n_days)
    return dates, feats, labels


def generate_cohort(cfg: SynthConfig, columns: tuple[str, ...] = DEFAULT_COLUMNS) -> Cohort:
    """Generate a cohort; a pure function of ``cfg`` (and the column layout)."""
    cfg.validate()
    loadings, intercepts, scales = _population_params(cfg, len(columns))
    esm_cols = set(select_columns(columns, FeatureSet.INTRADAY_ESM))
    esm_mask = np.array([c in esm_cols for c in columns])
    width = len(str(cfg.n_subjects))
    subjects = []
    for i in range(cfg.n_subjects):
        dates, feats, labels = _simulate_subject(cfg, i, loadings, intercepts, scales, esm_mask)
        subjects.append(SubjectSeries(f"S{i + 1:0{width}d}", dates, feats, labels, columns))
    return Cohort(tuple(subjects), columns)


def missing_day_fraction(cohort: Cohort, fs: FeatureSet | None = None) -> float:
    """Fraction of calendar days without an available feature vector.

    Measured on raw data over each subject's first-to-last date span. With
    ``fs=None`` the three feature views are averaged.
    """
    if fs is None:
        views = list(FeatureSet)
        return float(np.mean([missing_day_fraction(cohort, v) for v in views]))
    missing = total = 0
    for s in cohort.subjects:
        v = s.view(fs)
        if len(v) == 0:
            continue
        span = int(v.days[-1] - v.days[0]) + 1
        total += span
        missing += span - int(v.available.sum())
    return missing / total if total else 0.0
