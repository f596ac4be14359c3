"""Chirp-plus-ringdown time series, CSV I/O and windowed train/test datasets."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

PEAK = 0.8


@dataclass(frozen=True)
class WaveformSpec:
    setting_id: int = 1
    total_samples: int = 300
    merger_index: int = 200
    base_frequency: float = 0.02
    amplitude_floor: float = 1.0
    ringdown_frequency: float = 0.12
    ringdown_decay: float = 15.0
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.merger_index < self.total_samples:
            raise ConfigurationError(
                f"merger index {self.merger_index} must lie inside (0, {self.total_samples})")
        if self.amplitude_floor <= 0:
            raise ConfigurationError("amplitude floor must be positive")
        if self.ringdown_decay <= 0:
            raise ConfigurationError("ringdown decay must be positive")


SETTINGS = {
    1: WaveformSpec(1, merger_index=200, base_frequency=0.02, ringdown_frequency=0.12, ringdown_decay=15.0),
    2: WaveformSpec(2, merger_index=180, base_frequency=0.03, ringdown_frequency=0.16, ringdown_decay=10.0),
    3: WaveformSpec(3, merger_index=220, base_frequency=0.015, ringdown_frequency=0.10, ringdown_decay=20.0),
}


def default_spec(setting_id: int, **overrides) -> WaveformSpec:
    if setting_id not in SETTINGS:
        raise ConfigurationError(f"setting must be one of {sorted(SETTINGS)}, got {setting_id}")
    return replace(SETTINGS[setting_id], **overrides)


def synthesize(spec: WaveformSpec) -> np.ndarray:
    """Inspiral with ``a ~ tau^-1/4``, ``f ~ tau^-3/8`` (``tau = t_c - t + eps``), then a
    damped ringdown that inherits the amplitude and phase at ``t_c``. Rescaled so the
    peak magnitude is 0.8.

    The generator is deterministic; ``spec.seed`` is carried for bookkeeping only.
    """
    spec.validate()
    tc, eps = spec.merger_index, spec.amplitude_floor
    t_insp = np.arange(tc + 1, dtype=np.float64)
    tau = tc - t_insp + eps
    amp = tau ** -0.25
    phase = np.cumsum(2.0 * math.pi * spec.base_frequency * tau ** -0.375)
    h = np.empty(spec.total_samples)
    h[:tc] = amp[:tc] * np.cos(phase[:tc])
    dt = np.arange(spec.total_samples - tc, dtype=np.float64)
    h[tc:] = amp[tc] * np.exp(-dt / spec.ringdown_decay) * np.cos(
        2.0 * math.pi * spec.ringdown_frequency * dt + phase[tc])
    return h * (PEAK / np.max(np.abs(h)))


def save_series_csv(path, series) -> None:
    lines = ["t,h"] + [f"{t},{float(v)!r}" for t, v in enumerate(series)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_series_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"series file not found: {path}")
    values = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["t", "h"]:
            raise ConfigurationError(f"{path}: expected header 't,h'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigurationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                v = float(row[1])
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: malformed value {row[1]!r}") from None
            if not math.isfinite(v):
                raise ConfigurationError(f"{path}:{lineno}: non-finite value {row[1]!r}")
            values.append(v)
    if not values:
        raise ConfigurationError(f"{path}: no samples")
    return np.array(values)


def minmax_rescale(series, peak: float = PEAK) -> tuple[np.ndarray, float, float]:
    """Map ``[min, max]`` onto ``[-peak, peak]``; returns (rescaled, scale, offset)."""
    s = np.asarray(series, dtype=np.float64)
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return np.zeros_like(s), 1.0, -lo
    scale = 2.0 * peak / (hi - lo)
    offset = -peak - lo * scale
    return s * scale + offset, scale, offset


@dataclass(frozen=True)
class SeriesDataset:
    series: np.ndarray
    lookback: int
    split_index: int
    scale: float
    train_x: np.ndarray
    train_y: np.ndarray
    train_t: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    test_t: np.ndarray

    @property
    def all_x(self) -> np.ndarray:
        return np.concatenate([self.train_x, self.test_x])

    @property
    def all_t(self) -> np.ndarray:
        return np.concatenate([self.train_t, self.test_t])


def make_dataset(series, lookback: int = 8, split_fraction=Fraction(2, 3),
                 rescale: bool = False) -> SeriesDataset:
    """Sliding windows ``series[t-w:t] -> series[t]`` for ``t = w..T-1``.

    Targets with ``t < floor(split_fraction * T)`` are training data, the rest test.
    ``rescale=True`` min-max maps external data to [-0.8, 0.8] first.
    """
    s = np.asarray(series, dtype=np.float64)
    w = int(lookback)
    if w < 1:
        raise ConfigurationError(f"lookback must be >= 1, got {w}")
    if s.size < w + 1:
        raise ConfigurationError(f"series of length {s.size} too short for lookback {w}")
    scale = 1.0
    if rescale:
        s, scale, _ = minmax_rescale(s)
    n = s.size
    split = math.floor(Fraction(split_fraction) * n)
    t = np.arange(w, n)
    x = np.lib.stride_tricks.sliding_window_view(s, w)[: n - w].copy()
    y = s[w:].copy()
    train = t < split
    return SeriesDataset(s, w, split, scale, x[train], y[train], t[train], x[~train], y[~train], t[~train])
