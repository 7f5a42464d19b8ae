"""End-to-end feature extraction from raw frame matrices to network views.

Per sample: suppress the per-range-bin DC component and the static
background, locate the most energetic contiguous range window on the
slow-time-difference signal, and crop.  Two views come out of the cropped
window: the slow-time difference matrix and the energy-weighted magnitude
spectrogram.  Augmentation, when enabled, expands each cropped training
matrix before the views are formed so both views stay consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .augment import Augmented, AugmentSpec, expand
from .dataformat import LabeledSample, SptClass
from .wrtft import StftConfig, wrtft


@dataclass(frozen=True)
class FeatureConfig:
    ws: int = 40
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.ws < 1:
            raise ValueError("ws must be >= 1")

    def td_view_shape(self, num_frames: int) -> tuple[int, int]:
        return (self.ws, num_frames - 1)

    def wr_view_shape(self, num_frames: int) -> tuple[int, int]:
        return (self.stft.num_freq_bins, self.stft.num_time_frames(num_frames))


@dataclass
class PreparedSample:
    """Standardized network inputs for one (possibly augmented) sample."""

    td: np.ndarray  # (ws, N-1, 1)
    wr: np.ndarray  # (K, T, 1)
    label: SptClass
    participant_id: int
    session_id: int
    origin: int  # source measurement id; augmented copies share it
    combo: tuple[str, ...] = ()


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance over the whole view; constant views map to zero."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    sd = x.std()
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - mu) / sd


def clean_and_crop(frames: np.ndarray, ws: int) -> tuple[np.ndarray, dsp.RangeWindow]:
    """DC + background suppression, then crop to the selected range window."""
    y = dsp.background_suppress(dsp.dc_suppress(frames))
    yd = dsp.time_difference(y)
    window = dsp.select_range_window(yd, ws)
    return dsp.crop(y, window), window


def views_from_clean(y_cropped: np.ndarray, stft_cfg: StftConfig) -> tuple[np.ndarray, np.ndarray]:
    """(time-difference view, spectral view), each standardized with a channel axis."""
    td = standardize(dsp.time_difference(y_cropped))
    wr = standardize(wrtft(y_cropped, stft_cfg).data)
    return td[:, :, None].astype(np.float32), wr[:, :, None].astype(np.float32)


def prepare_sample(
    sample: LabeledSample, cfg: FeatureConfig, origin: int = 0
) -> PreparedSample:
    y_cropped, _ = clean_and_crop(sample.frames, cfg.ws)
    td, wr = views_from_clean(y_cropped, cfg.stft)
    return PreparedSample(
        td=td,
        wr=wr,
        label=sample.label,
        participant_id=sample.participant_id,
        session_id=sample.session_id,
        origin=origin,
    )


def prepare_dataset(
    samples: list[LabeledSample],
    cfg: FeatureConfig,
    origins: list[int] | None = None,
    augment: AugmentSpec | None = None,
) -> list[PreparedSample]:
    """Featurize a list of samples, optionally expanding each 16-fold first.

    ``origins`` gives a stable id per input sample (defaults to position);
    every augmented copy inherits its source id so split hygiene can be
    checked after expansion.
    """
    if origins is None:
        origins = list(range(len(samples)))
    if len(origins) != len(samples):
        raise ValueError("origins must match samples 1:1")

    cropped = [clean_and_crop(s.frames, cfg.ws)[0] for s in samples]

    if augment is None:
        out = []
        for s, y, origin in zip(samples, cropped, origins):
            td, wr = views_from_clean(y, cfg.stft)
            out.append(
                PreparedSample(td, wr, s.label, s.participant_id, s.session_id, origin)
            )
        return out

    expanded: list[Augmented] = expand(
        [(y, s.label) for y, s in zip(cropped, samples)], augment
    )
    out = []
    for item in expanded:
        src = samples[item.origin]
        td, wr = views_from_clean(item.matrix, cfg.stft)
        out.append(
            PreparedSample(
                td,
                wr,
                item.label,
                src.participant_id,
                src.session_id,
                origins[item.origin],
                combo=item.combo,
            )
        )
    return out


def stack_views(
    prepared: list[PreparedSample], kind: str
) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Batch arrays for a model kind plus integer labels.

    ``td`` and ``wrtft`` take one view; ``spn`` takes (td, wr).
    """
    if not prepared:
        raise ValueError("no samples to stack")
    labels = np.array([p.label.index for p in prepared], dtype=np.int64)
    if kind == "td":
        return (np.stack([p.td for p in prepared]),), labels
    if kind == "wrtft":
        return (np.stack([p.wr for p in prepared]),), labels
    if kind == "spn":
        return (
            np.stack([p.td for p in prepared]),
            np.stack([p.wr for p in prepared]),
        ), labels
    raise ValueError(f"unknown model kind {kind!r}")
