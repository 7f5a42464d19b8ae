"""Frequency-view feature extraction.

Each retained range bin gets a short-time Fourier magnitude spectrogram;
the per-bin spectrograms are then averaged with weights proportional to
each bin's slow-time energy, collapsing the range axis into a single
range-time-frequency image.

The FFT is implemented here (iterative radix-2) so the transform has no
external numerical dependency and can be validated against a naive DFT.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ZeroEnergyError(ValueError):
    """Raised when the weighted average is undefined (all-zero input)."""


class WindowFn(Enum):
    HANN = "hann"
    RECT = "rect"
    HAMMING = "hamming"


@dataclass(frozen=True)
class StftConfig:
    """Segmentation and transform parameters for the per-bin spectrograms.

    Defaults turn a 160-frame slow-time record into a 33 x 33 image:
    T = floor((160 - 32) / 4) + 1 = 33 frames, K = 64 / 2 + 1 = 33 one-sided
    frequency bins.
    """

    segment_len: int = 32
    hop: int = 4
    fft_len: int = 64
    window_fn: WindowFn = WindowFn.HANN
    one_sided: bool = True

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.segment_len < 1 or self.segment_len > self.fft_len:
            raise ValueError("need 1 <= segment_len <= fft_len")
        if self.fft_len < 2 or self.fft_len & (self.fft_len - 1):
            raise ValueError("fft_len must be a power of two")

    @property
    def num_freq_bins(self) -> int:
        return self.fft_len // 2 + 1 if self.one_sided else self.fft_len

    def num_time_frames(self, n: int) -> int:
        if n < self.segment_len:
            raise ValueError(f"need N >= segment_len ({n} < {self.segment_len})")
        return (n - self.segment_len) // self.hop + 1

    def window(self) -> np.ndarray:
        if self.window_fn is WindowFn.HANN:
            return np.hanning(self.segment_len)
        if self.window_fn is WindowFn.HAMMING:
            return np.hamming(self.segment_len)
        return np.ones(self.segment_len)


@dataclass(frozen=True)
class WrtftFeature:
    """Energy-weighted spectrogram image plus the weighting it used."""

    data: np.ndarray  # K x T
    weights: np.ndarray  # per-bin weight, sums to 1
    energies: np.ndarray  # per-bin slow-time energy


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_core(x: np.ndarray, inverse: bool) -> np.ndarray:
    x = np.asarray(x)
    n = x.shape[-1]
    if n & (n - 1) or n == 0:
        raise ValueError(f"FFT length must be a power of two, got {n}")
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse_indices(n)].copy()
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        b = a.reshape(a.shape[:-1] + (n // size, size))
        even = b[..., :half].copy()
        odd = b[..., half:] * twiddle
        b[..., :half] = even + odd
        b[..., half:] = even - odd
        size *= 2
    if inverse:
        a /= n
    return a


def fft(x: np.ndarray) -> np.ndarray:
    """Radix-2 DFT along the last axis (length must be a power of two)."""
    return _fft_core(x, inverse=False)


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft` along the last axis."""
    return _fft_core(x, inverse=True)


def stft(y: np.ndarray, cfg: StftConfig | None = None) -> np.ndarray:
    """Magnitude spectrogram per range bin.

    Parameters
    ----------
    y : (..., N) array, slow time on the last axis.
    cfg : segmentation parameters; segments shorter than fft_len are
        zero-padded before the transform.

    Returns
    -------
    (..., K, T) array of non-negative magnitudes.
    """
    cfg = cfg or StftConfig()
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    t_frames = cfg.num_time_frames(n)  # raises if N < segment_len
    segments = np.lib.stride_tricks.sliding_window_view(y, cfg.segment_len, axis=-1)
    segments = segments[..., :: cfg.hop, :][..., :t_frames, :]  # (..., T, L)
    windowed = segments * cfg.window()
    if cfg.fft_len > cfg.segment_len:
        pad = [(0, 0)] * (windowed.ndim - 1) + [(0, cfg.fft_len - cfg.segment_len)]
        windowed = np.pad(windowed, pad)
    spectrum = fft(windowed)[..., : cfg.num_freq_bins]
    return np.abs(spectrum).swapaxes(-1, -2)  # (..., K, T)


def bin_energy(y: np.ndarray) -> np.ndarray:
    """Per-row slow-time energy: E[m] = sum_n y[m, n]^2."""
    y = np.asarray(y, dtype=np.float64)
    return np.einsum("...mn,...mn->...m", y, y)


def wrtft(y_cropped: np.ndarray, cfg: StftConfig | None = None) -> WrtftFeature:
    """Energy-weighted average of the per-bin magnitude spectrograms.

    W[k, t] = sum_m sigma_m F[m, k, t] with sigma_m = E_m / sum_m E_m.
    """
    cfg = cfg or StftConfig()
    y_cropped = np.asarray(y_cropped, dtype=np.float64)
    if y_cropped.ndim != 2:
        raise ValueError("expected a 2-D cropped matrix")
    energies = bin_energy(y_cropped)
    total = energies.sum()
    if total <= 0.0:
        raise ZeroEnergyError("all-zero input: weighted average undefined")
    weights = energies / total
    spectrograms = stft(y_cropped, cfg)  # (M, K, T)
    data = np.einsum("m,mkt->kt", weights, spectrograms)
    return WrtftFeature(data=data, weights=weights, energies=energies)
