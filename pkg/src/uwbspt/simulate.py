"""Synthetic labeled frame matrices for desk-scale end-to-end validation.

A sample is a superposition of Gaussian fast-time pulses riding on a
slow-time trajectory (rest breathing, then a sigmoidal posture shift, then
rest again), plus static clutter reflectors, per-bin DC offsets, white
noise, and optionally a periodic distractor that static-background
suppression cannot remove.

Class structure mirrors the recording scenarios: supine-to-X transitions
move toward the radar, X-to-supine away, and prone transitions move about
twice as far as side transitions, which makes same-direction classes the
confusable pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataformat import LabeledSample, RadarConfig, SptClass, classes_for_mode


class TrajectoryError(ValueError):
    """Trajectory (or a path riding on it) left the valid bin range."""


@dataclass(frozen=True)
class ClassMotion:
    """Template for one class: signed bin displacement and its duration."""

    delta_bins: float
    duration_s: float


@dataclass(frozen=True)
class Distractor:
    """Fixed-bin reflector with sinusoidally modulated amplitude (fan stand-in)."""

    range_bin: int
    period_s: float
    amplitude: float


def default_class_templates() -> dict[SptClass, ClassMotion]:
    return {
        SptClass.SUSI: ClassMotion(delta_bins=6.0, duration_s=2.2),
        SptClass.SISU: ClassMotion(delta_bins=-6.0, duration_s=2.2),
        SptClass.SUPR: ClassMotion(delta_bins=12.0, duration_s=3.0),
        SptClass.PRSU: ClassMotion(delta_bins=-12.0, duration_s=3.0),
        SptClass.BG: ClassMotion(delta_bins=0.0, duration_s=2.2),
    }


@dataclass(frozen=True)
class SimConfig:
    num_paths: int = 3
    pulse_width_bins: float = 2.5
    clutter_amplitude: float = 0.6
    dc_offset_scale: float = 0.05
    noise_sigma: float = 0.02
    breathing_freq_hz: float = 0.25
    breathing_amp_bins: float = 0.35
    transition_start_range: tuple[int, int] = (55, 100)  # pre-transition body bin
    class_templates: dict[SptClass, ClassMotion] = field(
        default_factory=default_class_templates
    )
    distractor: Distractor | None = None
    rng_seed: int = 0
    radar: RadarConfig = field(default_factory=RadarConfig)
    # fraction of the slow-time extent in which the transition may begin
    transition_onset_frac: tuple[float, float] = (0.25, 0.45)
    bg_jitter_bursts: int = 3
    bg_jitter_amp_bins: float = 1.2

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        t = self.class_templates
        for label, motion in t.items():
            if motion.duration_s <= 0:
                raise ValueError(f"{label.value}: duration must be positive")
        if SptClass.SUSI in t and SptClass.SISU in t:
            if not math.isclose(t[SptClass.SUSI].delta_bins, -t[SptClass.SISU].delta_bins):
                raise ValueError("SUSI and SISU displacements must mirror")
        if SptClass.SUPR in t and SptClass.PRSU in t:
            if not math.isclose(t[SptClass.SUPR].delta_bins, -t[SptClass.PRSU].delta_bins):
                raise ValueError("SUPR and PRSU displacements must mirror")
        if SptClass.SUPR in t and SptClass.SUSI in t:
            if abs(t[SptClass.SUPR].delta_bins) <= abs(t[SptClass.SUSI].delta_bins):
                raise ValueError("prone transitions must move farther than side ones")


def range_of_bin(cfg: RadarConfig, m: int) -> float:
    """Radial distance of bin m in meters."""
    if not 0 <= m < cfg.num_range_bins:
        raise ValueError(f"bin index {m} outside [0, {cfg.num_range_bins})")
    return m * cfg.range_bin_step_m


def _logistic(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _trajectory(
    cfg: SimConfig, label: SptClass, rng: np.random.Generator, n: int
) -> np.ndarray:
    """Center bin per slow-time frame: breathing + (for SPTs) a sigmoid shift."""
    fr = cfg.radar.frame_rate_hz
    t = np.arange(n) / fr
    lo, hi = cfg.transition_start_range
    base = rng.uniform(lo, hi)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    center = base + cfg.breathing_amp_bins * np.sin(2.0 * np.pi * cfg.breathing_freq_hz * t + phase)

    motion = cfg.class_templates[label]
    if label is SptClass.BG:
        for _ in range(cfg.bg_jitter_bursts):
            if cfg.bg_jitter_amp_bins == 0.0:
                break
            burst_t = rng.uniform(0.1, 0.9) * (n - 1) / fr
            amp = rng.uniform(-1.0, 1.0) * cfg.bg_jitter_amp_bins
            width = rng.uniform(0.2, 0.5)
            center = center + amp * np.exp(-0.5 * ((t - burst_t) / width) ** 2)
    else:
        f_lo, f_hi = cfg.transition_onset_frac
        onset = rng.uniform(f_lo, f_hi) * (n - 1) / fr
        dur = motion.duration_s
        # scale so ~98% of the shift happens inside the duration window
        center = center + motion.delta_bins * _logistic((t - onset - dur / 2) / (dur / 8))
    return center


def synth_sample(
    cfg: SimConfig,
    label: SptClass,
    participant_id: int,
    sample_index: int = 0,
    session_id: int = 1,
    dataset_id: int = 1,
) -> LabeledSample:
    """Generate one labeled frame matrix; bit-identical for identical inputs."""
    if label not in cfg.class_templates:
        raise ValueError(f"no template for class {label.value}")
    m_bins = cfg.radar.num_range_bins
    n = cfg.radar.slow_time_len
    rng = np.random.default_rng(
        [cfg.rng_seed, participant_id, label.index, sample_index, session_id]
    )

    center = _trajectory(cfg, label, rng, n)
    bins = np.arange(m_bins, dtype=np.float64)[:, None]
    data = np.zeros((m_bins, n), dtype=np.float64)

    # body reflections: strongest path on the trajectory, weaker ones behind it
    for i in range(cfg.num_paths):
        offset = 0.0 if i == 0 else rng.uniform(1.0, 10.0)
        amp = 1.0 if i == 0 else rng.uniform(0.25, 0.7) * 0.7**i
        width = cfg.pulse_width_bins * rng.uniform(0.85, 1.15)
        path_center = center + offset
        if path_center.min() < 0 or path_center.max() > m_bins - 1:
            raise TrajectoryError(
                f"path center range [{path_center.min():.1f}, {path_center.max():.1f}] "
                f"leaves [0, {m_bins - 1}]"
            )
        data += amp * np.exp(-0.5 * ((bins - path_center) / width) ** 2)

    if cfg.clutter_amplitude > 0:
        for _ in range(4):
            c_bin = rng.uniform(0, m_bins - 1)
            c_amp = cfg.clutter_amplitude * rng.uniform(0.2, 1.0)
            c_width = rng.uniform(1.0, 3.0)
            data += c_amp * np.exp(-0.5 * ((bins - c_bin) / c_width) ** 2)

    if cfg.dc_offset_scale > 0:
        data += cfg.dc_offset_scale * rng.standard_normal((m_bins, 1))

    if cfg.distractor is not None:
        d = cfg.distractor
        if not 0 <= d.range_bin < m_bins:
            raise TrajectoryError(f"distractor bin {d.range_bin} outside [0, {m_bins})")
        t = np.arange(n) / cfg.radar.frame_rate_hz
        phase = rng.uniform(0.0, 2.0 * np.pi)
        modulation = d.amplitude * np.sin(2.0 * np.pi * t / d.period_s + phase)
        data += modulation * np.exp(-0.5 * ((bins - d.range_bin) / 2.0) ** 2)

    if cfg.noise_sigma > 0:
        data += cfg.noise_sigma * rng.standard_normal((m_bins, n))

    return LabeledSample(
        frames=data.astype(np.float32),
        label=label,
        participant_id=participant_id,
        session_id=session_id,
        dataset_id=dataset_id,
    )


def participant_config(cfg: SimConfig, participant_id: int) -> SimConfig:
    """Perturb generator parameters per participant (body size, position, pace).

    The relative class structure is preserved: all displacement templates are
    scaled by one shared factor, keeping the mirror/extent invariants intact.
    """
    rng = np.random.default_rng([cfg.rng_seed, 7_771, participant_id])
    width = cfg.pulse_width_bins * rng.uniform(0.75, 1.3)
    lo, hi = cfg.transition_start_range
    shift = int(rng.integers(-12, 13))
    noise = cfg.noise_sigma * rng.uniform(0.8, 1.25)
    delta_scale = rng.uniform(0.8, 1.2)
    pace = rng.uniform(0.85, 1.2)
    templates = {
        label: ClassMotion(
            delta_bins=motion.delta_bins * delta_scale,
            duration_s=motion.duration_s * pace,
        )
        for label, motion in cfg.class_templates.items()
    }
    return replace(
        cfg,
        pulse_width_bins=width,
        transition_start_range=(lo + shift, hi + shift),
        noise_sigma=noise,
        class_templates=templates,
    )


def synth_dataset(
    cfg: SimConfig,
    n_participants: int,
    samples_per_class_per_participant: int,
    class_mode: int = 4,
    sessions: tuple[int, ...] = (1,),
    dataset_id: int = 1,
) -> list[LabeledSample]:
    """Balanced dataset across participants, classes, and sessions.

    Session 2 enables cfg.distractor; session 1 never has one.  Counts:
    n_participants * per_class * n_classes * n_sessions samples.
    """
    if n_participants < 1 or samples_per_class_per_participant < 1:
        raise ValueError("participant and per-class counts must be positive")
    labels = classes_for_mode(class_mode)
    samples = []
    for pid in range(n_participants):
        pcfg = participant_config(cfg, pid)
        for session in sessions:
            scfg = pcfg if session == 2 else replace(pcfg, distractor=None)
            for label in labels:
                for k in range(samples_per_class_per_participant):
                    samples.append(
                        synth_sample(
                            scfg,
                            label,
                            participant_id=pid,
                            sample_index=k,
                            session_id=session,
                            dataset_id=dataset_id,
                        )
                    )
    return samples
