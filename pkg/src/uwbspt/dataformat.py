"""Canonical sample/label containers, the UWBF1 binary frame format, and
dataset manifests.

A radar sample is an M x N float matrix: rows are fast-time range bins,
columns are slow-time frames.  Frame matrices are stored on disk in the
UWBF1 format (see :func:`write_frames`); labels and recording metadata live
in a JSON manifest next to the frame files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

UWBF1_MAGIC = b"UWBF"
UWBF1_VERSION = 1
_HEADER = struct.Struct("<4sBII")  # magic, version, M, N


class DataFormatError(Exception):
    """Base class for sample/manifest format problems."""


class BadFormatError(DataFormatError):
    """File or matrix violates the UWBF1/manifest contract."""


class TruncatedError(DataFormatError):
    """File ends before the payload its header promises."""


class SptClass(Enum):
    """Sleep-postural-transition classes plus the background class.

    BG is only valid in 5-class mode (the second recording campaign adds
    non-transition activity samples).
    """

    SUSI = "SUSI"  # supine -> side
    SUPR = "SUPR"  # supine -> prone
    SISU = "SISU"  # side -> supine
    PRSU = "PRSU"  # prone -> supine
    BG = "BG"

    @property
    def index(self) -> int:
        return _CLASS_ORDER.index(self)

    @classmethod
    def from_token(cls, token: str) -> "SptClass":
        try:
            return cls(token)
        except ValueError:
            raise BadFormatError(f"unknown class token {token!r}") from None


_CLASS_ORDER = [SptClass.SUSI, SptClass.SUPR, SptClass.SISU, SptClass.PRSU, SptClass.BG]


def classes_for_mode(class_mode: int) -> list[SptClass]:
    """The valid label set for 4- or 5-class operation."""
    if class_mode == 4:
        return _CLASS_ORDER[:4]
    if class_mode == 5:
        return list(_CLASS_ORDER)
    raise ValueError(f"class_mode must be 4 or 5, got {class_mode}")


@dataclass
class RadarConfig:
    """Device parameters; defaults match the single-antenna module we target."""

    center_frequency_hz: float = 7.29e9
    prf_hz: float = 15.18e6
    sampling_frequency_hz: float = 23.32e9
    range_bin_step_m: float = 0.0514
    num_range_bins: int = 180
    frame_rate_hz: float = 10.0
    slow_time_len: int = 160

    def __post_init__(self):
        for name in (
            "center_frequency_hz",
            "prf_hz",
            "sampling_frequency_hz",
            "range_bin_step_m",
            "num_range_bins",
            "frame_rate_hz",
            "slow_time_len",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"RadarConfig.{name} must be positive")

    @property
    def max_range_m(self) -> float:
        return self.range_bin_step_m * self.num_range_bins

    def to_json(self) -> dict:
        return {
            "center_frequency_hz": self.center_frequency_hz,
            "prf_hz": self.prf_hz,
            "sampling_frequency_hz": self.sampling_frequency_hz,
            "range_bin_step_m": self.range_bin_step_m,
            "num_range_bins": self.num_range_bins,
            "frame_rate_hz": self.frame_rate_hz,
            "slow_time_len": self.slow_time_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RadarConfig":
        return cls(**obj)


def check_frames(frames: np.ndarray) -> np.ndarray:
    """Validate an M x N frame matrix (M >= 1, N >= 2, finite entries)."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise BadFormatError(f"frame matrix must be 2-D, got shape {frames.shape}")
    m, n = frames.shape
    if m < 1 or n < 2:
        raise BadFormatError(f"frame matrix needs M >= 1 and N >= 2, got {m} x {n}")
    if not np.all(np.isfinite(frames)):
        raise BadFormatError("frame matrix contains non-finite entries")
    return frames


@dataclass
class LabeledSample:
    """One recorded (or synthesized) sample: frames plus labeling metadata.

    session_id 1 denotes the static environment, 2 the session with a
    moving object in the room.
    """

    frames: np.ndarray
    label: SptClass
    participant_id: int
    session_id: int = 1
    dataset_id: int = 1

    def __post_init__(self):
        self.frames = check_frames(self.frames)
        if self.participant_id < 0:
            raise ValueError("participant_id must be >= 0")

    def with_frames(self, frames: np.ndarray) -> "LabeledSample":
        return replace(self, frames=frames)


@dataclass
class ManifestEntry:
    file: str
    label: SptClass
    participant: int
    session: int
    dataset: int


@dataclass
class DatasetManifest:
    """Index of frame files with their labels; class_mode gates the BG label."""

    entries: list[ManifestEntry]
    radar_config: RadarConfig = field(default_factory=RadarConfig)
    class_mode: int = 4

    def __post_init__(self):
        valid = set(classes_for_mode(self.class_mode))
        paths = set()
        for e in self.entries:
            if e.file in paths:
                raise BadFormatError(f"duplicate file path in manifest: {e.file}")
            paths.add(e.file)
            if e.label not in valid:
                raise BadFormatError(
                    f"label {e.label.value} invalid in {self.class_mode}-class mode"
                )

    def to_json(self) -> dict:
        return {
            "radar_config": self.radar_config.to_json(),
            "class_mode": self.class_mode,
            "entries": [
                {
                    "file": e.file,
                    "label": e.label.value,
                    "participant": e.participant,
                    "session": e.session,
                    "dataset": e.dataset,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        entries = [
            ManifestEntry(
                file=e["file"],
                label=SptClass.from_token(e["label"]),
                participant=int(e["participant"]),
                session=int(e["session"]),
                dataset=int(e["dataset"]),
            )
            for e in obj["entries"]
        ]
        return cls(
            entries=entries,
            radar_config=RadarConfig.from_json(obj["radar_config"]),
            class_mode=int(obj.get("class_mode", 4)),
        )


def write_frames(frames: np.ndarray, path) -> None:
    """Write a frame matrix as UWBF1.

    Layout: bytes 0-3 magic ``UWBF``, byte 4 version 0x01, bytes 5-8 u32 LE
    row count M, bytes 9-12 u32 LE column count N, then M*N float32 LE
    values in row-major order.
    """
    frames = check_frames(frames)
    m, n = frames.shape
    if m > 0xFFFFFFFF or n > 0xFFFFFFFF:
        raise BadFormatError("matrix dimensions exceed u32 range")
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(UWBF1_MAGIC, UWBF1_VERSION, m, n))
        fh.write(payload)


def read_frames(path) -> np.ndarray:
    """Read a UWBF1 file back into a float32 matrix; fails loudly on damage."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise TruncatedError(f"{path}: file shorter than UWBF1 header")
        magic, version, m, n = _HEADER.unpack(header)
        if magic != UWBF1_MAGIC:
            raise BadFormatError(f"{path}: bad magic {magic!r}")
        if version != UWBF1_VERSION:
            raise BadFormatError(f"{path}: unsupported version {version}")
        payload = fh.read(4 * m * n)
    if len(payload) < 4 * m * n:
        raise TruncatedError(f"{path}: payload truncated ({len(payload)} of {4 * m * n} bytes)")
    frames = np.frombuffer(payload, dtype="<f4").reshape(m, n)
    if np.isnan(frames).any():
        raise BadFormatError(f"{path}: payload contains NaN entries")
    return check_frames(frames.copy())


def write_sample(sample: LabeledSample, path) -> None:
    """Persist a sample's frames; label/metadata go into the manifest."""
    write_frames(sample.frames, path)


def read_sample(
    path,
    label: SptClass,
    participant_id: int = 0,
    session_id: int = 1,
    dataset_id: int = 1,
) -> LabeledSample:
    """Rebuild a LabeledSample from a frame file plus manifest metadata."""
    return LabeledSample(
        frames=read_frames(path),
        label=label,
        participant_id=participant_id,
        session_id=session_id,
        dataset_id=dataset_id,
    )


def save_dataset(
    samples: list[LabeledSample],
    out_dir,
    radar_config: RadarConfig | None = None,
    class_mode: int = 4,
    manifest_name: str = "manifest.json",
) -> Path:
    """Write one UWBF1 file per sample plus the JSON manifest; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        fname = f"sample_{i:05d}.uwbf"
        write_sample(s, out_dir / fname)
        entries.append(
            ManifestEntry(
                file=fname,
                label=s.label,
                participant=s.participant_id,
                session=s.session_id,
                dataset=s.dataset_id,
            )
        )
    manifest = DatasetManifest(
        entries=entries,
        radar_config=radar_config if radar_config is not None else RadarConfig(),
        class_mode=class_mode,
    )
    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True))
    return manifest_path


def load_manifest(manifest_path) -> DatasetManifest:
    try:
        obj = json.loads(Path(manifest_path).read_text())
    except json.JSONDecodeError as exc:
        raise BadFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    return DatasetManifest.from_json(obj)


def load_dataset(manifest_path) -> tuple[list[LabeledSample], DatasetManifest]:
    """Load every sample referenced by a manifest (paths relative to it)."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    samples = [
        read_sample(
            base / e.file,
            label=e.label,
            participant_id=e.participant,
            session_id=e.session,
            dataset_id=e.dataset,
        )
        for e in manifest.entries
    ]
    return samples, manifest


def balance_classes(dataset: list[LabeledSample], rng_seed: int) -> list[LabeledSample]:
    """Randomly undersample every class down to the smallest class count.

    Deterministic for a fixed seed; retained samples keep their input order.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    by_class: dict[SptClass, list[int]] = {}
    for i, s in enumerate(dataset):
        by_class.setdefault(s.label, []).append(i)
    target = min(len(v) for v in by_class.values())
    rng = np.random.default_rng(rng_seed)
    keep: set[int] = set()
    for label in _CLASS_ORDER:
        if label not in by_class:
            continue
        idx = by_class[label]
        chosen = rng.choice(len(idx), size=target, replace=False)
        keep.update(idx[j] for j in chosen)
    return [s for i, s in enumerate(dataset) if i in keep]
