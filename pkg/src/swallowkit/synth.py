"""Synthetic swallow-like corpora with a tunable class contrast.

Real cervical recordings are not redistributable, so desk-scale checks run
on generated audio instead. A "normal" event is a band-limited noise burst
under a smooth envelope, energy concentrated in the low hundreds of Hz. A
"dysphagic" event layers two extras on the same burst, both scaled by the
separation knob: a weak high-band noise component (spectral tilt, which
mostly moves the zero-crossing rate) and short ringing transients (which
mostly raise the spectral crest). At separation 0 both classes draw from
exactly the same distribution. The recipe is an engineered contrast, not a
physiological model.

Each event gets its own generator derived from (seed, event index), so a
corpus is a pure function of its config, file by file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio_io import (
    CONSISTENCIES,
    AudioSegment,
    SegmentAnnotation,
    write_wav,
    AudioSignal,
    MANIFEST_HEADER,
)
from .errors import ParameterError
from .forest import LabeledDataset
from .ioutil import atomic_write_text
from .seeding import derive_rng

# generative constants; contrast multiplies _TILT_GAIN and _RING_RATE
_BASE_CUTOFF_HZ = (260.0, 560.0)
_PREEMPH = (-0.5, 0.5)
_TILT_BAND_HZ = (1500.0, 1950.0)
_TILT_FLOOR = (0.002, 0.040)
_TILT_GAIN = 0.045
_RING_RATE = 8.0
_RING_FREQ_HZ = (1000.0, 1900.0)
_RING_DECAY_S = (0.004, 0.009)
_RING_AMP = (0.5, 1.5)
_N_SUBJECTS = {"normal": 14, "dysphagic": 18}


@dataclass(frozen=True)
class SynthConfig:
    n_normal: int = 152
    n_dysphagic: int = 110
    sample_rate_hz: int = 4000
    segment_duration_s: float = 1.0
    separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_normal < 0 or self.n_dysphagic < 0:
            raise ParameterError("event counts must be >= 0")
        if self.sample_rate_hz <= 0:
            raise ParameterError("sample_rate_hz must be positive")
        if self.segment_duration_s < 0.025:
            raise ParameterError("segment_duration_s must cover one analysis frame")
        if self.separation < 0:
            raise ParameterError("separation must be >= 0")

    @property
    def n_total(self) -> int:
        return self.n_normal + self.n_dysphagic


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x * x))
    return x / rms if rms > 0 else x


def synth_swallow(
    rng: np.random.Generator,
    sample_rate_hz: int = 4000,
    duration_s: float = 1.0,
    contrast: float = 0.0,
) -> np.ndarray:
    """One synthetic swallow event; contrast 0 is the normal recipe."""
    sr = sample_rate_hz
    n = round(duration_s * sr)
    t = np.arange(n) / sr

    peak = rng.uniform(0.30, 0.70) * duration_s
    width = rng.uniform(0.10, 0.20) * duration_s
    envelope = np.exp(-0.5 * ((t - peak) / width) ** 2)

    cutoff = rng.uniform(*_BASE_CUTOFF_HZ)
    sos = sps.butter(4, cutoff / (sr / 2), output="sos")
    base = _unit_rms(sps.sosfilt(sos, rng.standard_normal(n)))

    sos_hi = sps.butter(
        4,
        (_TILT_BAND_HZ[0] / (sr / 2), min(_TILT_BAND_HZ[1] / (sr / 2), 0.999)),
        btype="bandpass",
        output="sos",
    )
    high = _unit_rms(sps.sosfilt(sos_hi, rng.standard_normal(n)))

    tilt_energy = rng.uniform(*_TILT_FLOOR) + _TILT_GAIN * contrast * rng.uniform(0.8, 1.2)
    tilt_energy = min(tilt_energy, 0.9)
    x = envelope * (np.sqrt(1.0 - tilt_energy) * base + np.sqrt(tilt_energy) * high)

    n_rings = rng.poisson(_RING_RATE * contrast * duration_s)
    for _ in range(n_rings):
        t0 = rng.uniform(0.15, 0.85) * duration_s
        freq = rng.uniform(*_RING_FREQ_HZ)
        decay = rng.uniform(*_RING_DECAY_S)
        amp = rng.uniform(*_RING_AMP)
        local = t - t0
        ring = np.where(
            local >= 0,
            np.exp(-np.maximum(local, 0.0) / decay) * np.sin(2 * np.pi * freq * local),
            0.0,
        )
        x = x + amp * np.exp(-0.5 * ((t0 - peak) / width) ** 2) * ring

    target_peak = rng.uniform(0.55, 0.80)
    top = np.max(np.abs(x))
    if top > 0:
        x = x * (target_peak / top)
    return x


def _subject_id(label: str, index: int) -> str:
    prefix = "H" if label == "normal" else "P"
    return f"{prefix}{index % _N_SUBJECTS[label] + 1:02d}"


def generate_segments(config: SynthConfig = SynthConfig()) -> list[AudioSegment]:
    """In-memory corpus: all normal events first, then all dysphagic."""
    segments = []
    for i in range(config.n_total):
        label = "normal" if i < config.n_normal else "dysphagic"
        class_index = i if label == "normal" else i - config.n_normal
        contrast = 0.0 if label == "normal" else config.separation
        rng = derive_rng(config.seed, i)
        samples = synth_swallow(
            rng, config.sample_rate_hz, config.segment_duration_s, contrast
        )
        annotation = SegmentAnnotation(
            0.0,
            config.segment_duration_s,
            label,
            CONSISTENCIES[class_index % 3],
            _subject_id(label, class_index),
        )
        segments.append(AudioSegment(annotation, samples, config.sample_rate_hz))
    return segments


def generate_synthetic_corpus(config: SynthConfig, out_dir) -> Path:
    """Write one WAV per event plus a manifest CSV referencing them all.

    Returns the manifest path. On failure every file written so far is
    removed, so a corpus directory is never left half-built.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    segments = generate_segments(config)
    written: list[Path] = []
    try:
        lines = [",".join(MANIFEST_HEADER)]
        for i, segment in enumerate(segments):
            name = f"swallow_{i:04d}.wav"
            write_wav(out_dir / name, AudioSignal(segment.samples, segment.sample_rate_hz))
            written.append(out_dir / name)
            ann = segment.annotation
            lines.append(
                f"{name},{ann.start_s!r},{ann.end_s!r},{ann.label},"
                f"{ann.consistency},{ann.subject_id}"
            )
        manifest = atomic_write_text(out_dir / "annotations.csv", "\n".join(lines) + "\n")
        written.append(manifest)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return manifest


def generate_feature_clusters(
    n_per_class: int, shift, seed: int = 0
) -> LabeledDataset:
    """Two unit-variance Gaussian clusters in feature space.

    The dysphagic class mean is offset by the shift vector; the normal
    class sits at the origin. Rows are all normal events first.
    """
    shift = np.asarray(shift, dtype=np.float64)
    if shift.ndim != 1:
        raise ParameterError("shift must be a 1-D vector")
    if n_per_class < 2:
        raise ParameterError("n_per_class must be >= 2")
    d = shift.size
    rng = derive_rng(seed)
    normal = rng.standard_normal((n_per_class, d))
    dysphagic = rng.standard_normal((n_per_class, d)) + shift
    X = np.vstack([normal, dysphagic])
    y = np.concatenate([np.zeros(n_per_class, int), np.ones(n_per_class, int)])
    ids = np.asarray(
        [f"n{i:04d}" for i in range(n_per_class)]
        + [f"d{i:04d}" for i in range(n_per_class)],
        dtype=str,
    )
    return LabeledDataset(X, y, ids)
