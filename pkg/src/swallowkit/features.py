"""25-dimensional acoustic descriptors of swallow segments.

A segment is cut into short overlapping frames (25 ms / 10 ms hop by
default). Each frame yields 13 mel-cepstral coefficients, nine
spectral-shape descriptors, and three time-domain measures; the per-frame
values are averaged into one vector per segment, in the fixed order of
FEATURE_NAMES.

Definitions used throughout, with p_k = |X_k| / sum |X_j| over the
one-sided bins (DC included) and f_k the bin frequency:

* centroid      sum p_k f_k  (Hz)
* spread        sqrt(sum p_k (f_k - centroid)^2)  (Hz)
* skewness      sum p_k (f_k - centroid)^3 / spread^3
* kurtosis      sum p_k (f_k - centroid)^4 / spread^4 (plain; Gaussian ~ 3)
* entropy       -sum p_k log2 p_k / log2(n_bins), 0 log 0 = 0
* flatness      geometric mean of |X_k| (floored at 1e-10) / arithmetic mean
* crest         max |X_k| / arithmetic mean of |X_k|
* rolloff       smallest f_m with cumulative |X_k|^2 reaching 90% of the total
* flux          sum over k of (p_k(t) - p_k(t-1))^2, 0 at the first frame

An all-zero frame has no spectral shape; its descriptors are pinned to
centroid = spread = skewness = kurtosis = flux = rolloff = 0 and
entropy = flatness = crest = 1 (the flat-spectrum values), and it acts as
the uniform distribution when the next frame's flux is formed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .audio_io import CONSISTENCIES, LABELS, AudioSegment
from .errors import (
    AnnotationFormatError,
    DomainError,
    ParameterError,
    ShapeError,
    TooShortError,
)
from .ioutil import atomic_write_text

LOG_FLOOR = 1e-10
ROLLOFF_FRACTION = 0.90
PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 1000.0
N_MFCC = 13

FEATURE_NAMES = tuple(
    [f"mfcc{i}" for i in range(1, N_MFCC + 1)]
    + [
        "centroid",
        "crest",
        "entropy",
        "flatness",
        "flux",
        "kurtosis",
        "rolloff",
        "skewness",
        "spread",
        "harmonic_ratio",
        "zcr",
        "energy",
    ]
)
N_FEATURES = len(FEATURE_NAMES)

_WINDOWS = ("hamming", "rectangular")


@dataclass(frozen=True)
class FrameConfig:
    """Frame-based analysis parameters."""

    frame_len_s: float = 0.025
    hop_s: float = 0.010
    fft_size: int | None = None
    window: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop_s <= self.frame_len_s:
            raise ParameterError("require 0 < hop_s <= frame_len_s")
        if self.window not in _WINDOWS:
            raise ParameterError(f"window must be one of {_WINDOWS}")

    def frame_len(self, sample_rate_hz: int) -> int:
        return max(1, round(self.frame_len_s * sample_rate_hz))

    def hop(self, sample_rate_hz: int) -> int:
        return max(1, round(self.hop_s * sample_rate_hz))

    def fft(self, sample_rate_hz: int) -> int:
        """FFT size: explicit value or the smallest power of two >= frame length."""
        n = self.frame_len(sample_rate_hz)
        size = self.fft_size if self.fft_size is not None else 1 << (n - 1).bit_length()
        if size < n:
            raise ParameterError(f"fft_size {size} smaller than frame length {n}")
        return size


@dataclass(frozen=True)
class MelConfig:
    """Mel filterbank and cepstrum parameters."""

    n_filters: int = 20
    f_min_hz: float = 0.0
    f_max_hz: float | None = None
    n_coeffs: int = N_MFCC

    def __post_init__(self):
        if self.n_coeffs != N_MFCC:
            raise ParameterError(f"n_coeffs is fixed at {N_MFCC}")
        if self.n_filters <= self.n_coeffs:
            raise ParameterError("n_filters must exceed n_coeffs")
        if self.f_min_hz < 0:
            raise ParameterError("f_min_hz must be >= 0")


def frame_signal(
    samples: np.ndarray, sample_rate_hz: int, config: FrameConfig = FrameConfig()
) -> np.ndarray:
    """Slice samples into frames, shape (n_frames, frame_len).

    Frame count is 1 + floor((N - L) / H); a trailing partial frame is
    dropped and no padding is applied.
    """
    x = np.asarray(samples, dtype=np.float64)
    length = config.frame_len(sample_rate_hz)
    hop = config.hop(sample_rate_hz)
    if x.size < length:
        raise TooShortError(
            f"segment of {x.size} samples is shorter than one {length}-sample frame"
        )
    count = 1 + (x.size - length) // hop
    offsets = np.arange(count) * hop
    return x[offsets[:, None] + np.arange(length)[None, :]]


def window_vector(length: int, kind: str) -> np.ndarray:
    if kind == "hamming":
        return np.hamming(length)
    return np.ones(length)


def power_spectra(
    frames: np.ndarray, sample_rate_hz: int, config: FrameConfig = FrameConfig()
) -> np.ndarray:
    """One-sided magnitude spectra of windowed, zero-padded frames.

    Output shape (n_frames, fft_size/2 + 1); bin k sits at frequency
    k * sample_rate / fft_size.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n_fft = config.fft(sample_rate_hz)
    if frames.shape[1] > n_fft:
        raise ParameterError(
            f"frame length {frames.shape[1]} exceeds fft size {n_fft}"
        )
    win = window_vector(frames.shape[1], config.window)
    return np.abs(np.fft.rfft(frames * win, n=n_fft, axis=1))


def power_spectrum(
    frame: np.ndarray, sample_rate_hz: int, config: FrameConfig = FrameConfig()
) -> np.ndarray:
    """Single-frame variant of power_spectra."""
    return power_spectra(np.asarray(frame)[None, :], sample_rate_hz, config)[0]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate_hz: int, fft_size: int, mel: MelConfig = MelConfig()
) -> np.ndarray:
    """Triangular mel filterbank, shape (n_filters, fft_size/2 + 1).

    Filter edges are equally spaced on the mel scale
    (mel = 2595 log10(1 + f/700)) between f_min and f_max; each triangle's
    weight is evaluated at the exact bin frequencies.
    """
    f_max = mel.f_max_hz if mel.f_max_hz is not None else sample_rate_hz / 2.0
    if not mel.f_min_hz < f_max <= sample_rate_hz / 2.0 + 1e-9:
        raise ParameterError("require f_min_hz < f_max_hz <= sample_rate / 2")
    edges = _mel_to_hz(
        np.linspace(_hz_to_mel(mel.f_min_hz), _hz_to_mel(f_max), mel.n_filters + 2)
    )
    freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    bank = np.zeros((mel.n_filters, freqs.size))
    for j in range(mel.n_filters):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        bank[j] = np.maximum(0.0, np.minimum(up, down))
    return bank


def mfcc(
    spectra: np.ndarray, sample_rate_hz: int, mel: MelConfig = MelConfig()
) -> np.ndarray:
    """Mel cepstra of magnitude spectra, shape (n_frames, 13).

    Per frame: mel filterbank energies of the squared magnitudes, natural
    log floored at 1e-10, orthonormal DCT-II. Coefficient k is DCT index k;
    the 0th (overall-loudness) index is excluded, which makes the output
    invariant to amplitude scaling while all filter energies sit above the
    floor.
    """
    spectra = np.atleast_2d(np.asarray(spectra, dtype=np.float64))
    if spectra.size == 0:
        raise ParameterError("mfcc needs at least one spectrum")
    fft_size = 2 * (spectra.shape[1] - 1)
    bank = mel_filterbank(sample_rate_hz, fft_size, mel)
    energies = (spectra**2) @ bank.T
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(logs, type=2, norm="ortho", axis=1)
    return ceps[:, 1 : N_MFCC + 1]


@dataclass(frozen=True, eq=False)
class SpectralDescriptors:
    """Per-frame spectral-shape measures; every field has shape (n_frames,)."""

    centroid: np.ndarray
    spread: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    entropy: np.ndarray
    flatness: np.ndarray
    crest: np.ndarray
    rolloff: np.ndarray
    flux: np.ndarray


def spectral_descriptors(
    spectra: np.ndarray, sample_rate_hz: int
) -> SpectralDescriptors:
    """Spectral-shape descriptors of a sequence of magnitude spectra."""
    mag = np.atleast_2d(np.asarray(spectra, dtype=np.float64))
    if mag.size == 0:
        raise ParameterError("spectral_descriptors needs at least one spectrum")
    m, n_bins = mag.shape
    fft_size = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * sample_rate_hz / fft_size

    totals = mag.sum(axis=1)
    zero = totals <= 0.0
    safe_tot = np.where(zero, 1.0, totals)
    p = mag / safe_tot[:, None]
    # a silent frame acts as the uniform distribution (it has no shape of
    # its own); this also keeps the next frame's flux finite
    p[zero] = 1.0 / n_bins

    centroid = (p * freqs).sum(axis=1)
    dev = freqs[None, :] - centroid[:, None]
    variance = (p * dev**2).sum(axis=1)
    spread = np.sqrt(np.maximum(variance, 0.0))
    has_spread = spread > 0
    safe_spread = np.where(has_spread, spread, 1.0)
    skewness = np.where(has_spread, (p * dev**3).sum(axis=1) / safe_spread**3, 0.0)
    kurtosis = np.where(has_spread, (p * dev**4).sum(axis=1) / safe_spread**4, 0.0)

    plogp = np.zeros_like(p)
    np.log2(p, out=plogp, where=p > 0)
    entropy = -(p * plogp).sum(axis=1) / np.log2(n_bins)

    mean_mag = mag.mean(axis=1)
    safe_mean = np.where(zero, 1.0, mean_mag)
    geo = np.exp(np.log(np.maximum(mag, LOG_FLOOR)).mean(axis=1))
    flatness = np.minimum(geo / safe_mean, 1.0)
    crest = mag.max(axis=1) / safe_mean

    power = mag**2
    cumulative = np.cumsum(power, axis=1)
    target = ROLLOFF_FRACTION * cumulative[:, -1:]
    roll_idx = np.argmax(cumulative >= target, axis=1)
    rolloff = freqs[roll_idx]

    flux = np.zeros(m)
    if m > 1:
        flux[1:] = ((p[1:] - p[:-1]) ** 2).sum(axis=1)

    for arr, silent_value in (
        (centroid, 0.0),
        (spread, 0.0),
        (skewness, 0.0),
        (kurtosis, 0.0),
        (rolloff, 0.0),
        (entropy, 1.0),
        (flatness, 1.0),
        (crest, 1.0),
    ):
        arr[zero] = silent_value
    flux[zero] = 0.0

    return SpectralDescriptors(
        centroid, spread, skewness, kurtosis, entropy, flatness, crest, rolloff, flux
    )


def zero_crossing_rate(frame: np.ndarray) -> float:
    """Fraction of adjacent-sample sign changes, with sign(0) counted as +."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size < 2:
        raise TooShortError("zero_crossing_rate needs at least 2 samples")
    signs = np.where(x >= 0, 1, -1)
    return float(np.count_nonzero(signs[1:] != signs[:-1]) / (x.size - 1))


def short_term_energy(frame: np.ndarray) -> float:
    """Mean squared sample value of the raw (unwindowed) frame."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size == 0:
        raise TooShortError("short_term_energy needs a nonempty frame")
    return float(np.mean(x * x))


def _pitch_lags(sample_rate_hz: int) -> tuple[int, int]:
    lag_min = max(1, int(np.ceil(sample_rate_hz / PITCH_MAX_HZ)))
    lag_max = int(np.floor(sample_rate_hz / PITCH_MIN_HZ))
    return lag_min, lag_max


def harmonic_ratio(frame: np.ndarray, sample_rate_hz: int) -> float:
    """Peak normalized autocorrelation over the 60-1000 Hz pitch-lag range.

    r(tau) is the mean of x[n] x[n+tau] over the valid overlap; the result
    is max r(tau) / r(0) clamped to [0, 1], or 0 for an all-zero frame.
    """
    x = np.asarray(frame, dtype=np.float64)
    lag_min, lag_max = _pitch_lags(sample_rate_hz)
    if x.size <= lag_max:
        raise TooShortError(
            f"harmonic_ratio needs more than {lag_max} samples, got {x.size}"
        )
    return float(_harmonic_ratios(x[None, :], sample_rate_hz)[0])


def _harmonic_ratios(frames: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    lag_min, lag_max = _pitch_lags(sample_rate_hz)
    length = frames.shape[1]
    r0 = np.mean(frames * frames, axis=1)
    best = np.full(frames.shape[0], -np.inf)
    for lag in range(lag_min, lag_max + 1):
        r = np.mean(frames[:, : length - lag] * frames[:, lag:], axis=1)
        best = np.maximum(best, r)
    out = np.zeros(frames.shape[0])
    active = r0 > 0
    out[active] = np.clip(best[active] / r0[active], 0.0, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 25 per-segment features, ordered as FEATURE_NAMES."""

    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.values, dtype=np.float64, copy=True)
        if x.shape != (N_FEATURES,):
            raise ShapeError(f"expected {N_FEATURES} features, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("feature values must be finite")
        tol = 1e-9
        bounds = {
            "crest": (1.0 - tol, None),
            "entropy": (-tol, 1.0 + tol),
            "flatness": (-tol, 1.0 + tol),
            "flux": (-tol, None),
            "rolloff": (-tol, None),
            "spread": (-tol, None),
            "harmonic_ratio": (-tol, 1.0 + tol),
            "zcr": (-tol, 1.0 + tol),
            "energy": (-tol, None),
        }
        for name, (lo, hi) in bounds.items():
            v = x[FEATURE_NAMES.index(name)]
            if v < lo or (hi is not None and v > hi):
                raise DomainError(f"{name}={v} outside its valid range")
        x.flags.writeable = False
        object.__setattr__(self, "values", x)

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])


def extract_feature_vector(
    segment: AudioSegment,
    frame: FrameConfig = FrameConfig(),
    mel: MelConfig = MelConfig(),
) -> FeatureVector:
    """Frame a segment, compute per-frame features, average over frames."""
    sr = segment.sample_rate_hz
    frames = frame_signal(segment.samples, sr, frame)
    spectra = power_spectra(frames, sr, frame)
    ceps = mfcc(spectra, sr, mel)
    desc = spectral_descriptors(spectra, sr)

    signs = np.where(frames >= 0, 1, -1)
    zcr = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1) / (
        frames.shape[1] - 1
    )
    energy = np.mean(frames * frames, axis=1)
    lag_min, lag_max = _pitch_lags(sr)
    if frames.shape[1] <= lag_max:
        raise TooShortError(
            f"frames of {frames.shape[1]} samples cannot cover pitch lag {lag_max}"
        )
    hr = _harmonic_ratios(frames, sr)

    values = np.concatenate(
        [
            ceps.mean(axis=0),
            [
                desc.centroid.mean(),
                desc.crest.mean(),
                desc.entropy.mean(),
                desc.flatness.mean(),
                desc.flux.mean(),
                desc.kurtosis.mean(),
                desc.rolloff.mean(),
                desc.skewness.mean(),
                desc.spread.mean(),
                hr.mean(),
                zcr.mean(),
                energy.mean(),
            ],
        ]
    )
    return FeatureVector(values)


_META_COLUMNS = ("segment_id", "label", "consistency", "subject_id")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Feature rows plus per-segment metadata, aligned by row."""

    X: np.ndarray
    segment_ids: np.ndarray
    labels: np.ndarray
    consistencies: np.ndarray
    subject_ids: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise ShapeError(f"feature matrix must be n x {N_FEATURES}")
        if not np.all(np.isfinite(X)):
            raise DomainError("feature matrix must be finite")
        meta = {}
        for name in ("segment_ids", "labels", "consistencies", "subject_ids"):
            col = np.asarray(getattr(self, name), dtype=str)
            if col.shape != (X.shape[0],):
                raise ShapeError(f"{name} must have one entry per feature row")
            meta[name] = col
        bad = set(meta["labels"]) - set(LABELS)
        if bad:
            raise DomainError(f"unknown labels {sorted(bad)}")
        bad = set(meta["consistencies"]) - set(CONSISTENCIES)
        if bad:
            raise DomainError(f"unknown consistencies {sorted(bad)}")
        object.__setattr__(self, "X", X)
        for name, col in meta.items():
            object.__setattr__(self, name, col)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    def to_csv(self, path) -> Path:
        """Write the export CSV (metadata columns then the 25 features)."""
        lines = [",".join(_META_COLUMNS + FEATURE_NAMES)]
        for i in range(self.n):
            meta = [
                self.segment_ids[i],
                self.labels[i],
                self.consistencies[i],
                self.subject_ids[i],
            ]
            nums = [format(v, ".9g") for v in self.X[i]]
            lines.append(",".join(meta + nums))
        return atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        text = Path(path).read_text(encoding="utf-8")
        reader = csv.reader(
            line for line in text.splitlines() if line.strip() and not line.startswith("#")
        )
        rows = list(reader)
        if not rows:
            raise AnnotationFormatError(f"{path}: empty feature file")
        expected = _META_COLUMNS + FEATURE_NAMES
        if tuple(c.strip() for c in rows[0]) != expected:
            raise AnnotationFormatError(f"{path}: unexpected feature CSV header")
        meta = [[], [], [], []]
        values = []
        for cells in rows[1:]:
            if len(cells) != len(expected):
                raise AnnotationFormatError(
                    f"{path}: expected {len(expected)} fields, got {len(cells)}"
                )
            for j in range(4):
                meta[j].append(cells[j].strip())
            try:
                values.append([float(c) for c in cells[4:]])
            except ValueError as exc:
                raise AnnotationFormatError(f"{path}: bad feature value ({exc})") from None
        X = np.asarray(values, dtype=np.float64).reshape(len(values), N_FEATURES)
        return cls(X, *meta)


def extract_feature_matrix(
    segments: list[AudioSegment],
    ids: list[str] | None = None,
    frame: FrameConfig = FrameConfig(),
    mel: MelConfig = MelConfig(),
) -> FeatureMatrix:
    """Extract one FeatureVector per segment, preserving segment order."""
    if ids is None:
        ids = [f"seg{i:04d}" for i in range(len(segments))]
    if len(ids) != len(segments):
        raise ShapeError("ids must match segments one to one")
    X = np.empty((len(segments), N_FEATURES))
    for i, segment in enumerate(segments):
        X[i] = extract_feature_vector(segment, frame, mel).values
    return FeatureMatrix(
        X,
        np.asarray(ids, dtype=str),
        np.asarray([s.annotation.label for s in segments], dtype=str),
        np.asarray([s.annotation.consistency for s in segments], dtype=str),
        np.asarray([s.annotation.subject_id for s in segments], dtype=str),
    )
