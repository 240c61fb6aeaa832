"""WAV and annotation handling for swallow-sound corpora.

Recordings are mono WAV files (16-bit PCM or IEEE float). Swallow events
are marked in CSV annotation files, one row per event, and sliced out of
the parent recording as AudioSegment objects. All types are immutable
after construction and safe to share across threads.

Two CSV layouts are accepted:

* per-recording annotations, header ``start_s,end_s,label,consistency,subject_id``
* a corpus manifest with a leading ``file`` column, so one CSV can
  reference many single-swallow WAV files

Lines starting with ``#`` are comments. Decimal points only; locale
formats such as ``1,5`` are rejected.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AnnotationFormatError,
    AnnotationRangeError,
    AnnotationVocabularyError,
    DomainError,
    ParameterError,
    SegmentRangeError,
    ShapeError,
    WavCodecError,
    WavFormatError,
    WavLayoutError,
)
from .ioutil import atomic_write_bytes, atomic_write_text

LABELS = ("normal", "dysphagic")
CONSISTENCIES = ("thin", "mildly_thick", "porridge", "unknown")

ANNOTATION_HEADER = ("start_s", "end_s", "label", "consistency", "subject_id")
MANIFEST_HEADER = ("file",) + ANNOTATION_HEADER

_PCM_SCALE = 32768.0


def _freeze(values) -> np.ndarray:
    x = np.array(values, dtype=np.float64, copy=True)
    x.flags.writeable = False
    return x


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono sample sequence in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = _freeze(self.samples)
        if x.ndim != 1:
            raise ShapeError("AudioSignal samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise DomainError("AudioSignal samples must be finite")
        if x.size and (x.min() < -1.0 or x.max() > 1.0):
            raise DomainError("AudioSignal samples must lie in [-1, 1]")
        if int(self.sample_rate_hz) <= 0:
            raise ParameterError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class SegmentAnnotation:
    """Labeled time interval within a recording."""

    start_s: float
    end_s: float
    label: str
    consistency: str
    subject_id: str

    def __post_init__(self):
        if not (np.isfinite(self.start_s) and np.isfinite(self.end_s)):
            raise DomainError("annotation times must be finite")
        if self.start_s < 0:
            raise AnnotationRangeError("start_s must be >= 0")
        if self.end_s <= self.start_s:
            raise AnnotationRangeError("end_s must be greater than start_s")
        if self.label not in LABELS:
            raise AnnotationVocabularyError(f"unknown label {self.label!r}")
        if self.consistency not in CONSISTENCIES:
            raise AnnotationVocabularyError(f"unknown consistency {self.consistency!r}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True, eq=False)
class AudioSegment:
    """Samples cut from a recording, together with their annotation."""

    annotation: SegmentAnnotation
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = _freeze(self.samples)
        if x.ndim != 1:
            raise ShapeError("AudioSegment samples must be one-dimensional")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class ManifestEntry:
    """One corpus-manifest row: a WAV file name plus its annotation."""

    file: str
    annotation: SegmentAnnotation


def read_wav(path) -> AudioSignal:
    """Read a mono RIFF/WAVE file.

    16-bit PCM samples are divided by 32768 (so -32768 maps to -1.0);
    IEEE-float samples are clipped to [-1, 1]. Chunks other than ``fmt ``
    and ``data`` are skipped.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: fmt chunk too small")

    code, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if code == 0xFFFE and len(fmt) >= 26:
        (code,) = struct.unpack("<H", fmt[24:26])
    if channels != 1:
        raise WavLayoutError(f"{path}: {channels} channels, only mono is supported")
    if rate <= 0 or block_align <= 0:
        raise WavFormatError(f"{path}: invalid sample rate or block align")

    n = len(payload) // block_align
    if code == 1:
        if bits != 16:
            raise WavCodecError(f"{path}: {bits}-bit PCM is not supported")
        ints = np.frombuffer(payload[: n * block_align], dtype="<i2")
        samples = ints.astype(np.float64) / _PCM_SCALE
    elif code == 3:
        if bits == 32:
            raw = np.frombuffer(payload[: n * block_align], dtype="<f4")
        elif bits == 64:
            raw = np.frombuffer(payload[: n * block_align], dtype="<f8")
        else:
            raise WavCodecError(f"{path}: {bits}-bit float is not supported")
        samples = np.clip(raw.astype(np.float64), -1.0, 1.0)
    else:
        raise WavCodecError(f"{path}: unsupported format code {code}")

    return AudioSignal(samples, rate)


def write_wav(path, signal: AudioSignal) -> Path:
    """Write a mono 16-bit PCM WAV file."""
    ints = np.clip(np.rint(signal.samples * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    rate = signal.sample_rate_hz
    fmt = struct.pack("<HHIIHH", 1, 1, rate, rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return atomic_write_bytes(path, b"RIFF" + struct.pack("<I", len(body)) + body)


def _csv_rows(path):
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append((lineno, [cell.strip() for cell in next(csv.reader([line]))]))
    return rows


def _parse_annotation_cells(cells, lineno) -> SegmentAnnotation:
    try:
        start = float(cells[0])
        end = float(cells[1])
    except ValueError as exc:
        raise AnnotationFormatError(
            f"line {lineno}: cannot parse time value ({exc})", line=lineno
        ) from None
    if not (np.isfinite(start) and np.isfinite(end)):
        raise AnnotationFormatError(f"line {lineno}: non-finite time value", line=lineno)
    if start < 0:
        raise AnnotationRangeError(f"line {lineno}: start_s must be >= 0", line=lineno)
    if end <= start:
        raise AnnotationRangeError(
            f"line {lineno}: end_s {end} must exceed start_s {start}", line=lineno
        )
    label, consistency, subject = cells[2], cells[3], cells[4]
    if label not in LABELS:
        raise AnnotationVocabularyError(
            f"line {lineno}: unknown label {label!r}", line=lineno
        )
    if consistency not in CONSISTENCIES:
        raise AnnotationVocabularyError(
            f"line {lineno}: unknown consistency {consistency!r}", line=lineno
        )
    return SegmentAnnotation(start, end, label, consistency, subject)


def _parse_rows(path, require_file_column: bool):
    rows = _csv_rows(path)
    if not rows:
        raise AnnotationFormatError(f"{path}: empty annotation file")
    header_line, header = rows[0]
    header_t = tuple(header)
    if header_t == MANIFEST_HEADER:
        has_file = True
    elif header_t == ANNOTATION_HEADER and not require_file_column:
        has_file = False
    else:
        raise AnnotationFormatError(
            f"{path}: unexpected header {','.join(header)!r}", line=header_line
        )
    expected = len(MANIFEST_HEADER) if has_file else len(ANNOTATION_HEADER)
    entries = []
    for lineno, cells in rows[1:]:
        if len(cells) != expected:
            raise AnnotationFormatError(
                f"line {lineno}: expected {expected} fields, got {len(cells)}",
                line=lineno,
            )
        file_name = cells[0] if has_file else None
        entries.append((file_name, _parse_annotation_cells(cells[-5:], lineno)))
    return entries


def parse_annotations(path) -> list[SegmentAnnotation]:
    """Parse an annotation CSV into SegmentAnnotation objects, in file order.

    A manifest-style file (leading ``file`` column) is accepted too; the
    file column is ignored here.
    """
    return [ann for _, ann in _parse_rows(path, require_file_column=False)]


def parse_manifest(path) -> list[ManifestEntry]:
    """Parse a corpus manifest (``file,start_s,end_s,...``) in file order."""
    return [
        ManifestEntry(file, ann)
        for file, ann in _parse_rows(path, require_file_column=True)
    ]


def slice_segments(
    signal: AudioSignal, annotations: list[SegmentAnnotation]
) -> list[AudioSegment]:
    """Cut annotated intervals out of a recording, in annotation order.

    Overlapping annotations are fine; each segment gets its own copy of the
    samples. Sample indices are round(t * sample_rate).
    """
    sr = signal.sample_rate_hz
    out = []
    for i, ann in enumerate(annotations):
        a = round(ann.start_s * sr)
        b = round(ann.end_s * sr)
        if a < 0 or b > signal.n_samples:
            raise SegmentRangeError(
                f"annotation {i} [{ann.start_s}, {ann.end_s}] s lies outside the "
                f"{signal.duration_s} s signal"
            )
        out.append(AudioSegment(ann, signal.samples[a:b], sr))
    return out


def load_manifest_segments(manifest_path) -> tuple[list[AudioSegment], list[str]]:
    """Load every segment referenced by a corpus manifest.

    WAV paths are resolved relative to the manifest's directory. Returns the
    segments in manifest order plus an id per segment (the WAV file stem,
    suffixed with the row index when a file is referenced more than once).
    """
    manifest_path = Path(manifest_path)
    entries = parse_manifest(manifest_path)
    cache: dict[str, AudioSignal] = {}
    counts: dict[str, int] = {}
    segments = []
    ids = []
    for entry in entries:
        if entry.file not in cache:
            cache[entry.file] = read_wav(manifest_path.parent / entry.file)
        signal = cache[entry.file]
        segments.extend(slice_segments(signal, [entry.annotation]))
        stem = Path(entry.file).stem
        k = counts.get(entry.file, 0)
        counts[entry.file] = k + 1
        ids.append(stem if k == 0 else f"{stem}_{k}")
    return segments, ids


def write_annotations(path, annotations: list[SegmentAnnotation]) -> Path:
    """Write a per-recording annotation CSV (no file column)."""
    lines = [",".join(ANNOTATION_HEADER)]
    for ann in annotations:
        lines.append(
            f"{ann.start_s!r},{ann.end_s!r},{ann.label},{ann.consistency},{ann.subject_id}"
        )
    return atomic_write_text(path, "\n".join(lines) + "\n")
