"""Sample ingestion, segmentation, splits, and a synthetic vibration generator.

On-disk layout: a `manifest.json` describing the classes plus one raw
`class_{id}.f32le` file per class holding contiguous fixed-length samples
as little-endian 32-bit floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .signal_core import Signal

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassEntry:
    label_id: int
    name: str
    file_path: str
    sample_count: int


@dataclass(frozen=True)
class DatasetManifest:
    classes: list[ClassEntry]
    sample_length: int
    sample_rate_hz: float
    format_version: int = MANIFEST_FORMAT_VERSION
    root: Path | None = None  # directory the manifest was loaded from

    def __post_init__(self):
        ids = sorted(c.label_id for c in self.classes)
        if ids != list(range(len(self.classes))):
            raise FormatError(f"label ids must be dense 0..K-1, got {ids}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)


class SplitPolicy(Enum):
    chronological_first = "chronological_first"


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    policy: SplitPolicy = SplitPolicy.chronological_first

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("train_fraction must lie in (0, 1)")


def segment(signal: Signal, sample_length: int, hop: int) -> list[Signal]:
    """Sliding windows starting at 0, hop, 2*hop, ..."""
    if hop < 1:
        raise ConfigError("hop must be >= 1")
    if sample_length > len(signal):
        raise DimensionError(
            f"signal of length {len(signal)} shorter than one window ({sample_length})")
    count = (len(signal) - sample_length) // hop + 1
    return [Signal(signal.samples[i * hop: i * hop + sample_length],
                   signal.sample_rate_hz, signal.label)
            for i in range(count)]


def hop_for_count(total_length: int, sample_length: int, count: int) -> int:
    """Largest hop yielding at least `count` windows: floor((L-len)/(count-1))."""
    if count < 2:
        raise ConfigError("count must be >= 2")
    hop = (total_length - sample_length) // (count - 1)
    if hop < 1:
        raise DimensionError(
            f"cannot cut {count} windows of {sample_length} from length {total_length}")
    return hop


def split(samples: list, spec: SplitSpec) -> tuple[list, list]:
    """Chronological split: first floor(fraction*N) samples train, rest test."""
    if not samples:
        raise DimensionError("cannot split an empty class")
    n_train = int(spec.train_fraction * len(samples))
    train, test = samples[:n_train], samples[n_train:]
    if not train or not test:
        raise DimensionError(
            f"split of {len(samples)} samples at {spec.train_fraction} leaves an empty side")
    return train, test


# -- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class FaultClassSpec:
    name: str
    carrier_freq_hz: float
    impulse_rate_hz: float
    modulation_depth: float
    decay_constant: float  # 1/s decay of impulse-excited resonance
    amplitude: float


@dataclass(frozen=True)
class SyntheticFaultSpec:
    classes: list[FaultClassSpec]
    sample_rate_hz: float
    sample_length: int
    samples_per_class: int
    rng_seed: int = 0

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("need at least one class")
        for c in self.classes:
            if c.carrier_freq_hz >= self.sample_rate_hz / 2:
                raise ConfigError(
                    f"class {c.name!r}: carrier {c.carrier_freq_hz} Hz is at or "
                    f"above Nyquist ({self.sample_rate_hz / 2} Hz)")


def demo_fault_classes() -> list[FaultClassSpec]:
    """Four separable fault classes for demos and self-tests.

    Carriers are fs/8, fs/10, fs/12 and fs/16 at fs = 4096 Hz, so each class
    leaves its Gramian stripe at a distinct lag."""
    return [
        FaultClassSpec("healthy", 256.0, 20.0, 0.2, 80.0, 1.0),
        FaultClassSpec("inner_race", 512.0, 90.0, 0.8, 120.0, 1.0),
        FaultClassSpec("outer_race", 4096.0 / 12.0, 60.0, 0.5, 100.0, 1.0),
        FaultClassSpec("ball", 409.6, 35.0, 0.35, 60.0, 1.0),
    ]


def _synth_sample(cls: FaultClassSpec, fs: float, length: int, rng) -> np.ndarray:
    """Amplitude-modulated carrier plus impulse-excited decaying resonances.

    The carrier dominates the spectrum so the Gramian stripe period equals
    the carrier period fs/carrier_freq_hz (in samples)."""
    t = np.arange(length) / fs
    phase = rng.uniform(0, 2 * np.pi)
    mod_phase = rng.uniform(0, 2 * np.pi)
    envelope = 1.0 + cls.modulation_depth * np.sin(2 * np.pi * cls.impulse_rate_hz * t + mod_phase)
    x = cls.amplitude * envelope * np.sin(2 * np.pi * cls.carrier_freq_hz * t + phase)

    # impulse train exciting a decaying resonance at the carrier frequency
    train = np.zeros(length)
    period = fs / cls.impulse_rate_hz
    pos = rng.uniform(0, period)
    while pos < length:
        train[int(pos)] = rng.uniform(0.8, 1.2)
        pos += period * rng.uniform(0.98, 1.02)
    kt = np.arange(int(min(length, max(1, 5 * fs / max(cls.decay_constant, 1e-9))))) / fs
    kernel = np.exp(-cls.decay_constant * kt) * np.sin(2 * np.pi * cls.carrier_freq_hz * kt)
    impulse_part = np.convolve(train, kernel)[:length]
    return x + 0.5 * cls.amplitude * impulse_part


def generate_synthetic(spec: SyntheticFaultSpec, out_dir) -> DatasetManifest:
    """Write class_{id}.f32le files plus manifest.json; deterministic per seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for label_id, cls in enumerate(spec.classes):
        rng = np.random.default_rng([spec.rng_seed, label_id])
        samples = np.stack([
            _synth_sample(cls, spec.sample_rate_hz, spec.sample_length, rng)
            for _ in range(spec.samples_per_class)])
        fname = f"class_{label_id}.f32le"
        samples.astype("<f4").tofile(out / fname)
        entries.append(ClassEntry(label_id, cls.name, fname, spec.samples_per_class))
    manifest = DatasetManifest(entries, spec.sample_length, spec.sample_rate_hz,
                               root=out)
    save_manifest(manifest, out / "manifest.json")
    return manifest


# -- manifest and sample I/O -------------------------------------------------

def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "format_version": manifest.format_version,
        "sample_length": manifest.sample_length,
        "sample_rate_hz": manifest.sample_rate_hz,
        "classes": [{"label_id": c.label_id, "name": c.name,
                     "file_path": c.file_path, "sample_count": c.sample_count}
                    for c in manifest.classes],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise FormatError(f"{path}: missing or unsupported format_version")
    try:
        classes = [ClassEntry(int(c["label_id"]), str(c["name"]),
                              str(c["file_path"]), int(c["sample_count"]))
                   for c in doc["classes"]]
        manifest = DatasetManifest(classes, int(doc["sample_length"]),
                                   float(doc["sample_rate_hz"]), root=path.parent)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed manifest: {e}") from e
    if manifest.sample_length < 1 or manifest.sample_rate_hz <= 0:
        raise FormatError(f"{path}: invalid sample_length or sample_rate_hz")
    for c in manifest.classes:
        fpath = path.parent / c.file_path
        if not fpath.exists():
            raise FormatError(f"{path}: class file {c.file_path} does not exist")
        expected = c.sample_count * manifest.sample_length * 4
        actual = fpath.stat().st_size
        if actual != expected:
            raise FormatError(
                f"{fpath}: expected {expected} bytes "
                f"({c.sample_count} x {manifest.sample_length} float32), got {actual}; "
                f"file diverges at byte offset {min(expected, actual)}")
    return manifest


def load_samples(manifest: DatasetManifest, label_id: int) -> list[Signal]:
    entry = next((c for c in manifest.classes if c.label_id == label_id), None)
    if entry is None:
        raise FormatError(f"no class with label id {label_id}")
    if manifest.root is None:
        raise FormatError("manifest has no root directory; load it from disk first")
    raw = np.fromfile(manifest.root / entry.file_path, dtype="<f4")
    data = raw.reshape(entry.sample_count, manifest.sample_length).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{entry.file_path}: contains non-finite values")
    return [Signal(row, manifest.sample_rate_hz, label=label_id) for row in data]


def import_csv_class(csv_path, out_dir, label_id: int, name: str) -> ClassEntry:
    """One CSV file -> one class file.

    Expected layout: header row `sample_rate_hz,<value>`, then one
    comma-separated sample per line. Returns (entry, sample_rate_hz,
    sample_length).
    """
    csv_path = Path(csv_path)
    with open(csv_path) as f:
        header = f.readline().strip().split(",")
        if len(header) != 2 or header[0] != "sample_rate_hz":
            raise FormatError(f"{csv_path}: line 1: expected header 'sample_rate_hz,<value>'")
        try:
            rate = float(header[1])
        except ValueError as e:
            raise FormatError(f"{csv_path}: line 1: bad sample rate {header[1]!r}") from e
        rows = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                rows.append(np.array([float(v) for v in line.split(",")]))
            except ValueError as e:
                raise FormatError(f"{csv_path}: line {lineno}: {e}") from e
    if not rows:
        raise FormatError(f"{csv_path}: no samples")
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise FormatError(f"{csv_path}: inconsistent sample lengths {sorted(lengths)}")
    data = np.stack(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fname = f"class_{label_id}.f32le"
    data.astype("<f4").tofile(out / fname)
    entry = ClassEntry(label_id, name, fname, data.shape[0])
    return entry, rate, data.shape[1]


def import_csv_dataset(csv_paths: list, out_dir) -> DatasetManifest:
    """Each CSV file becomes one class, in the order given."""
    entries, rates, lengths = [], set(), set()
    for label_id, p in enumerate(csv_paths):
        entry, rate, length = import_csv_class(p, out_dir, label_id, Path(p).stem)
        entries.append(entry)
        rates.add(rate)
        lengths.add(length)
    if len(rates) != 1 or len(lengths) != 1:
        raise FormatError(
            f"class files disagree: sample rates {sorted(rates)}, lengths {sorted(lengths)}")
    manifest = DatasetManifest(entries, lengths.pop(), rates.pop(), root=Path(out_dir))
    save_manifest(manifest, Path(out_dir) / "manifest.json")
    return manifest
