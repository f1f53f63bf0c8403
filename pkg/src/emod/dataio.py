"""Dataset manifests, the binary segment container and the synthetic EEG generator.

Segment file layout (little-endian)::

    magic "EMODSEG1" | version u32 | n_segments u32 | n_channels u32 | n_samples u32 | sampling_rate f32
    per segment: subject_id u32 | tag u8 | (tag 0: category u16 | tag 1: valence f32, arousal f32)
                 | n_channels * n_samples float32, channel-major
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import from_dict as config_from_dict
from .exceptions import BadMagic, FormatError, InvalidConfig, LabelSchemeMismatch, TruncatedFile
from .signal import EegSegment
from .va_space import Continuous, Discrete, DiscreteMappingTable, to_va

SEG_MAGIC = b"EMODSEG1"
SEG_VERSION = 1
_HEADER = struct.Struct("<8sIIIIf")

# 10-10 system electrode names; synthetic montages draw from this list.
STANDARD_CHANNELS = (
    "Fp1 Fpz Fp2 AF7 AF3 AFz AF4 AF8 F7 F5 F3 F1 Fz F2 F4 F6 F8 FT7 FC5 FC3 FC1 FCz FC2 FC4 FC6 FT8 "
    "T7 C5 C3 C1 Cz C2 C4 C6 T8 TP7 CP5 CP3 CP1 CPz CP2 CP4 CP6 TP8 P7 P5 P3 P1 Pz P2 P4 P6 P8 "
    "PO7 PO3 POz PO4 PO8 O1 Oz O2 Iz TP9 TP10"
).split()


@dataclass
class DatasetManifest:
    name: str
    sampling_rate: float
    channels: list
    label_scheme: dict
    segment_seconds: float
    segment_file: str
    mapping_table: str | None = None

    def __post_init__(self):
        self.channels = list(self.channels)
        if len(set(self.channels)) != len(self.channels):
            raise InvalidConfig("channel names must be unique", "channels")
        if not self.sampling_rate > 0:
            raise InvalidConfig("sampling_rate must be positive", "sampling_rate")
        kind = self.label_scheme.get("type")
        if kind == "continuous":
            for axis in ("valence_range", "arousal_range"):
                lo, hi = self.label_scheme.get(axis, (None, None))
                if lo is None or not lo < hi:
                    raise InvalidConfig(f"label_scheme.{axis} needs lo < hi", f"label_scheme.{axis}")
        elif kind == "discrete":
            if not self.label_scheme.get("categories"):
                raise InvalidConfig("discrete scheme needs a category list", "label_scheme.categories")
        else:
            raise InvalidConfig("label_scheme.type must be 'discrete' or 'continuous'", "label_scheme.type")

    @property
    def discrete(self):
        return self.label_scheme["type"] == "discrete"

    @property
    def n_samples(self):
        return int(round(self.segment_seconds * self.sampling_rate))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: invalid JSON ({exc})") from exc
        known = {"name", "sampling_rate", "channels", "label_scheme", "segment_seconds", "segment_file", "mapping_table"}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown manifest keys {sorted(unknown)}", sorted(unknown)[0])
        missing = known - {"mapping_table"} - set(raw)
        if missing:
            raise InvalidConfig(f"manifest missing {sorted(missing)}", sorted(missing)[0])
        m = cls(**raw)
        # relative paths resolve against the manifest's directory
        for attr in ("segment_file", "mapping_table"):
            val = getattr(m, attr)
            if val and not Path(val).is_absolute():
                setattr(m, attr, str(path.parent / val))
        return m


@dataclass
class EegDataset:
    """In-memory dataset: one (N, C, T) array plus aligned labels."""

    manifest: DatasetManifest
    data: np.ndarray
    subjects: np.ndarray
    labels: list
    table: DiscreteMappingTable | None = None
    _va: np.ndarray | None = field(default=None, repr=False)

    @property
    def name(self):
        return self.manifest.name

    @property
    def channels(self):
        return tuple(self.manifest.channels)

    def __len__(self):
        return len(self.data)

    @property
    def va(self) -> np.ndarray:
        if self._va is None:
            pts = [to_va(lbl, self.table) for lbl in self.labels]
            self._va = np.array([[p.valence, p.arousal] for p in pts], dtype=np.float64).reshape(-1, 2)
        return self._va

    def segment(self, i: int) -> EegSegment:
        return EegSegment(self.data[i], self.manifest.sampling_rate, self.channels, self.name,
                          int(self.subjects[i]), self.labels[i])

    def segments(self) -> list[EegSegment]:
        return [self.segment(i) for i in range(len(self))]

    def subset(self, idx) -> "EegDataset":
        idx = np.asarray(idx)
        return EegDataset(self.manifest, self.data[idx], self.subjects[idx], [self.labels[i] for i in idx],
                          self.table, None if self._va is None else self._va[idx])


# ------------------------------------------------------------ segment files
def write_segments(path, manifest: DatasetManifest, segments: Sequence[EegSegment]):
    categories = manifest.label_scheme.get("categories", [])
    n_ch = len(manifest.channels)
    n_samp = manifest.n_samples
    chunks = [_HEADER.pack(SEG_MAGIC, SEG_VERSION, len(segments), n_ch, n_samp, manifest.sampling_rate)]
    for i, seg in enumerate(segments):
        if seg.data.shape != (n_ch, n_samp):
            raise FormatError(f"segment {i}: shape {seg.data.shape} != ({n_ch}, {n_samp})")
        lbl = seg.label
        if isinstance(lbl, Discrete):
            if not manifest.discrete:
                raise LabelSchemeMismatch(f"segment {i}: discrete label in a continuous dataset")
            chunks.append(struct.pack("<IBH", seg.subject_id, 0, categories.index(lbl.category)))
        elif isinstance(lbl, Continuous):
            if manifest.discrete:
                raise LabelSchemeMismatch(f"segment {i}: continuous label in a discrete dataset")
            chunks.append(struct.pack("<IBff", seg.subject_id, 1, lbl.valence, lbl.arousal))
        else:
            raise FormatError(f"segment {i}: unsupported label {lbl!r}")
        chunks.append(np.ascontiguousarray(seg.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def parse_segments(buf: bytes, manifest: DatasetManifest):
    """Decode a segment container; returns (data, subjects, labels)."""
    if len(buf) < _HEADER.size:
        raise TruncatedFile(f"file is {len(buf)} bytes, shorter than the header")
    magic, version, n_seg, n_ch, n_samp, rate = _HEADER.unpack_from(buf, 0)
    if magic != SEG_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != SEG_VERSION:
        raise FormatError(f"unsupported version {version}")
    if n_ch != len(manifest.channels):
        raise FormatError(f"header has {n_ch} channels, manifest lists {len(manifest.channels)}")
    if n_samp != manifest.n_samples or n_samp == 0:
        raise FormatError(f"header has {n_samp} samples per segment, manifest implies {manifest.n_samples}")
    if not np.isclose(rate, manifest.sampling_rate, rtol=1e-6):
        raise FormatError(f"header sampling rate {rate} != manifest {manifest.sampling_rate}")
    payload = 4 * n_ch * n_samp
    min_record = 7 + payload
    if n_seg * min_record > len(buf) - _HEADER.size:
        # report the first segment that cannot fit even at minimal size
        first_bad = (len(buf) - _HEADER.size) // min_record
        raise TruncatedFile(f"segment {first_bad}: file ends before {n_seg} segments", first_bad)
    categories = manifest.label_scheme.get("categories", [])
    scheme = manifest.label_scheme
    data = np.empty((n_seg, n_ch, n_samp), dtype=np.float32)
    subjects = np.empty(n_seg, dtype=np.int64)
    labels = []
    pos = _HEADER.size
    for i in range(n_seg):
        if pos + 5 > len(buf):
            raise TruncatedFile(f"segment {i}: truncated record header", i)
        subj, tag = struct.unpack_from("<IB", buf, pos)
        pos += 5
        if tag == 0:
            if not manifest.discrete:
                raise LabelSchemeMismatch(f"segment {i}: discrete tag in a continuous dataset")
            if pos + 2 > len(buf):
                raise TruncatedFile(f"segment {i}: truncated label", i)
            (cat,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            if cat >= len(categories):
                raise FormatError(f"segment {i}: category id {cat} outside scheme of {len(categories)}")
            labels.append(Discrete(categories[cat], manifest.name))
        elif tag == 1:
            if manifest.discrete:
                raise LabelSchemeMismatch(f"segment {i}: continuous tag in a discrete dataset")
            if pos + 8 > len(buf):
                raise TruncatedFile(f"segment {i}: truncated label", i)
            v, a = struct.unpack_from("<ff", buf, pos)
            pos += 8
            vr, ar = tuple(scheme["valence_range"]), tuple(scheme["arousal_range"])
            if not (np.isfinite(v) and np.isfinite(a)):
                raise FormatError(f"segment {i}: non-finite label")
            labels.append(Continuous(float(v), float(a), vr, ar))
        else:
            raise FormatError(f"segment {i}: unknown label tag {tag}")
        if pos + payload > len(buf):
            raise TruncatedFile(f"segment {i}: truncated payload", i)
        block = np.frombuffer(buf, dtype="<f4", count=n_ch * n_samp, offset=pos)
        if not np.all(np.isfinite(block)):
            raise FormatError(f"segment {i}: payload contains NaN/Inf")
        data[i] = block.reshape(n_ch, n_samp)
        subjects[i] = subj
        pos += payload
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {n_seg} segments")
    return data, subjects, labels


def write_dataset(directory, manifest: DatasetManifest, segments: Sequence[EegSegment],
                  table: DiscreteMappingTable | None = None) -> Path:
    """Write manifest JSON, segment file and (for discrete schemes) the mapping table."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    seg_name = Path(manifest.segment_file).name or f"{manifest.name}.seg"
    out = DatasetManifest(**{**asdict(manifest), "segment_file": seg_name})
    if table is not None:
        out.mapping_table = f"{manifest.name}_va_table.json"
        (directory / out.mapping_table).write_text(table.to_json())
    write_segments(directory / seg_name, out, segments)
    path = directory / f"{manifest.name}.json"
    path.write_text(out.to_json())
    return path


def read_dataset(manifest_path) -> EegDataset:
    manifest = DatasetManifest.load(manifest_path)
    try:
        buf = Path(manifest.segment_file).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read segment file: {exc}") from exc
    data, subjects, labels = parse_segments(buf, manifest)
    table = None
    if manifest.discrete:
        table = DiscreteMappingTable.from_json(manifest.mapping_table) if manifest.mapping_table else DiscreteMappingTable.default()
        missing = [c for c in manifest.label_scheme["categories"] if c not in table]
        if missing:
            raise InvalidConfig(f"mapping table lacks categories {missing}", "mapping_table")
    return EegDataset(manifest, data, subjects, labels, table)


def dataset_from_segments(name: str, segments: Sequence[EegSegment], label_scheme: dict,
                          table: DiscreteMappingTable | None = None) -> EegDataset:
    first = segments[0]
    manifest = DatasetManifest(name, first.sampling_rate, list(first.channels), label_scheme,
                               first.n_samples / first.sampling_rate, f"{name}.seg")
    data = np.stack([s.data for s in segments]).astype(np.float32)
    return EegDataset(manifest, data, np.array([s.subject_id for s in segments]), [s.label for s in segments], table)


# ---------------------------------------------------------------- synthetic
MACRO_CENTERS = [(-3.0, -3.0), (-3.0, 0.0), (-3.0, 3.0), (0.0, -3.0), (0.0, 0.0),
                 (0.0, 3.0), (3.0, -3.0), (3.0, 0.0), (3.0, 3.0)]
VALENCE_HZ = 10.0
AROUSAL_HZ = 25.0
# planted amplitude = 1 + AFFINE_SLOPE * coordinate / 4, i.e. 0.5 .. 1.5
AFFINE_SLOPE = 0.5


@dataclass
class SyntheticSpec:
    name: str = "synth"
    n_subjects: int = 10
    n_segments: int = 200
    channels: int = 8
    sampling_rate: float = 200.0
    segment_seconds: float = 4.0
    snr: float = 1.0
    seed: int = 0
    label_mode: str = "continuous"
    channel_names: list | None = None
    channel_gain_seed: int | None = None

    def __post_init__(self):
        if not self.snr > 0:
            raise InvalidConfig("snr must be positive", "snr")
        if self.channels < 2:
            raise InvalidConfig("need at least two channels", "channels")
        if self.label_mode not in ("continuous", "discrete-9"):
            raise InvalidConfig("label_mode must be 'continuous' or 'discrete-9'", "label_mode")
        if self.channel_names is not None and len(self.channel_names) != self.channels:
            raise InvalidConfig("channel_names length differs from channels", "channel_names")
        if self.sampling_rate / 2 <= AROUSAL_HZ:
            raise InvalidConfig("sampling_rate too low for the planted 25 Hz band", "sampling_rate")
        if self.n_subjects < 1 or self.n_segments < 1:
            raise InvalidConfig("need at least one subject and one segment", "n_segments")

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticSpec":
        return config_from_dict(cls, raw, "synthetic")

    @property
    def channel_list(self):
        return list(self.channel_names or STANDARD_CHANNELS[: self.channels])

    @property
    def n_samples(self):
        return int(round(self.segment_seconds * self.sampling_rate))


def pink_noise(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """1/f-power noise normalised to unit variance along the last axis."""
    n = shape[-1]
    spec = rng.standard_normal(shape[:-1] + (n // 2 + 1,)) + 1j * rng.standard_normal(shape[:-1] + (n // 2 + 1,))
    f = np.arange(n // 2 + 1, dtype=np.float64)
    f[0] = 1.0
    spec = spec / np.sqrt(f)
    spec[..., 0] = 0.0
    x = np.fft.irfft(spec, n=n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


class SyntheticGenerator:
    """Planted-oscillation EEG: valence drives 10 Hz amplitude, arousal drives 25 Hz."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        gain_rng = np.random.default_rng(spec.seed if spec.channel_gain_seed is None else spec.channel_gain_seed)
        self.valence_gain = gain_rng.uniform(0.5, 1.5, spec.channels)
        self.arousal_gain = gain_rng.uniform(0.5, 1.5, spec.channels)
        subj_rng = np.random.default_rng([spec.seed, 1])
        self.subject_gain = subj_rng.uniform(0.8, 1.2, spec.n_subjects)
        self.subject_planted = subj_rng.uniform(0.9, 1.1, (spec.n_subjects, 2))
        # mean planted power over uniform latents and channel gains, per unit scale
        e_amp2 = 1.0 + AFFINE_SLOPE**2 / 3.0
        e_gain2 = 1.0 + 1.0 / 12.0
        self.scale = np.sqrt(2.0 * spec.snr / (2.0 * e_amp2 * e_gain2))

    def amplitudes(self, v: float, a: float, subject: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel planted amplitudes of the 10 Hz and 25 Hz components."""
        jv, ja = self.subject_planted[subject % self.spec.n_subjects]
        amp_v = self.scale * jv * self.valence_gain * (1.0 + AFFINE_SLOPE * v / 4.0)
        amp_a = self.scale * ja * self.arousal_gain * (1.0 + AFFINE_SLOPE * a / 4.0)
        return amp_v, amp_a

    def components(self, v: float, a: float, subject: int, rng: np.random.Generator):
        """Background and planted parts of one segment, before the subject gain."""
        spec = self.spec
        t = np.arange(spec.n_samples) / spec.sampling_rate
        background = pink_noise(rng, (spec.channels, spec.n_samples))
        amp_v, amp_a = self.amplitudes(v, a, subject)
        phase = rng.uniform(0, 2 * np.pi, 2)
        planted = (amp_v[:, None] * np.sin(2 * np.pi * VALENCE_HZ * t + phase[0])
                   + amp_a[:, None] * np.sin(2 * np.pi * AROUSAL_HZ * t + phase[1]))
        return background, planted

    def segment(self, v: float, a: float, subject: int, rng: np.random.Generator) -> np.ndarray:
        background, planted = self.components(v, a, subject, rng)
        return (self.subject_gain[subject % self.spec.n_subjects] * (background + planted)).astype(np.float32)

    def latents(self, rng: np.random.Generator) -> np.ndarray:
        if self.spec.label_mode == "continuous":
            return rng.uniform(-4.0, 4.0, (self.spec.n_segments, 2))
        return np.array(MACRO_CENTERS)[rng.integers(0, 9, self.spec.n_segments)]

    def generate(self) -> EegDataset:
        spec = self.spec
        rng = np.random.default_rng([spec.seed, 2])
        latents = self.latents(rng)
        subjects = rng.integers(0, spec.n_subjects, spec.n_segments)
        data = np.stack([self.segment(v, a, s, rng) for (v, a), s in zip(latents, subjects)])
        if spec.label_mode == "continuous":
            scheme = {"type": "continuous", "valence_range": [1.0, 9.0], "arousal_range": [1.0, 9.0]}
            # latent [-4, 4] stored on a 1..9 self-report scale; float32 like the file
            labels = [Continuous(float(np.float32(v + 5.0)), float(np.float32(a + 5.0)), (1.0, 9.0), (1.0, 9.0))
                      for v, a in latents]
            table = None
        else:
            names = discrete_category_names()
            scheme = {"type": "discrete", "categories": names}
            index = {c: k for k, c in enumerate(MACRO_CENTERS)}
            labels = [Discrete(names[index[(float(v), float(a))]], spec.name) for v, a in latents]
            table = discrete_table()
        manifest = DatasetManifest(spec.name, spec.sampling_rate, spec.channel_list, scheme,
                                   spec.segment_seconds, f"{spec.name}.seg")
        ds = EegDataset(manifest, data, subjects.astype(np.int64), labels, table)
        ds.latents = latents
        return ds


def discrete_category_names() -> list[str]:
    return [f"zone_{mc}{mr}" for mc in range(3) for mr in range(3)]


def discrete_table() -> DiscreteMappingTable:
    names = discrete_category_names()
    return DiscreteMappingTable(dict(zip(names, MACRO_CENTERS)),
                                {n: "synthetic macro-region centre" for n in names})


def generate_synthetic(spec: SyntheticSpec, directory=None) -> EegDataset:
    """Generate a dataset in memory, and write it to ``directory`` when given."""
    ds = SyntheticGenerator(spec).generate()
    if directory is not None:
        write_dataset(directory, ds.manifest, ds.segments(), ds.table)
    return ds


def quadrant_labels(va: np.ndarray) -> np.ndarray:
    """4-class target from the signs of valence and arousal."""
    va = np.asarray(va)
    return (va[:, 0] >= 0).astype(int) * 2 + (va[:, 1] >= 0).astype(int)
