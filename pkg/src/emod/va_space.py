"""Unified valence-arousal space: label projection, 9x9 grid, 3x3 macro regions."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .exceptions import DegenerateScale, InvalidConfig, UnknownCategory

logger = logging.getLogger(__name__)

VA_MIN = -4.0
VA_MAX = 4.0
N_LEVELS = 9
N_MACRO = 3
MAX_DISTANCE = 8.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class Discrete:
    category: str
    scheme: str = "default"


@dataclass(frozen=True)
class Continuous:
    valence: float
    arousal: float
    valence_range: tuple = (1.0, 9.0)
    arousal_range: tuple = (1.0, 9.0)


EmotionLabel = Union[Discrete, Continuous]


@dataclass(frozen=True)
class VaPoint:
    valence: float
    arousal: float

    def __post_init__(self):
        for v in (self.valence, self.arousal):
            if not VA_MIN <= v <= VA_MAX:
                raise ValueError(f"V-A coordinate {v} outside [-4, 4]")

    def as_array(self):
        return np.array([self.valence, self.arousal])


@dataclass(frozen=True)
class VaCell:
    v_level: int
    a_level: int

    @property
    def cell_index(self):
        return (self.v_level + 4, self.a_level + 4)

    @property
    def macro_index(self):
        return ((self.v_level + 4) // 3, (self.a_level + 4) // 3)


class DiscreteMappingTable:
    """Category name -> (valence, arousal) lookup with provenance notes."""

    def __init__(self, entries: Mapping[str, tuple], provenance: Mapping[str, str] | None = None):
        self.entries = {}
        for name, va in entries.items():
            v, a = (float(c) for c in va)
            if not (VA_MIN <= v <= VA_MAX and VA_MIN <= a <= VA_MAX):
                raise InvalidConfig(f"table entry {name!r} outside [-4, 4]", name)
            self.entries[name] = (v, a)
        self.provenance = dict(provenance or {})

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name):
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownCategory(f"category {name!r} not in mapping table") from None

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_json(cls, source) -> "DiscreteMappingTable":
        """Load ``{"category": {"va": [v, a], "provenance": "..."}}``.

        Entries may also be bare ``[v, a]`` pairs. Any other key inside an
        entry is rejected.
        """
        if isinstance(source, (str, Path)) and Path(source).exists():
            raw = json.loads(Path(source).read_text())
        elif isinstance(source, str):
            raw = json.loads(source)
        else:
            raw = source
        if not isinstance(raw, dict):
            raise InvalidConfig("mapping table must be a JSON object")
        entries, prov = {}, {}
        for name, val in raw.items():
            if isinstance(val, dict):
                extra = set(val) - {"va", "provenance"}
                if extra:
                    raise InvalidConfig(f"unknown keys {sorted(extra)} in entry {name!r}", name)
                if "va" not in val:
                    raise InvalidConfig(f"entry {name!r} lacks 'va'", name)
                pair = val["va"]
                prov[name] = str(val.get("provenance", ""))
            else:
                pair = val
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise InvalidConfig(f"entry {name!r} must hold [valence, arousal]", name)
            entries[name] = pair
        return cls(entries, prov)

    def to_json(self) -> str:
        return json.dumps(
            {k: {"va": list(v), "provenance": self.provenance.get(k, "")} for k, v in self.entries.items()},
            indent=2,
        )

    @classmethod
    def default(cls) -> "DiscreteMappingTable":
        text = resources.files("emod").joinpath("data/default_va_table.json").read_text()
        return cls.from_json(json.loads(text))


class _ClampCounter:
    count = 0


clamp_counter = _ClampCounter()


def _rescale(x, lo, hi):
    if hi == lo:
        raise DegenerateScale(f"scale bounds equal ({lo})")
    return VA_MIN + (VA_MAX - VA_MIN) * (x - lo) / (hi - lo)


def _clamp(x):
    if x < VA_MIN or x > VA_MAX:
        clamp_counter.count += 1
        logger.debug("clamping V-A coordinate %.4f", x)
        return min(max(x, VA_MIN), VA_MAX)
    return x


def to_va(label: EmotionLabel, table: DiscreteMappingTable | None = None) -> VaPoint:
    if isinstance(label, Continuous):
        v = _rescale(float(label.valence), *label.valence_range)
        a = _rescale(float(label.arousal), *label.arousal_range)
    elif isinstance(label, Discrete):
        table = table if table is not None else DiscreteMappingTable.default()
        v, a = table[label.category]
    elif isinstance(label, VaPoint):
        return label
    else:
        raise TypeError(f"unsupported label type {type(label).__name__}")
    return VaPoint(_clamp(v), _clamp(a))


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(p: VaPoint) -> VaCell:
    v, a = round_half_away([p.valence, p.arousal]).astype(int)
    return VaCell(int(v), int(a))


def macro_indices(points: np.ndarray) -> np.ndarray:
    """Vectorised macro region ``(mc, mr)`` for an (N, 2) array of V-A points."""
    levels = round_half_away(np.clip(points, VA_MIN, VA_MAX)).astype(int)
    return (levels + 4) // 3


def va_distance(p: VaPoint, q: VaPoint) -> float:
    return math.hypot(p.valence - q.valence, p.arousal - q.arousal)


def pairwise_distances(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def as_points(values) -> np.ndarray:
    """Coerce a list of VaPoint or an (N, 2) array into a float64 array."""
    if len(values) and isinstance(values[0], VaPoint):
        return np.array([[p.valence, p.arousal] for p in values], dtype=np.float64)
    return np.asarray(values, dtype=np.float64).reshape(-1, 2)
