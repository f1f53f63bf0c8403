import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emod.exceptions import DegenerateScale, InvalidConfig, UnknownCategory
from emod.va_space import (
    Continuous,
    Discrete,
    DiscreteMappingTable,
    VaPoint,
    clamp_counter,
    macro_indices,
    quantize,
    to_va,
    va_distance,
)


class TestToVa:
    def test_endpoints(self):
        assert to_va(Continuous(1, 9, (1, 9), (1, 9))) == VaPoint(-4.0, 4.0)

    def test_midpoint(self):
        assert to_va(Continuous(5, 5, (1, 9), (1, 9))) == VaPoint(0.0, 0.0)

    def test_neutral_in_default_table(self):
        assert to_va(Discrete("neutral")) == VaPoint(0.0, 0.0)

    def test_unknown_category(self):
        with pytest.raises(UnknownCategory):
            to_va(Discrete("schadenfreude"))

    def test_degenerate_scale(self):
        with pytest.raises(DegenerateScale):
            to_va(Continuous(3, 3, (3, 3), (1, 9)))

    def test_overshoot_is_clamped_and_counted(self):
        before = clamp_counter.count
        p = to_va(Continuous(9.2, 0.9, (1, 9), (1, 9)))
        assert p == VaPoint(4.0, -4.0)
        assert clamp_counter.count == before + 2

    def test_monotone(self):
        vals = [to_va(Continuous(x, 5, (0, 10), (0, 10))).valence for x in np.linspace(0, 10, 41)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


class TestQuantize:
    def test_corner(self):
        cell = quantize(VaPoint(-4.0, -4.0))
        assert (cell.v_level, cell.a_level) == (-4, -4)
        assert cell.cell_index == (0, 0) and cell.macro_index == (0, 0)

    def test_center(self):
        cell = quantize(VaPoint(0.0, 0.0))
        assert cell.cell_index == (4, 4) and cell.macro_index == (1, 1)

    def test_rounding_case(self):
        cell = quantize(VaPoint(3.6, -2.4))
        assert (cell.v_level, cell.a_level) == (4, -2)
        assert cell.cell_index == (8, 2) and cell.macro_index == (2, 0)

    @pytest.mark.parametrize("x,level", [(0.5, 1), (-0.5, -1), (1.5, 2), (-2.5, -3), (0.49, 0)])
    def test_half_away_from_zero(self, x, level):
        assert quantize(VaPoint(x, 0.0)).v_level == level

    def test_macro_partition(self):
        groups = {lvl: quantize(VaPoint(float(lvl), 0.0)).macro_index[0] for lvl in range(-4, 5)}
        assert groups == {-4: 0, -3: 0, -2: 0, -1: 1, 0: 1, 1: 1, 2: 2, 3: 2, 4: 2}

    def test_fuzz_in_range(self):
        rng = np.random.default_rng(0)
        lo = rng.uniform(-10, 10, (100_000, 2))
        width = rng.uniform(0.1, 20, (100_000, 2))
        raw = lo + rng.uniform(0, 1, (100_000, 2)) * width
        va = -4 + 8 * (raw - lo) / width
        macro = macro_indices(va)
        assert macro.min() >= 0 and macro.max() <= 2
        for i in rng.choice(100_000, 500, replace=False):
            p = to_va(Continuous(raw[i, 0], raw[i, 1], (lo[i, 0], lo[i, 0] + width[i, 0]),
                                 (lo[i, 1], lo[i, 1] + width[i, 1])))
            cell = quantize(p)
            assert 0 <= min(cell.cell_index) and max(cell.cell_index) <= 8
            assert tuple(macro[i]) == cell.macro_index


class TestDistance:
    def test_values(self):
        assert va_distance(VaPoint(1, 2), VaPoint(1, 2)) == 0
        assert va_distance(VaPoint(-4, -4), VaPoint(4, 4)) == pytest.approx(8 * math.sqrt(2))
        assert va_distance(VaPoint(0, 0), VaPoint(3, 4)) == pytest.approx(5.0)

    def test_max_distance_exceeds_d_max(self):
        assert 8 * math.sqrt(2) > 5.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-4, 4), min_size=6, max_size=6))
    def test_metric_axioms(self, c):
        p, q, r = VaPoint(c[0], c[1]), VaPoint(c[2], c[3]), VaPoint(c[4], c[5])
        assert va_distance(p, q) == va_distance(q, p)
        assert va_distance(p, p) == 0
        assert va_distance(p, r) <= va_distance(p, q) + va_distance(q, r) + 1e-12


class TestMappingTable:
    def test_default_table_loads_with_provenance(self):
        table = DiscreteMappingTable.default()
        assert "neutral" in table and len(table) > 5
        assert all(table.provenance[name] for name in table.entries)

    def test_json_round_trip(self, tmp_path):
        table = DiscreteMappingTable({"a": (1, 2), "b": (-3, 0.5)}, {"a": "x", "b": "y"})
        path = tmp_path / "t.json"
        path.write_text(table.to_json())
        back = DiscreteMappingTable.from_json(path)
        assert back.entries == table.entries and back.provenance == table.provenance

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidConfig):
            DiscreteMappingTable.from_json(json.dumps({"a": {"va": [0, 0], "colour": "red"}}))

    def test_out_of_range_entry_rejected(self):
        with pytest.raises(InvalidConfig):
            DiscreteMappingTable({"a": (5.0, 0.0)})
