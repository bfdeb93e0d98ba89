import numpy as np
import pytest

from etchmap.core import FieldMap, make_interval_grids, make_stadium_mask
from etchmap.errors import InvalidInput
from etchmap.matrixio import (
    read_field,
    read_manifest,
    read_matrix,
    read_spectrum_table,
    write_field,
    write_manifest,
    write_matrix,
    write_spectrum_table,
)


class TestMatrixRoundTrip:
    def test_values_reproduced_exactly(self, tmp_path, rng):
        m = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-12, 12, (7, 5))
        path = tmp_path / "m.txt"
        write_matrix(path, m, "origin=0 spacing=1 mask=0")
        back, header = read_matrix(path)
        assert np.array_equal(back, m)
        assert header == {"origin": (0.0,), "spacing": 1.0, "mask": False}

    def test_field_roundtrip_1d(self, tmp_path, rng):
        _, domain = make_interval_grids(10.0, 1.0, 0.5)
        f = FieldMap(domain, rng.standard_normal(domain.size))
        write_field(tmp_path / "f.txt", f)
        back = read_field(tmp_path / "f.txt", domain)
        assert np.array_equal(back.values, f.values)

    def test_field_roundtrip_masked(self, tmp_path, rng):
        domain = make_stadium_mask(6.0, 0.5)
        vals = np.where(domain.mask, rng.standard_normal(domain.shape), 0.0)
        f = FieldMap(domain, vals)
        write_field(tmp_path / "f.txt", f)
        back = read_field(tmp_path / "f.txt", domain)
        assert np.array_equal(back.values[domain.mask], f.values[domain.mask])

    def test_grid_mismatch_rejected(self, tmp_path):
        _, domain = make_interval_grids(10.0, 1.0, 0.5)
        f = FieldMap(domain, np.zeros(domain.size))
        write_field(tmp_path / "f.txt", f)
        _, other = make_interval_grids(10.0, 1.0, 0.25)
        with pytest.raises(InvalidInput):
            read_field(tmp_path / "f.txt", other)
        _, shifted = make_interval_grids(12.0, 1.0, 0.5)
        with pytest.raises(InvalidInput):
            read_field(tmp_path / "f.txt", shifted)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 3\norigin=0 spacing=1 mask=0\n1 2 3\n")
        with pytest.raises(InvalidInput):
            read_matrix(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 1\norigin=0 spacing=1 tilt=4\n1\n")
        with pytest.raises(InvalidInput):
            read_matrix(path)


class TestTables:
    def test_spectrum_table_roundtrip(self, tmp_path):
        rows = [(0, 0.998, 0.0192, "even"), (1, 0.994, float("nan"), "odd")]
        write_spectrum_table(tmp_path / "s.txt", rows)
        back = read_spectrum_table(tmp_path / "s.txt")
        assert back[0][0] == 0
        assert back[0][1] == pytest.approx(0.998)
        assert back[1][3] == "odd"
        assert np.isnan(back[1][2])

    def test_manifest_roundtrip(self, tmp_path):
        write_manifest(tmp_path / "m.txt",
                       {"command": "solve", "gamma": 0.25, "n_tr": 12},
                       coefficients=np.array([1.5, -2.0]))
        back = read_manifest(tmp_path / "m.txt")
        assert back["command"] == "solve"
        assert back["gamma"] == 0.25
        assert back["n_tr"] == 12
        assert np.array_equal(back["coefficients"], [1.5, -2.0])
