import numpy as np
import pytest

from etchmap.core import (
    DomainGrid,
    DwellGrid,
    FieldMap,
    make_dwell_for_domain,
    make_interval_grids,
    make_rect_grids,
    make_stadium_mask,
    stadium_contains,
    weighted_inner,
)
from etchmap.errors import InvalidArgument


class TestIntervalGrids:
    def test_spans_and_counts(self):
        dwell, domain = make_interval_grids(80.0, 2.0, 0.5)
        assert dwell.lower[0] == pytest.approx(-90.0)
        assert dwell.upper[0] == pytest.approx(90.0)
        assert dwell.size == 361
        assert domain.lower[0] == pytest.approx(-80.0)
        assert domain.upper[0] == pytest.approx(80.0)

    def test_small_case(self):
        dwell, _ = make_interval_grids(1.0, 1.0, 0.5)
        assert dwell.lower[0] == pytest.approx(-6.0)
        assert dwell.upper[0] == pytest.approx(6.0)
        assert dwell.size == 25

    @pytest.mark.parametrize("args", [
        (80.0, 2.0, 0.0), (80.0, 2.0, -0.5), (0.0, 2.0, 0.5),
        (80.0, -1.0, 0.5), (80.0, 2.0, 3.0),
    ])
    def test_invalid_parameters(self, args):
        with pytest.raises(InvalidArgument):
            make_interval_grids(*args)

    def test_dwell_contains_domain(self):
        for L, s, d in [(80, 2, 0.5), (1, 1, 0.5), (40, 2, 0.25), (7, 3, 1.0)]:
            dwell, domain = make_interval_grids(L, s, d)
            assert dwell.spacing == domain.spacing
            assert np.all(dwell.lower <= domain.lower)
            assert np.all(dwell.upper >= domain.upper)

    def test_rect_grids(self):
        dwell, domain = make_rect_grids((48.0, 24.0), 4.0, 1.0)
        assert dwell.shape == (137, 89)
        assert domain.shape == (96, 48)
        assert domain.area == pytest.approx(96 * 48)


class TestStadiumMask:
    def test_area_fine(self):
        domain = make_stadium_mask(10.0, 0.5)
        exact = 10 * 20 + np.pi * 25
        assert abs(domain.area - exact) / exact < 0.02

    def test_area_coarse(self):
        domain = make_stadium_mask(2.0, 1.0)
        exact = 2 * 4 + np.pi
        assert abs(domain.area - exact) / exact < 0.25

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            make_stadium_mask(10.0, -1.0)
        with pytest.raises(InvalidArgument):
            make_stadium_mask(0.0, 0.5)

    def test_reflection_symmetry(self):
        mask = make_stadium_mask(10.0, 0.5).mask
        assert np.array_equal(mask, mask[::-1, :])
        assert np.array_equal(mask, mask[:, ::-1])

    def test_membership_rule(self):
        domain = make_stadium_mask(6.0, 0.5)
        gx, gy = np.meshgrid(domain.axes[0], domain.axes[1], indexing="ij")
        assert np.array_equal(domain.mask, stadium_contains(gx, gy, 6.0))

    def test_area_converges_with_refinement(self):
        exact = 10 * 20 + np.pi * 25
        errs = [abs(make_stadium_mask(10.0, d).area - exact) / exact
                for d in (1.0, 0.5, 0.25)]
        assert errs[-1] < 0.01


class TestWeightedInner:
    def test_constant_measure(self):
        _, domain = make_interval_grids(80.0, 2.0, 0.5)
        one = FieldMap(domain, np.ones(domain.size))
        assert abs(weighted_inner(one, one) - 160.0) <= 0.5

    def test_parity_orthogonality(self):
        _, domain = make_interval_grids(80.0, 2.0, 0.5)
        x = domain.axes[0]
        even = FieldMap(domain, np.cos(0.1 * x))
        odd = FieldMap(domain, np.sin(0.2 * x))
        bound = 1e-12 * np.sqrt(weighted_inner(even, even)
                                * weighted_inner(odd, odd))
        assert abs(weighted_inner(even, odd)) <= bound

    def test_cosine_integral(self):
        L, d = 80.0, 0.5
        _, domain = make_interval_grids(L, 2.0, d)
        u = FieldMap(domain, np.cos(np.pi * domain.axes[0] / (2 * L)))
        assert abs(weighted_inner(u, u) - L) <= 2 * d

    def test_grid_mismatch(self):
        _, dom_a = make_interval_grids(80.0, 2.0, 0.5)
        _, dom_b = make_interval_grids(40.0, 2.0, 0.5)
        with pytest.raises(InvalidArgument):
            weighted_inner(FieldMap(dom_a, np.ones(dom_a.size)),
                           FieldMap(dom_b, np.ones(dom_b.size)))

    def test_positive_definite(self, rng):
        _, domain = make_interval_grids(10.0, 1.0, 0.5)
        for _ in range(25):
            u = FieldMap(domain, rng.standard_normal(domain.size))
            assert weighted_inner(u, u) >= 0
        zero = FieldMap(domain, np.zeros(domain.size))
        assert weighted_inner(zero, zero) == 0.0

    def test_bilinear_symmetric(self, rng):
        _, domain = make_interval_grids(10.0, 1.0, 0.5)
        u = rng.standard_normal(domain.size)
        v = rng.standard_normal(domain.size)
        w = rng.standard_normal(domain.size)
        fu, fv, fw = (FieldMap(domain, a) for a in (u, v, w))
        fuv = FieldMap(domain, 2.0 * u + 3.0 * v)
        assert weighted_inner(fu, fv) == pytest.approx(weighted_inner(fv, fu))
        assert weighted_inner(fuv, fw) == pytest.approx(
            2 * weighted_inner(fu, fw) + 3 * weighted_inner(fv, fw))

    def test_masked_measure(self):
        domain = make_stadium_mask(10.0, 0.5)
        one = FieldMap(domain, np.ones(domain.shape))
        assert weighted_inner(one, one) == pytest.approx(domain.area)


class TestFieldTypes:
    def test_values_must_be_finite(self):
        _, domain = make_interval_grids(1.0, 1.0, 0.5)
        with pytest.raises(InvalidArgument):
            FieldMap(domain, np.full(domain.size, np.nan))

    def test_value_count_must_match(self):
        _, domain = make_interval_grids(1.0, 1.0, 0.5)
        with pytest.raises(InvalidArgument):
            FieldMap(domain, np.ones(domain.size + 1))

    def test_fields_immutable(self):
        _, domain = make_interval_grids(1.0, 1.0, 0.5)
        f = FieldMap(domain, np.ones(domain.size))
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_disk_sector_field_guards(self):
        from etchmap.core import DiskSectorField

        r = np.linspace(0, 5, 11)
        DiskSectorField(harmonic=0, parity="cos", radii=r, values=np.ones(11))
        with pytest.raises(InvalidArgument):
            DiskSectorField(harmonic=0, parity="sin", radii=r,
                            values=np.ones(11))
        with pytest.raises(InvalidArgument):
            DiskSectorField(harmonic=2, parity="sin", radii=r,
                            values=np.full(11, np.inf))

    def test_dwell_for_domain_margin(self):
        _, domain = make_interval_grids(80.0, 2.0, 0.5)
        dwell = make_dwell_for_domain(domain, 2.0, 0.5)
        assert dwell.lower[0] == pytest.approx(-90.0)
        dwell2 = make_dwell_for_domain(domain, 2.0, 0.5, margin=3.0)
        assert dwell2.lower[0] == pytest.approx(-83.0)
