import math
from dataclasses import replace

import numpy as np
import pytest

from scourbayes import beam_fem as bf
from scourbayes.beam_fem import BeamSegment, FoundationModel, ModelError, StructureTemplate


def uniform_cantilever(length=10.0, d=0.2, t=0.01, rho=7850.0, E=210e9, top_mass=0.0):
    seg = BeamSegment(length, d, d, t, t, rho, E, 0.3)
    return StructureTemplate((seg,), top_mass=top_mass, embedded_length=0.0, submerged_length=0.0)


def euler_bernoulli_first(length, d, t, rho, E):
    area = math.pi / 4 * (d**2 - (d - 2 * t) ** 2)
    inertia = bf.tube_inertia(d, d - 2 * t)
    return 1.875104068711961**2 / (2 * math.pi) * math.sqrt(E * inertia / (rho * area * length**4))


CLAMPED = FoundationModel(base_condition="clamped")


class TestGeometry:
    def test_segment_rejects_thick_wall(self):
        with pytest.raises(ModelError):
            BeamSegment(1.0, 0.1, 0.1, 0.06, 0.06, 7850.0, 210e9)

    def test_segment_rejects_bad_shear_factor(self):
        with pytest.raises(ModelError):
            BeamSegment(1.0, 0.1, 0.1, 0.01, 0.01, 7850.0, 210e9, 0.3, 1.5)

    def test_template_lengths(self):
        seg = BeamSegment(1.0, 0.1, 0.1, 0.01, 0.01, 7850.0, 210e9)
        with pytest.raises(ModelError):
            StructureTemplate((seg,), 0.0, embedded_length=0.6, submerged_length=0.5)

    def test_scour_must_stay_inside_embedment(self, nrel):
        with pytest.raises(ModelError):
            bf.build_system(nrel, FoundationModel(4e6, scour_depth=45.0))

    def test_minimum_elements(self, nrel):
        with pytest.raises(ModelError):
            bf.build_system(nrel, FoundationModel(4e6), n_elements=5)

    def test_negative_stiffness_rejected(self):
        with pytest.raises(ModelError):
            FoundationModel(-1.0)

    def test_template_json_round_trip(self, tmp_path, nrel):
        path = tmp_path / "t.json"
        bf.save_template(nrel, path)
        assert bf.load_template(path) == nrel
        fpath = tmp_path / "f.json"
        f = FoundationModel(3e6, 2.0, "pinned", "rescale")
        bf.save_foundation(f, fpath)
        assert bf.load_foundation(fpath) == f

    def test_get_template(self, tmp_path, nrel):
        assert bf.get_template("nrel5mw") == nrel
        path = tmp_path / "t.json"
        bf.save_template(nrel, path)
        assert bf.get_template(path) == nrel


class TestAssembly:
    def test_symmetry(self, nrel):
        sys_ = bf.build_system(nrel, FoundationModel(4e6, 3.0))
        assert np.array_equal(sys_.stiffness, sys_.stiffness.T)
        assert np.array_equal(sys_.mass, sys_.mass.T)

    def test_mass_positive_definite_on_free_dofs(self, nrel):
        _, m = bf.build_system(nrel, FoundationModel(4e6)).reduced()
        assert np.all(np.linalg.eigvalsh(m) > 0)

    def test_zero_springs_add_nothing(self, nrel):
        a = bf.build_system(nrel, FoundationModel(0.0, base_condition="pinned"))
        b = bf.build_system(nrel, FoundationModel(4e6, base_condition="pinned"))
        diff = b.stiffness - a.stiffness
        # only DOFs of in-soil nodes change
        touched = np.unique(np.nonzero(diff)[0])
        z_touched = a.z[touched // 2]
        assert np.all(z_touched <= nrel.mudline + 1e-9)
        assert np.array_equal(a.mass, b.mass)

    def test_singular_without_support(self, nrel):
        with pytest.raises(ModelError):
            bf.solve_modes(bf.build_system(nrel, FoundationModel(0.0)), 1)

    def test_mode_shapes_mass_normalised(self, nrel):
        system = bf.build_system(nrel, FoundationModel(4e6))
        res = bf.solve_modes(system, 3)
        _, m = system.reduced()
        gram = res.mode_shapes.T @ m @ res.mode_shapes
        assert np.allclose(gram, np.eye(3), atol=1e-8)
        assert np.all(np.diff(res.frequencies) > 0)

    def test_n_modes_bounds(self, nrel):
        system = bf.build_system(nrel, FoundationModel(4e6), n_elements=10)
        with pytest.raises(ModelError):
            bf.solve_modes(system, 0)


class TestAnalyticOracles:
    def test_euler_bernoulli_cantilever(self):
        # L/D = 50, thin wall
        t = uniform_cantilever()
        fe = bf.first_frequency(t, CLAMPED)
        eb = euler_bernoulli_first(10.0, 0.2, 0.01, 7850.0, 210e9)
        assert abs(fe / eb - 1) < 0.005

    def test_timoshenko_below_euler_bernoulli(self):
        # a stocky beam, where shear deformation matters
        t = uniform_cantilever(length=2.0, d=0.4, t=0.02)
        fe = bf.first_frequency(t, CLAMPED)
        eb = euler_bernoulli_first(2.0, 0.4, 0.02, 7850.0, 210e9)
        assert fe <= eb

    def test_density_doubling_scales_by_inverse_sqrt2(self, nrel):
        f1 = bf.solve_modes(bf.build_system(bf.nrel5mw_tower(), CLAMPED), 3).frequencies
        heavy = bf.nrel5mw_tower()
        heavy = replace(heavy, segments=tuple(replace(s, density=2 * s.density) for s in heavy.segments))
        f2 = bf.solve_modes(bf.build_system(heavy, CLAMPED), 3).frequencies
        assert np.allclose(f2, f1 / math.sqrt(2), rtol=1e-10)

    def test_added_mass_lowers_frequencies(self, nrel):
        dry = bf.solve_modes(bf.build_system(nrel, FoundationModel(4e6), seawater_density=0.0), 3)
        wet = bf.solve_modes(bf.build_system(nrel, FoundationModel(4e6)), 3)
        assert np.all(wet.frequencies < dry.frequencies)

    def test_annulus_added_mass_reproduces_submerged_density(self, nrel):
        # steel 7850 plus seawater over the wall annulus gives 8880 kg/m^3
        dry = bf.build_system(nrel, FoundationModel(4e6), seawater_density=0.0)
        wet = bf.build_system(nrel, FoundationModel(4e6))
        wall = nrel.segments[0]
        area = math.pi / 4 * (wall.outer_diameter_base**2 - (wall.outer_diameter_base - 2 * wall.wall_thickness_base) ** 2)
        # kinetic mass of a rigid unit translation
        ones = np.zeros(wet.mass.shape[0])
        ones[::2] = 1.0
        delta = ones @ (wet.mass - dry.mass) @ ones
        assert delta == pytest.approx(1030.0 * area * nrel.submerged_length, rel=1e-9)
        assert (7850.0 * area + 1030.0 * area) / area == pytest.approx(8880.0)


class TestFrequencies:
    def test_h_refinement(self, nrel):
        f50 = bf.first_frequency(nrel, FoundationModel(4e6), n_elements=50)
        f100 = bf.first_frequency(nrel, FoundationModel(4e6), n_elements=100)
        assert abs(f50 / f100 - 1) < 1e-3

    def test_stiffness_monotone(self, nrel):
        fs = [bf.first_frequency(nrel, FoundationModel(k)) for k in np.geomspace(1e5, 1e8, 5)]
        assert np.all(np.diff(fs) >= 0)
        assert bf.first_frequency(nrel, FoundationModel(1e7)) > bf.first_frequency(nrel, FoundationModel(1e6))

    def test_scour_monotone(self, nrel):
        fs = [bf.first_frequency(nrel, FoundationModel(4e6, d)) for d in (0, 2, 5, 10, 20)]
        assert np.all(np.diff(fs) < 0)

    def test_rescale_mode_softer_than_delete(self, nrel):
        d = bf.first_frequency(nrel, FoundationModel(4e6, 5.0, scour_mode="delete"))
        r = bf.first_frequency(nrel, FoundationModel(4e6, 5.0, scour_mode="rescale"))
        assert r < d

    def test_tower_only_modes(self):
        f = bf.solve_modes(bf.build_system(bf.nrel5mw_tower(), CLAMPED), 2).frequencies
        assert f[0] == pytest.approx(0.3208, rel=0.02)
        assert f[1] == pytest.approx(2.8280, rel=0.02)

    def test_with_ssi_second_mode(self, nrel):
        # stiffness from tuning the first mode to 0.1555 Hz
        f = bf.solve_modes(bf.build_system(nrel, FoundationModel(3.8716e6)), 2).frequencies
        assert f[0] == pytest.approx(0.1555, abs=2e-4)
        assert f[1] == pytest.approx(1.0481, rel=0.07)


class TestCantileverEstimate:
    def test_unit_values(self):
        assert bf.cantilever_estimate(1, 1, 1, 1, 0) == pytest.approx(math.sqrt(3) / (2 * math.pi))
        assert bf.cantilever_estimate(1, 1, 1, 1, 0) == pytest.approx(0.2757, abs=1e-4)

    def test_quadrupled_mass_halves(self):
        assert bf.cantilever_estimate(2, 3, 4, 20, 0) == pytest.approx(
            2 * bf.cantilever_estimate(2, 3, 4, 80, 0))

    @pytest.mark.parametrize("args", [(0, 1, 1, 1, 0), (1, -1, 1, 1, 0), (1, 1, 0, 1, 0),
                                      (1, 1, 1, 0, 0), (1, 1, 1, 1, -1)])
    def test_rejects_non_positive(self, args):
        with pytest.raises(ModelError):
            bf.cantilever_estimate(*args)

    def test_wavetank_estimate_close_to_fe(self):
        inertia = bf.tube_inertia(0.015, 0.0136)
        est = bf.cantilever_estimate(117e9, inertia, 1.5, 1.28, 0.401)
        fe = bf.first_frequency(bf.wavetank(), CLAMPED)
        assert abs(est / fe - 1) < 0.15


class TestWavetank:
    def test_tube_mass(self):
        assert bf.wavetank().segments[0].mass == pytest.approx(0.401, rel=1e-9)

    def test_tuned_to_no_scour_band(self):
        from scourbayes.surrogate import DEFAULT_DOMAINS, tune_stiffness
        t = bf.wavetank()
        k = tune_stiffness(t, 1.45, (1e4, 1e7))
        assert DEFAULT_DOMAINS["wavetank"][0] <= k <= DEFAULT_DOMAINS["wavetank"][1]
        f = bf.first_frequency(t, FoundationModel(k))
        assert 1.40 <= f <= 1.48
