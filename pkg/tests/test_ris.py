import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fimstar.ris import (
    SectorMatrices,
    StarBdRisParams,
    build_sector_matrices,
    check_joint_unitary,
    d_ris_baseline,
    element_power_deviation,
    project_raw,
    sector_matrices_for,
)

floats01 = st.floats(0.0, 1.0)
angles = st.floats(-10.0, 10.0)


def params(beta, pt, pr):
    return StarBdRisParams(np.asarray(beta, float), np.asarray(pt, float), np.asarray(pr, float))


class TestBuild:
    def test_full_transmission(self):
        m = build_sector_matrices(params([1.0], [0.0], [0.0]))
        assert m.phi_t[0, 0] == 1.0 and m.phi_r[0, 0] == 0.0

    def test_even_split(self):
        m = build_sector_matrices(params([0.5], [0.0], [math.pi / 2]))
        assert abs(m.phi_t[0, 0] - math.sqrt(0.5)) <= 1e-15
        assert abs(m.phi_r[0, 0] - 1j * math.sqrt(0.5)) <= 1e-15

    def test_full_reflection(self):
        m = build_sector_matrices(params([0.0], [1.0], [math.pi]))
        assert m.phi_t[0, 0] == 0.0
        assert abs(m.phi_r[0, 0] + 1.0) <= 1e-15

    def test_off_diagonals_zero(self, rng):
        m = build_sector_matrices(params(rng.uniform(size=5), rng.uniform(0, 6, 5), rng.uniform(0, 6, 5)))
        for phi in (m.phi_t, m.phi_r):
            assert np.all(phi[~np.eye(5, dtype=bool)] == 0)

    @given(st.lists(st.tuples(floats01, angles, angles), min_size=1, max_size=12))
    def test_per_element_power_and_joint_unitary(self, elems):
        b, pt, pr = map(np.array, zip(*elems))
        m = build_sector_matrices(params(b, pt, pr))
        assert np.max(np.abs(element_power_deviation(m))) <= 1e-12
        assert check_joint_unitary(m) <= 1e-12

    @pytest.mark.parametrize("beta", [-0.1, 1.1, np.nan])
    def test_rejects_bad_beta(self, beta):
        with pytest.raises(ValueError):
            build_sector_matrices(params([beta], [0.0], [0.0]))

    def test_uniform_helper(self):
        p = StarBdRisParams.uniform(3)
        assert p.k_ris == 3 and np.all(p.beta == 0.5)

    def test_per_user_sector(self):
        m = build_sector_matrices(params([1.0, 0.0], [0.0, 0.0], [0.0, 0.0]))
        pu = m.per_user(1, 3)
        assert np.array_equal(pu[0], m.diag_t)
        assert np.array_equal(pu[1], m.diag_r) and np.array_equal(pu[2], m.diag_r)


class TestProjection:
    def test_endpoints(self):
        p = project_raw([-1.0, 1.0, 0.0], [-1.0, 0.0, 0.5], [1.0, -0.5, 0.0])
        assert p.beta.tolist() == [0.0, 1.0, 0.5]
        assert np.allclose(p.phase_t, [0.0, math.pi, 1.5 * math.pi])
        assert np.allclose(p.phase_r, [0.0, 0.5 * math.pi, math.pi])

    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
    def test_projection_always_valid(self, raw):
        p = project_raw(raw, raw, raw)
        assert np.all((p.beta >= 0) & (p.beta <= 1))
        assert np.all((p.phase_t >= 0) & (p.phase_t < 2 * math.pi))
        assert check_joint_unitary(build_sector_matrices(p)) <= 1e-12


class TestVariants:
    def test_d_ris_is_unit_modulus_reflect_only(self, rng):
        p = params(rng.uniform(size=6), rng.uniform(0, 6, 6), rng.uniform(0, 6, 6))
        m = d_ris_baseline(p)
        assert np.all(m.phi_t == 0)
        assert np.max(np.abs(np.abs(m.diag_r) - 1)) <= 1e-12
        assert check_joint_unitary(m) <= 1e-12

    def test_modes(self):
        p = StarBdRisParams.uniform(4)
        assert np.array_equal(sector_matrices_for("star", p).phi_t, build_sector_matrices(p).phi_t)
        assert np.array_equal(sector_matrices_for("d_ris", p).phi_r, d_ris_baseline(p).phi_r)
        none = sector_matrices_for("none", p)
        assert np.all(none.phi_t == 0) and np.all(none.phi_r == 0)
        with pytest.raises(ValueError):
            sector_matrices_for("bogus", p)

    def test_zeros_violate_power(self):
        assert np.all(element_power_deviation(SectorMatrices.zeros(3)) == -1.0)
