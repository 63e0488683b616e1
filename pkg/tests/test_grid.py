import numpy as np
import pytest
from scipy.integrate import dblquad

from aggdiff import Field, Grid2D, ModelSpec, initial_condition, integrate, norms
from aggdiff.grid import midpoint_avg, node_coords
from aggdiff.model import _three_bumps


class TestGrid2D:
    def test_spacing_definition(self):
        g = Grid2D(nx=129, ny=65)
        assert g.dx == (g.xmax - g.xmin) / 128
        assert g.dy == (g.ymax - g.ymin) / 64

    def test_too_few_nodes(self):
        with pytest.raises(ValueError, match="at least 3 nodes"):
            Grid2D(nx=2, ny=9)

    def test_bad_bounds(self):
        with pytest.raises(ValueError, match="ordered"):
            Grid2D(nx=9, ny=9, xmin=4.0, xmax=-4.0)
        with pytest.raises(ValueError, match="finite"):
            Grid2D(nx=9, ny=9, xmax=np.inf)

    def test_node_coords_endpoints(self):
        g = Grid2D(nx=129, ny=129)
        assert node_coords(g, 0, 0) == (-4.0, -4.0)
        assert node_coords(g, 128, 128) == (4.0, 4.0)
        assert node_coords(g, 64, 0)[0] == 0.0

    def test_node_coords_range_check(self):
        g = Grid2D(nx=9, ny=9)
        with pytest.raises(IndexError):
            node_coords(g, 9, 0)
        with pytest.raises(IndexError):
            node_coords(g, 0, -1)


class TestField:
    def test_layout_is_j_major(self):
        g = Grid2D(nx=5, ny=3)
        vals = np.arange(15.0).reshape(3, 5)
        f = Field(g, vals)
        # node (i=4, j=0) is the 5th stored value
        assert f.values[0, 4] == 4.0
        assert f.values.flags["C_CONTIGUOUS"]

    def test_rejects_nonfinite(self):
        g = Grid2D(nx=3, ny=3)
        vals = np.zeros((3, 3))
        vals[1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            Field(g, vals)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="shape"):
            Field(Grid2D(nx=4, ny=3), np.zeros((4, 3)))

    def test_values_are_frozen_copies(self):
        g = Grid2D(nx=3, ny=3)
        src = np.zeros((3, 3))
        f = Field(g, src)
        src[0, 0] = 7.0
        assert f.values[0, 0] == 0.0
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestMidpointAvg:
    def test_constant(self, grid9):
        f = Field.full(grid9, 3.25)
        assert midpoint_avg(f, "x", 2, 3) == 3.25
        assert midpoint_avg(f, "y", 2, 3) == 3.25

    def test_mean_of_neighbors(self, grid9):
        vals = np.zeros(grid9.shape)
        vals[3, 5] = 2.0
        f = Field(grid9, vals)
        assert midpoint_avg(f, "x", 4, 3) == 1.0

    def test_linear_field_exact(self, grid9):
        X, _ = grid9.meshgrid()
        f = Field(grid9, X)
        # half-node between i=2 and i=3 sits at x = xmin + 2.5*dx
        assert midpoint_avg(f, "x", 2, 0) == pytest.approx(grid9.xmin + 2.5 * grid9.dx)

    def test_range_check(self, grid9):
        f = Field.full(grid9, 0.0)
        with pytest.raises(IndexError):
            midpoint_avg(f, "x", 8, 0)  # last face is (7+1/2)


class TestIntegrate:
    def test_constant_is_exact(self):
        # boundary nodes own half cells, so the constant integrates to c*|O|
        for n in (9, 33, 50):
            g = Grid2D(nx=n, ny=n)
            assert integrate(Field.full(g, 2.5)) == pytest.approx(2.5 * 64.0, rel=1e-13)

    def test_zero(self, grid9):
        assert integrate(Field.full(grid9, 0.0)) == 0.0

    def test_three_bumps_against_adaptive_quadrature(self):
        g = Grid2D(nx=257, ny=257)
        f = initial_condition(g, ModelSpec(init_kind="three_bumps"))
        ref, err = dblquad(lambda y, x: _three_bumps(x, y, False), -4, 4, -4, 4,
                           epsabs=1e-10, epsrel=1e-10)
        assert abs(integrate(f) - ref) / abs(ref) < 1e-3

    def test_linearity(self, grid17, rng):
        a = Field(grid17, rng.standard_normal(grid17.shape))
        b = Field(grid17, rng.standard_normal(grid17.shape))
        al, be = 1.7, -0.3
        combo = Field(grid17, al * a.values + be * b.values)
        lhs = integrate(combo)
        rhs = al * integrate(a) + be * integrate(b)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestNorms:
    def test_constant_l1_is_domain_area(self, grid17):
        assert norms(Field.full(grid17, 1.0)).l1 == pytest.approx(64.0, rel=1e-13)

    def test_zero_field(self, grid9):
        n = norms(Field.full(grid9, 0.0))
        assert (n.l1, n.l2, n.linf, n.min) == (0.0, 0.0, 0.0, 0.0)

    def test_single_unit_node_linf(self, grid9):
        vals = np.zeros(grid9.shape)
        vals[4, 4] = 1.0
        assert norms(Field(grid9, vals)).linf == 1.0

    def test_min_is_signed(self, grid9):
        vals = np.zeros(grid9.shape)
        vals[2, 2] = -3.0
        n = norms(Field(grid9, vals))
        assert n.min == -3.0
        assert n.linf == 3.0

    def test_linf_sign_invariance_and_hoelder(self, grid17, rng):
        for _ in range(20):
            vals = rng.standard_normal(grid17.shape)
            f, fneg = Field(grid17, vals), Field(grid17, -vals)
            n, nn = norms(f), norms(fneg)
            assert n.linf == nn.linf
            assert n.l2**2 <= n.l1 * n.linf * (1 + 1e-12)
