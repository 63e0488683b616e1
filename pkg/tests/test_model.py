import math

import numpy as np
import pytest
from scipy.integrate import quad

from aggdiff import (
    Grid2D,
    ModelSpec,
    SpecValidationError,
    antiderivative_A,
    antiderivative_AA,
    diffusion_a,
    initial_condition,
    kernel_value,
    noise_sigma,
    noise_sigma_prime,
    perturb_initial,
    reaction_f,
    reaction_truncated,
    validate,
)
from aggdiff.model import max_abs_reaction
from aggdiff.noise import derive_stream


class TestDiffusion:
    def test_degeneracy_endpoints(self):
        for ubar in (0.5, 1.0, 4.0, 17.3):
            spec = ModelSpec(ubar=ubar)
            assert diffusion_a(0.0, spec) == 0.0
            assert diffusion_a(ubar, spec) == 0.0

    def test_logistic_value(self):
        assert diffusion_a(1.0, ModelSpec(ubar=4.0)) == 3.0

    def test_no_clamping_outside_range(self):
        spec = ModelSpec(ubar=4.0)
        assert diffusion_a(-1.0, spec) == -5.0
        assert diffusion_a(5.0, spec) == -5.0

    def test_constant_kind(self):
        spec = ModelSpec(diffusion_kind="constant", a0=2.5)
        assert diffusion_a(0.0, spec) == 2.5
        assert np.all(diffusion_a(np.linspace(0, 4, 7), spec) == 2.5)


class TestAntiderivatives:
    def test_A_at_zero(self):
        assert antiderivative_A(0.0, ModelSpec()) == 0.0

    def test_A_closed_form_at_ubar(self):
        spec = ModelSpec(ubar=4.0)
        assert antiderivative_A(4.0, spec) == pytest.approx(32.0 - 64.0 / 3.0, rel=1e-14)

    def test_A_monotone(self):
        spec = ModelSpec(ubar=4.0)
        assert antiderivative_A(2.0, spec) < antiderivative_A(3.0, spec)

    def test_A_matches_quadrature(self, rng):
        # A is the exact antiderivative of a: check against numerical quadrature
        spec = ModelSpec(ubar=4.0)
        for u in rng.uniform(0.0, spec.ubar, size=1000):
            ref, _ = quad(lambda r: diffusion_a(r, spec), 0.0, u)
            got = antiderivative_A(u, spec)
            assert abs(got - ref) <= 1e-9 * (1.0 + abs(got))

    def test_AA_values(self):
        spec = ModelSpec(ubar=4.0)
        assert antiderivative_AA(0.0, spec) == 0.0
        assert antiderivative_AA(1.0, spec) == pytest.approx(4.0 / 6.0 - 1.0 / 12.0, rel=1e-14)

    def test_AA_matches_nested_quadrature(self):
        # Cauchy repeated-integration formula: AA(u) = int_0^u (u - r) a(r) dr
        spec = ModelSpec(ubar=4.0)
        u = spec.ubar
        ref, _ = quad(lambda r: (u - r) * diffusion_a(r, spec), 0.0, u, epsabs=1e-13)
        assert abs(antiderivative_AA(u, spec) - ref) <= 1e-10

    def test_AA_nonnegative_on_range(self):
        spec = ModelSpec(ubar=4.0)
        u = np.linspace(0, 4, 401)
        assert np.all(antiderivative_AA(u, spec) >= 0.0)


class TestReaction:
    def test_fixed_points(self):
        spec = ModelSpec(alpha=0.4, mu=0.5)
        assert reaction_f(0.0, spec) == 0.0
        assert reaction_f(0.4 / 0.5, spec) == pytest.approx(0.0, abs=1e-15)

    def test_value(self):
        assert reaction_f(1.0, ModelSpec(alpha=0.4, mu=0.5)) == pytest.approx(-0.1)

    def test_truncation_passthrough(self):
        spec = ModelSpec(trunc_m=10.0)
        u = np.linspace(-10, 10, 41)
        assert np.allclose(reaction_truncated(u, spec), reaction_f(u, spec))

    def test_truncation_branches(self):
        spec = ModelSpec(trunc_m=5.0)
        assert reaction_truncated(6.0, spec) == 5.0
        assert reaction_truncated(-6.0, spec) == -5.0

    def test_default_trunc_level(self):
        # 2*max(ubar, max|f|): with alpha=.4, mu=.5, ubar=4, max|f| = 6.4
        spec = ModelSpec(ubar=4.0, alpha=0.4, mu=0.5)
        assert max_abs_reaction(spec) == pytest.approx(6.4)
        assert spec.resolved_trunc_m() == pytest.approx(12.8)

    def test_trunc_inactive_on_range(self):
        spec = ModelSpec(ubar=4.0)
        u = np.linspace(0.0, spec.ubar, 1001)
        assert np.array_equal(reaction_truncated(u, spec), reaction_f(u, spec))


class TestNoiseIntensity:
    def test_endpoints_vanish(self):
        for kind in ("prop_shifted", "periodic"):
            spec = ModelSpec(noise_kind=kind, noise_amplitude=1.2)
            assert noise_sigma(0.0, spec) == pytest.approx(0.0, abs=1e-15)
            assert noise_sigma(spec.ubar, spec) == pytest.approx(0.0, abs=2e-16)

    def test_prop_shifted_value(self):
        spec = ModelSpec(noise_kind="prop_shifted", noise_amplitude=1.2, ubar=4.0)
        assert noise_sigma(1.0, spec) == pytest.approx(1.2)

    def test_zero_kind(self):
        spec = ModelSpec(noise_kind="zero")
        assert noise_sigma(1.7, spec) == 0.0
        assert noise_sigma_prime(1.7, spec) == 0.0

    def test_prime_periodic_value(self):
        spec = ModelSpec(noise_kind="periodic", noise_amplitude=1.2, ubar=4.0)
        assert noise_sigma_prime(0.0, spec) == pytest.approx(1.2 * np.pi / 4.0)

    def test_prime_at_kink_is_zero(self):
        spec = ModelSpec(noise_kind="prop_shifted", noise_amplitude=1.2, ubar=4.0)
        assert noise_sigma_prime(2.0, spec) == 0.0

    def test_prime_matches_central_difference(self, rng):
        h = 1e-7
        for kind in ("prop_shifted", "periodic"):
            spec = ModelSpec(noise_kind=kind, noise_amplitude=1.2, ubar=4.0)
            u = rng.uniform(0.0, 4.0, size=500)
            if kind == "prop_shifted":
                u = u[np.abs(u - 2.0) > 1e-3]
            fd = (noise_sigma(u + h, spec) - noise_sigma(u - h, spec)) / (2 * h)
            sp = noise_sigma_prime(u, spec)
            assert np.max(np.abs(fd - sp) / (1.0 + np.abs(sp))) < 1e-6


class TestKernel:
    def test_peak_value(self):
        assert kernel_value(0.0, 0.0) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-15)

    def test_symmetry(self, rng):
        x, y = rng.uniform(-3, 3, size=(2, 50))
        assert np.allclose(kernel_value(x, y), kernel_value(y, x))
        assert np.allclose(kernel_value(x, y), kernel_value(-x, -y))

    def test_unit_mass_on_fine_wide_grid(self):
        h = 1.0 / 16.0
        r = h * np.arange(-128, 129)  # covers [-8, 8]
        X, Y = np.meshgrid(r, r)
        total = np.sum(kernel_value(X, Y)) * h * h
        assert abs(total - 1.0) < 1e-6


class TestInitialConditions:
    def test_three_bumps_formula_point(self):
        # node (x, y) = (0, 1): ridge bump + centered second bump + far third
        g = Grid2D(nx=17, ny=17)
        f = initial_condition(g, ModelSpec(init_kind="three_bumps"))
        expected = 2 * math.exp(-1.0) + 1.5 + 2 * math.exp(-(2.25 + 4.0))
        assert f.values[10, 8] == pytest.approx(expected, rel=1e-14)

    def test_three_bumps_ridge_is_x_only(self):
        # the first bump's exponent depends on x alone, so at fixed x far from
        # the other bumps the profile is constant in y
        g = Grid2D(nx=33, ny=33)
        f = initial_condition(g, ModelSpec(init_kind="three_bumps"))
        i = 14  # x = -0.5, the ridge crest
        col = f.values[:, i]
        assert col.std() < 0.35 * col.mean()  # ridge, not a round bump

    def test_symmetrized_first_bump(self):
        g = Grid2D(nx=17, ny=17)
        f = initial_condition(g, ModelSpec(init_kind="three_bumps_symmetrized"))
        # at (-1, 0) the symmetric first bump peaks at 2 (plus small tails)
        x_idx, y_idx = 6, 8
        assert f.values[y_idx, x_idx] == pytest.approx(
            2.0 + 1.5 * math.exp(-2.0) + 2.0 * math.exp(-(6.25 + 1.0)), rel=1e-12)

    def test_constant(self, grid9):
        f = initial_condition(grid9, ModelSpec(init_kind="constant", constant_value=0.7))
        assert np.all(f.values == 0.7)

    def test_single_cosine(self, grid17):
        spec = ModelSpec(init_kind="single_cosine", cosine_mode=(1, 0),
                         cosine_amplitude=0.25, cosine_offset=1.0)
        f = initial_condition(grid17, spec)
        X, _ = grid17.meshgrid()
        expected = 1.0 + 0.25 * np.cos(np.pi * (X + 4.0) / 8.0)
        assert np.allclose(f.values, expected, atol=1e-14)

    def test_exceeds_ubar_rejected(self, grid17):
        with pytest.raises(SpecValidationError, match="exceeds ubar"):
            initial_condition(grid17, ModelSpec(ubar=2.0))


class TestPerturbInitial:
    def test_zero_delta_identity(self, grid9):
        spec = ModelSpec()
        u0 = initial_condition(grid9, spec)
        out = perturb_initial(u0, spec, derive_stream(0, 0), delta=0.0)
        assert out is u0

    def test_outputs_clamped(self, grid9):
        spec = ModelSpec(perturb_margin=1e-6)
        u0 = initial_condition(grid9, spec)
        for path in range(20):
            out = perturb_initial(u0, spec, derive_stream(5, path), delta=2.0)
            assert out.values.min() >= 0.0
            assert out.values.max() <= spec.ubar - 1e-6

    def test_ensemble_mean_unbiased(self, grid9):
        # Monte-Carlo oracle: with a small delta the clamp never fires at an
        # interior node, so the per-node mean is u0 to within sampling error.
        spec = ModelSpec()
        delta = 0.1
        u0 = initial_condition(grid9, spec)
        j, i = 5, 4
        n = 10_000
        vals = np.empty(n)
        for path in range(n):
            out = perturb_initial(u0, spec, derive_stream(123, path), delta=delta)
            vals[path] = out.values[j, i]
        se = delta * u0.values[j, i] / math.sqrt(n)
        assert abs(vals.mean() - u0.values[j, i]) < 3.0 * se


class TestValidate:
    def test_reference_config_passes(self, grid17):
        report = validate(ModelSpec(), grid17)
        assert report.ok and not report.violations

    def test_small_ubar_fails_on_initial_condition(self, grid17):
        report = validate(ModelSpec(ubar=2.0), grid17)
        assert not report.ok
        assert any("exceeds ubar" in v for v in report.violations)

    def test_negative_alpha(self, grid17):
        report = validate(ModelSpec(alpha=-1.0), grid17)
        assert not report.ok
        assert any("alpha must be nonnegative" in v for v in report.violations)

    def test_undersized_truncation(self, grid17):
        report = validate(ModelSpec(trunc_m=1.0), grid17)
        assert not report.ok
        assert any("trunc_m" in v for v in report.violations)

    def test_sigma_endpoint_check_is_numeric(self, grid17):
        report = validate(ModelSpec(noise_kind="prop_shifted"), grid17)
        assert report.ok

    def test_bad_enum(self, grid17):
        report = validate(ModelSpec(noise_kind="pink"), grid17)
        assert not report.ok
