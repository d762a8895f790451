import numpy as np
import pytest

from nrds.conjugation import SmoothMap, build_rde, default_shape
from nrds.driver import PathPoint, sample_wiener_path
from nrds.errors import GridMismatchError
from nrds.hyperbolic import (
    continue_hyperbolic_solution,
    dichotomy_estimate,
    find_equilibria,
    linearize_along,
    make_equilibrium,
)
from nrds.manifold import (
    RHO_FLOOR,
    attraction_rate_check,
    calibrate_delta0,
    check_smallness,
    estimate_rho,
    graph_continuity_gap,
    graph_transform,
    sandwich_check,
    smooth_cutoff,
)
from scenarios.scenarios import SCENARIOS, linear_map


def flat_saddle_map():
    """x' = x, y' = -y + x^2 whose unstable manifold is y = x^2 / 3."""

    def value(y):
        y = np.asarray(y, dtype=float)
        x, w = y[..., 0], y[..., 1]
        return np.stack([x, -w + x**2], axis=-1)

    def jacobian(y):
        y = np.asarray(y, dtype=float)
        J = np.zeros(y.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0
        J[..., 1, 0] = 2.0 * y[..., 0]
        J[..., 1, 1] = -1.0
        return J

    return SmoothMap(value=value, jacobian=jacobian, label="x, -y + x^2")


def unperturbed_setup(family, y_star, T_h=10.0):
    eq = make_equilibrium(family, np.asarray(y_star, dtype=float))
    trace = continue_hyperbolic_solution(family, 0.0, None, eq, T_h, 1e-10)
    dich = dichotomy_estimate(linearize_along(family, 0.0, trace))
    return trace, dich


@pytest.fixture(scope="module")
def saddle():
    """x' = x, y' = -y + x^2 whose unstable manifold is y = x^2 / 3."""
    family = build_rde(np.zeros((2, 2)), flat_saddle_map(), default_shape())
    trace, dich = unperturbed_setup(family, [0.0, 0.0])
    gm = graph_transform(family, 0.0, trace, dich, 0.2, anchors=[0.0], horizon=8.0)
    return family, trace, dich, gm


class TestSmallness:

    @pytest.mark.parametrize(
        "inputs, conditions",
        [
            ((0.05, 1.0, 1.0, 0.1), [True, True, True, True]),
            ((0.5, 2.0, 1.0, 0.1), [False, False, False, False]),
        ],
    )
    def test_reference_cases(self, inputs, conditions):
        """Test the four conditions on a passing and a failing remainder"""
        report = check_smallness(*inputs)

        assert report.to_report()["conditions"] == conditions
        assert report.passed == all(conditions)

    def test_small_remainder_passes(self):
        """Test that a tiny remainder satisfies every condition"""
        report = check_smallness(0.01, 1.0, 1.0, 0.5)

        assert report.passed
        assert report.to_report()["conditions"] == [True, True, True, True]

    def test_large_remainder_fails(self):
        """Test that a remainder of the size of the rate fails"""
        assert not check_smallness(1.0, 1.0, 1.0, 0.5).passed

    def test_positive_inputs(self):
        """Test that non-positive constants are rejected"""
        with pytest.raises(ValueError):
            check_smallness(0.0, 1.0, 1.0, 0.5)


class TestSmoothCutoff:

    def test_plateau_and_support(self):
        """Test that the cut-off is 1 inside half the radius and 0 outside it"""
        r = np.array([0.0, 0.05, 0.1, 0.2, 0.3])

        values = smooth_cutoff(r, 0.2)

        assert values.tolist()[:3] == [1.0, 1.0, 1.0]
        assert values.tolist()[3:] == [0.0, 0.0]

    def test_monotone_transition(self):
        """Test that the cut-off decreases across the transition band"""
        values = smooth_cutoff(np.linspace(0.1, 0.2, 51), 0.2)

        assert np.all(np.diff(values) <= 0.0)
        assert 0.0 < values[25] < 1.0


class TestGraphTransform:

    def test_quadratic_manifold(self, saddle):
        """Test the sampled graph against y = x^2 / 3 near the saddle"""
        _, _, _, gm = saddle
        c = gm.nodes[:, 0]
        inner = np.abs(c) <= 0.08 + 1e-12

        sigma = gm.values[0][inner]

        assert gm.unstable_dim == 1
        assert np.max(np.abs(sigma[:, 0])) <= 1e-12
        assert np.max(np.abs(sigma[:, 1] - c[inner] ** 2 / 3.0)) <= 1e-5
        assert np.max(sigma[:, 1]) > 1e-3

    def test_graph_through_centre(self, saddle):
        """Test that the graph passes through the hyperbolic solution"""
        _, _, _, gm = saddle

        assert np.max(np.abs(gm.value_at(0.0, np.zeros((1, 1))))) <= 1e-12

    def test_graph_is_flat(self, saddle):
        """Test that the sampled Lipschitz constant is below the target"""
        _, _, _, gm = saddle

        assert gm.L_est <= gm.L

    def test_frame_and_report(self, saddle):
        """Test the exported layout of the graph"""
        _, _, _, gm = saddle

        frame = gm.to_frame()

        assert list(frame.columns) == ["s", "c_1", "sigma_1", "sigma_2"]
        assert len(frame) == 17
        assert gm.to_report()["nodes"] == 17

    def test_calibrated_radius(self, saddle):
        """Test that calibration returns a radius passing the smallness check"""
        family, trace, dich, _ = saddle

        delta, report = calibrate_delta0(family, 0.0, trace, dich, 0.2)

        assert 0.0 < delta <= 0.2
        assert report.passed

    def test_sandwich(self, saddle):
        """Test that backward solutions near the graph stay in the tube"""
        _, _, _, gm = saddle

        report = sandwich_check(gm, gm.delta0)

        assert not report.escaped
        assert report.passed
        assert report.delta_second < report.delta_prime < report.delta
        assert 0.0 < report.start_radius <= report.delta_second * (1.0 + 1e-12)

    def test_continuity_gap(self, saddle):
        """Test the graph distance and its grid requirement"""
        family, trace, dich, gm = saddle
        coarse = graph_transform(
            family, 0.0, trace, dich, 0.2, grid_n=9, anchors=[0.0], horizon=8.0
        )

        assert graph_continuity_gap(gm, gm) == 0.0
        with pytest.raises(GridMismatchError):
            graph_continuity_gap(coarse, gm)


class TestAttraction:

    def test_stable_equilibrium(self):
        """Test that solutions near a sink approach it at the dichotomy rate"""
        scenario = SCENARIOS["cubic1d"]
        family = scenario.family(30.0)
        sink = find_equilibria(family, scenario.box, 9)[2]
        trace, dich = unperturbed_setup(family, sink.y_star)
        gm = graph_transform(family, 0.0, trace, dich, 0.2)

        report = attraction_rate_check(family, 0.0, trace, gm, [0.05], (-9.0, -6.0))

        assert gm.unstable_dim == 0
        assert not report.escaped
        assert report.passed
        assert report.gamma_fit >= 1.9

    def test_solution_on_the_graph(self, saddle):
        """Test that a solution started on the graph keeps a vanishing gap"""
        family, trace, _, gm = saddle
        c = np.array([[0.02]])
        zeta0 = (c @ gm.basis.T + gm.value_at(0.0, c))[0]

        report = attraction_rate_check(
            family, 0.0, trace, gm, zeta0, (0.0, 1.0), n_samples=11
        )

        assert not report.escaped
        assert np.max(report.gaps) <= 1e-6


class TestEstimateRho:

    def test_linear_field(self):
        """Test that a linear field has no remainder"""
        family = build_rde(np.zeros((1, 1)), linear_map(-1.0), default_shape())
        trace, _ = unperturbed_setup(family, [0.0])

        assert estimate_rho(family, 0.0, trace, 0.2) == 0.0
        assert estimate_rho(family, 0.0, trace, 0.2, frozen=True) == 0.0

    def test_quadratic_remainder(self):
        """Test that halving the radius halves rho at a sink of y - y^3"""
        family = SCENARIOS["cubic1d"].family(30.0)
        trace, _ = unperturbed_setup(family, [1.0])

        coarse = estimate_rho(family, 0.0, trace, 0.1)
        fine = estimate_rho(family, 0.0, trace, 0.05)

        assert 1.8 <= coarse / fine <= 2.2

    def test_graph_uses_cutoff_remainder(self, saddle):
        """Test that the graph transform reports the cut-off rho"""
        family, trace, _, gm = saddle

        rho = estimate_rho(family, 0.0, trace, 0.2, n_times=11, frozen=True)

        assert gm.rho == max(rho, RHO_FLOOR)
        assert gm.smallness.rho == gm.rho


@pytest.fixture(scope="module")
def curved_saddle():
    family = SCENARIOS["saddle2d"].family(30.0)
    pp = PathPoint(0.0, sample_wiener_path(5, -70.0, 35.0, 0.005))
    eq = make_equilibrium(family, np.zeros(2))
    return family, pp, eq


class TestGraphContinuity:

    def test_gap_shrinks_with_eta(self, curved_saddle):
        """Test that perturbed graphs approach the unperturbed one"""
        family, pp, eq = curved_saddle
        zero = continue_hyperbolic_solution(family, 0.0, None, eq, 25.0, 1e-10)
        dich = dichotomy_estimate(linearize_along(family, 0.0, zero))
        delta, _ = calibrate_delta0(family, 0.0, zero, dich, 0.2)
        reference = graph_transform(
            family, 0.0, zero, dich, delta, grid_n=9, anchors=[0.0], horizon=8.0
        )

        gaps = []
        for eta in (0.1, 0.05, 0.025):
            trace = continue_hyperbolic_solution(family, eta, pp, eq, 25.0, 1e-10)
            gm = graph_transform(
                family,
                eta,
                trace,
                dichotomy_estimate(linearize_along(family, eta, trace)),
                delta,
                grid_n=9,
                anchors=[0.0],
                horizon=8.0,
            )
            gaps.append(graph_continuity_gap(gm, reference))

        assert gaps[0] > gaps[1] > gaps[2] > 0.0
