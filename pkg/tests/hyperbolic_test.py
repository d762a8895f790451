import numpy as np
import pytest

from nrds.driver import PathPoint, sample_wiener_path
from nrds.errors import FitFailureError, NoGapError, WindowTooShortError
from nrds.hyperbolic import (
    LinearizedProcess,
    continue_hyperbolic_solution,
    dichotomy_estimate,
    find_equilibria,
    linearize_along,
    shift_defect,
    spectral_projections,
    stalled,
)
from scenarios.scenarios import SCENARIOS


@pytest.fixture(scope="module")
def cubic():
    scenario = SCENARIOS["cubic1d"]
    family = scenario.family(30.0)
    return family, find_equilibria(family, scenario.box, 9)


@pytest.fixture(scope="module")
def pp():
    return PathPoint(0.0, sample_wiener_path(1, -60.0, 30.0, 0.005))


class TestEquilibria:

    def test_cubic_equilibria(self, cubic):
        """Test that the three roots of y - y^3 are found, sorted and classified"""
        _, equilibria = cubic

        assert [float(eq.y_star[0]) for eq in equilibria] == pytest.approx(
            [-1.0, 0.0, 1.0], abs=1e-12
        )
        assert [eq.unstable_dim for eq in equilibria] == [0, 1, 0]
        assert [eq.gap for eq in equilibria] == pytest.approx([2.0, 1.0, 2.0])
        assert all(eq.hyperbolic for eq in equilibria)


class TestSpectralProjections:

    def test_diagonal_saddle(self):
        """Test the projections of diag(1, -1)"""
        proj_u, proj_s, basis_u = spectral_projections(np.diag([1.0, -1.0]))

        assert np.allclose(proj_u, np.diag([1.0, 0.0]), atol=1e-12)
        assert np.allclose(proj_s, np.diag([0.0, 1.0]), atol=1e-12)
        assert basis_u.shape == (2, 1)
        assert abs(abs(basis_u[0, 0]) - 1.0) <= 1e-12

    def test_projection_algebra(self):
        """Test idempotence and complementarity for a non-normal matrix"""
        A = np.array([[1.0, 3.0], [0.0, -2.0]])
        proj_u, proj_s, _ = spectral_projections(A)

        assert np.allclose(proj_u @ proj_u, proj_u, atol=1e-12)
        assert np.allclose(proj_u + proj_s, np.eye(2), atol=1e-12)
        assert np.allclose(A @ proj_u, proj_u @ A, atol=1e-12)

    def test_centre_spectrum(self):
        """Test that a rotation has no spectral gap"""
        with pytest.raises(NoGapError):
            spectral_projections(np.array([[0.0, 1.0], [-1.0, 0.0]]))


class TestDichotomy:

    def test_constant_saddle(self):
        """Test the fitted constants of the constant process diag(1, -1)"""
        L = LinearizedProcess.constant(np.diag([1.0, -1.0]), -10.0, 10.0, 0.01)

        estimate = dichotomy_estimate(L)

        assert 1.0 <= estimate.M <= 1.05
        assert 0.95 <= estimate.alpha <= 1.0 + 1e-6
        assert estimate.unstable_dim == 1
        assert estimate.to_report()["stable_rank"] == 1

    def test_projection_guess_without_decay(self):
        """Test that a wrong splitting is reported as a failed fit"""
        L = LinearizedProcess.constant(np.diag([1.0, -1.0]), -5.0, 5.0, 0.01)
        swapped = (np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))

        with pytest.raises(FitFailureError):
            dichotomy_estimate(L, proj_guess=swapped)


class TestContinuation:

    def test_equilibrium_without_noise(self, cubic):
        """Test that eta = 0 returns the equilibrium itself"""
        family, equilibria = cubic

        trace = continue_hyperbolic_solution(
            family, 0.0, None, equilibria[1], 5.0, 1e-10
        )

        assert trace.residual == 0.0
        assert trace.sup_dist == 0.0
        assert np.all(trace.states == 0.0)
        assert list(trace.to_frame().columns) == ["t", "xi_1"]

    def test_linear_response(self, cubic, pp):
        """Test that the distance to the equilibrium scales with eta"""
        family, equilibria = cubic

        small = continue_hyperbolic_solution(
            family, 0.02, pp, equilibria[2], 10.0, 1e-10
        )
        large = continue_hyperbolic_solution(
            family, 0.04, pp, equilibria[2], 10.0, 1e-10
        )

        assert small.residual < 1e-10
        assert 0.0 < small.sup_dist < large.sup_dist
        assert 1.5 <= large.sup_dist / small.sup_dist <= 2.5

    @pytest.mark.parametrize("index", [0, 2])
    def test_distance_over_eta(self, cubic, pp, index):
        """Test that sup_dist / eta stays within a factor 2 as eta doubles"""
        family, equilibria = cubic

        distances = {
            eta: continue_hyperbolic_solution(
                family, eta, pp, equilibria[index], 10.0, 1e-10
            ).sup_dist
            for eta in (0.02, 0.04, 0.08)
        }
        scaled = [distance / eta for eta, distance in distances.items()]

        assert min(scaled) > 0.0
        assert max(scaled) <= 2.0 * min(scaled)

    def test_shift_compatibility(self, cubic, pp):
        """Test that continuing along the shifted driver shifts the trace"""
        family, equilibria = cubic
        trace = continue_hyperbolic_solution(
            family, 0.05, pp, equilibria[2], 10.0, 1e-10
        )

        defect, window = shift_defect(
            family,
            0.05,
            pp,
            equilibria[2],
            0.5,
            5.0,
            1e-10,
            scale=trace.sup_dist,
        )

        assert window > 5.5
        assert defect <= 2e-10

    def test_shift_window_cap(self, cubic, pp):
        """Test that a cap below the compared slice is rejected"""
        family, equilibria = cubic

        with pytest.raises(WindowTooShortError):
            shift_defect(
                family, 0.1, pp, equilibria[2], 0.5, 5.0, 1e-10, max_window=4.0
            )

    def test_short_window(self, cubic, pp):
        """Test that a window too short to forget its boundary is rejected"""
        family, equilibria = cubic

        with pytest.raises(WindowTooShortError):
            continue_hyperbolic_solution(family, 0.1, pp, equilibria[2], 1.0, 1e-10)

    def test_state_outside_window(self, cubic):
        """Test that traces refuse to extrapolate"""
        family, equilibria = cubic
        trace = continue_hyperbolic_solution(
            family, 0.0, None, equilibria[0], 2.0, 1e-10
        )

        with pytest.raises(ValueError):
            trace.state_at(2.5)

    def test_linearization_without_noise(self, cubic):
        """Test that the linearisation along an equilibrium is constant"""
        family, equilibria = cubic
        trace = continue_hyperbolic_solution(
            family, 0.0, None, equilibria[0], 2.0, 1e-10
        )

        L = linearize_along(family, 0.0, trace)

        assert L.matrix(-1.5) == pytest.approx(np.array([[-2.0]]))
        assert (L.t0, L.t1) == (-2.0, 2.0)


class TestStalled:

    def test_stalled_updates(self):
        """Test detection of non-shrinking update sequences"""
        assert stalled([1.0, 2.0, 3.0, 4.0, 5.0])
        assert not stalled([5.0, 4.0, 3.0, 2.0, 1.0])
        assert not stalled([1.0, 2.0])
