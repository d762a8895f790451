import numpy as np
import pytest

from scenarios.scenarios import SCENARIOS, describe_scenarios, get_scenario


class TestScenarios:

    def test_catalog_listing(self):
        """Test that every scenario is listed with its topic and description"""
        lines = describe_scenarios().splitlines()

        assert [line.split(" (")[0] for line in lines] == list(SCENARIOS)
        for line, scenario in zip(lines, SCENARIOS.values()):
            assert line.startswith(f"{scenario.name} ({scenario.section}): ")
            assert line.endswith(scenario.description)

    def test_unknown_scenario(self):
        """Test that unknown names raise with the available ones"""
        with pytest.raises(ValueError, match="cubic1d"):
            get_scenario("lorenz")

    def test_wave_has_no_ode_family(self):
        """Test that the Galerkin scenario is not built as a conjugated ODE"""
        with pytest.raises(ValueError):
            get_scenario("wave").family(30.0)

    def test_cubic_family(self):
        """Test the autonomous member of the scalar cubic scenario"""
        family = get_scenario("cubic1d").family(30.0)
        y = np.array([[-1.5], [0.5], [2.0]])

        assert np.allclose(family.autonomous_rhs(y), y - y**3)
        assert np.allclose(family.autonomous_jac(y)[:, 0, 0], 1.0 - 3.0 * y[:, 0] ** 2)

    def test_saddle_family(self):
        """Test the curved saddle field at a sample state"""
        family = get_scenario("saddle2d").family(30.0)

        rhs = family.autonomous_rhs(np.array([0.5, 0.25]))

        assert np.allclose(rhs, [0.5 - 0.125, -0.25 + 0.25])
