import math

import numpy as np
import pytest

from nrds.driver import (
    PathPoint,
    WienerPath,
    ou_residual,
    ou_series,
    ou_stationary,
    read_path_csv,
    sample_wiener_path,
    shift,
    sublinear_report,
    write_path_csv,
)
from nrds.errors import (
    GridTooLargeError,
    InvalidIntervalError,
    OffGridError,
    WindowExhaustedError,
)


def linear_path(dt, n_left, n_right):
    """Deterministic path omega(s) = s on the grid k dt, k = -n_left..n_right."""
    times = np.arange(-n_left, n_right + 1) * dt
    return WienerPath.from_values(times, times.copy())


class TestSampleWienerPath:

    def test_same_seed_gives_identical_samples(self):
        """Test that a seed fully determines the sampled path"""
        first = sample_wiener_path(11, -3.0, 2.0, 0.01)
        second = sample_wiener_path(11, -3.0, 2.0, 0.01)
        other = sample_wiener_path(12, -3.0, 2.0, 0.01)

        assert np.array_equal(first.base, second.base)
        assert not np.array_equal(first.base, other.base)

    def test_path_is_anchored_and_covers_window(self):
        """Test that omega(0) = 0 and the requested window is sampled"""
        path = sample_wiener_path(0, -2.0, 3.0, 0.01)

        assert path.values[path.origin] == 0.0
        assert path.t_min <= -2.0 + 1e-12
        assert path.t_max >= 3.0 - 1e-12
        assert path.n_samples == 501

    def test_increment_variances(self):
        """Test variance and independence of increments over an ensemble of seeds"""
        paths = [sample_wiener_path(seed, -1.0, 2.0, 0.01) for seed in range(500)]
        past = np.array([p.value_at(0.0) - p.value_at(-1.0) for p in paths])
        future = np.array([p.value_at(2.0) - p.value_at(0.5) for p in paths])
        step = np.array([p.values[p.origin + 1] - p.values[p.origin] for p in paths])

        assert np.var(past) == pytest.approx(1.0, rel=0.2)
        assert np.var(future) == pytest.approx(1.5, rel=0.2)
        assert np.var(step) == pytest.approx(0.01, rel=0.2)
        assert abs(np.corrcoef(past, future)[0, 1]) <= 0.15

    def test_window_must_contain_zero(self):
        """Test that a window without 0 in its interior is rejected"""
        with pytest.raises(InvalidIntervalError):
            sample_wiener_path(0, 1.0, 2.0, 0.1)

    def test_sample_cap(self):
        """Test that the sample cap is enforced before drawing"""
        with pytest.raises(GridTooLargeError):
            sample_wiener_path(0, -1.0, 1.0, 0.01, max_samples=10)


class TestShift:

    def test_flow_property_is_exact(self):
        """Test that theta_s theta_t equals theta_{t+s} sample by sample"""
        path = sample_wiener_path(3, -5.0, 5.0, 0.05)

        composed = shift(shift(path, 0.5), 0.25)
        direct = shift(path, 0.75)

        assert composed.origin == direct.origin
        assert np.array_equal(composed.values, direct.values)

    def test_shifted_values(self):
        """Test that the shifted path reads omega(t + s) - omega(t)"""
        path = sample_wiener_path(4, -5.0, 5.0, 0.05)
        shifted = shift(path, 1.0)

        for s in (-2.0, -0.35, 0.0, 1.5):
            expected = path.value_at(1.0 + s) - path.value_at(1.0)
            assert abs(shifted.value_at(s) - expected) <= 1e-12

    def test_off_grid_shift_is_rejected(self):
        """Test that shifts by non-multiples of the path step raise"""
        path = sample_wiener_path(0, -1.0, 1.0, 0.05)

        with pytest.raises(OffGridError):
            shift(path, 0.033)

    def test_shift_outside_window_is_rejected(self):
        """Test that shifting beyond the sampled window raises"""
        path = sample_wiener_path(0, -1.0, 1.0, 0.05)

        with pytest.raises(WindowExhaustedError):
            shift(path, 2.0)


class TestOrnsteinUhlenbeck:

    def test_linear_path_value(self):
        """Test that omega(s) = s gives z* = 1 - (T + 1) e^{-T}"""
        path = linear_path(1e-4, 310_000, 10_000)
        expected = 1.0 - 31.0 * math.exp(-30.0)

        assert abs(ou_stationary(path, 0.0, 30.0) - expected) <= 1e-8
        # a linear path is invariant under the shift
        assert abs(ou_stationary(path, 0.5, 30.0) - expected) <= 1e-8

    def test_stationarity_along_shift(self):
        """Test that z*(theta_t omega) read on the shifted path is identical"""
        path = sample_wiener_path(5, -40.0, 5.0, 0.01)

        assert ou_stationary(shift(path, 1.0), 0.0) == ou_stationary(path, 1.0)

    def test_discrete_equation_residual(self):
        """Test that dz = -z dt + d omega holds up to 3 dt in RMS"""
        dt = 1e-3
        path = sample_wiener_path(3, -40.0, 10.0, dt)

        assert ou_residual(path, -5.0, 5.0) <= 3.0 * dt

    def test_series_matches_pointwise_values(self):
        """Test the vectorised evaluation against single evaluations"""
        path = sample_wiener_path(6, -35.0, 5.0, 0.01)
        times = np.array([-2.0, -0.005, 0.0, 1.234, 3.0])

        series = ou_series(path, times)
        single = [ou_stationary(path, t) for t in times]

        assert np.allclose(series, single, rtol=0.0, atol=1e-14)

    def test_left_window_too_short(self):
        """Test that z* needs T_trunc of path on the left"""
        path = sample_wiener_path(0, -10.0, 5.0, 0.01)

        with pytest.raises(WindowExhaustedError):
            ou_stationary(path, 0.0, 30.0)

    def test_sublinear_report(self):
        """Test that the report pairs every time with a nonnegative ratio"""
        path = sample_wiener_path(1, -40.0, 10.0, 0.01)
        report = sublinear_report(path, [-5.0, 0.0, 5.0])

        assert [t for t, _ in report] == [-5.0, 0.0, 5.0]
        assert all(ratio >= 0.0 for _, ratio in report)


class TestPathPoint:

    def test_shifted_point(self):
        """Test that shifting moves tau and the path together"""
        path = sample_wiener_path(2, -40.0, 5.0, 0.01)
        pp = PathPoint(0.0, path)

        moved = pp.shifted(1.0)

        assert moved.tau == 1.0
        assert moved.z(0.0) == pp.z(1.0)


class TestPathCsv:

    def test_export_and_import(self, tmp_path):
        """Test that an exported window is read back with identical samples"""
        path = sample_wiener_path(8, -2.0, 2.0, 0.01)
        file_path = tmp_path / "path.csv"

        write_path_csv(path, file_path, -1.0, 1.0)
        loaded = read_path_csv(file_path)

        i0, i1 = path.index_of(-1.0), path.index_of(1.0)
        assert loaded.dt == pytest.approx(0.01, rel=1e-12)
        assert np.array_equal(loaded.values, path.values[i0 : i1 + 1])

    def test_values_must_vanish_at_zero(self):
        """Test that imported paths must be anchored"""
        times = np.linspace(-1.0, 1.0, 21)

        with pytest.raises(ValueError):
            WienerPath.from_values(times, times + 1.0)
