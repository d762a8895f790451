"""
Check suites of an experiment and the orchestration of a run.

Suites run in dependency order; independent (eta, seed) cells inside a suite
are mapped over a thread pool capped by NRDS_THREADS, and every result file
is written by the calling thread.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import linalg

from nrds.attractor import (
    classify_connections,
    continuity_sweep,
    decreasing_within,
    dissipation_margin,
    invariance_defect,
    pullback_cloud,
    unstable_cloud,
    unstable_union_residual,
)
from nrds.cocycle import convergence_gap, cocycle_defect, integrate
from nrds.config import ExperimentConfig
from nrds.conjugation import (
    build_rde,
    conjugate_state,
    constant_shape,
    default_shape,
    m1_m2_estimate,
    rde_state,
    sde_oracle,
)
from nrds.driver import (
    PathPoint,
    ou_residual,
    ou_series,
    ou_stationary,
    sample_wiener_path,
    shift,
    sublinear_report,
    write_path_csv,
)
from nrds.errors import (
    FitFailureError,
    NoContractionError,
    NoGapError,
    SmallnessViolatedError,
    WindowTooShortError,
)
from nrds.export import number_tag, write_frame, write_json, write_manifest
from nrds.hyperbolic import (
    LinearizedProcess,
    continue_hyperbolic_solution,
    dichotomy_estimate,
    find_equilibria,
    linearize_along,
    shift_defect,
)
from nrds.manifold import (
    DEFAULT_L,
    attraction_rate_check,
    calibrate_delta0,
    estimate_rho,
    graph_continuity_gap,
    graph_transform,
    sandwich_check,
)
from nrds.timer import timer
from nrds.waveapp import (
    WaveGalerkinSpec,
    build_wave_family,
    cubic_nonlinearity,
    damping_bounds,
    linear_decay_split,
    lyapunov_energy,
    wave_equilibria,
    zero_nonlinearity,
)
from scenarios.scenarios import cubic_map, get_scenario, linear_map

PASSED = "PASSED"
FAILED = "FAILED"

EQUILIBRIUM_SEEDS = 9
CONJUGATION_DTS = (4e-3, 2e-3, 1e-3)
CONJUGATION_PATH_DT = 2.5e-4
CONJUGATION_HORIZON = 5.0
ORDER_BAND = (1.6, 2.6)
RK4_BAND = (12.0, 20.0)
INVARIANCE_LAG = 0.5
THETA_LAG = 0.5
CONNECTION_PROBES = 8
WAVE_DECAY_T = 20.0
WAVE_ENERGY_T = 10.0
NOISE_WINDOWS = (12.5, 25.0, 50.0)
UNTESTED_COMPACTNESS = (
    "collective asymptotic compactness over eta is assumed; it is only probed "
    "through bounded clouds across the tested etas"
)


class CheckResult(NamedTuple):
    suite: str
    name: str
    passed: bool
    detail: str


class RunReport(NamedTuple):
    checks: list
    files: list
    status: str

    @property
    def exit_code(self):
        return 0 if self.status == PASSED else 2


def thread_count():
    """Worker threads for independent cells, from NRDS_THREADS (default 1)."""
    value = os.environ.get("NRDS_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"NRDS_THREADS must be an integer, got {value!r}") from None


def path_window(config):
    """Window [t_min, t_max] every suite of the run reads the driver on."""
    n = config.numeric
    anchors = max(abs(t) for t in config.t_anchors)
    left = (
        n.T_trunc
        + n.T_back * 2.0 ** (n.max_doublings + 1)
        + n.T_h
        + anchors
        + 10.0
    )
    right = max(60.0, anchors + n.T_h + 20.0)
    return -left, right


def _snap(t, step):
    return step * round(t / step)


def _fmt(value):
    return f"{value:.6g}"


def _box_radius(box):
    return float(max(np.max(np.abs(box.lower)), np.max(np.abs(box.upper))))


@dataclass
class RunContext:
    config: ExperimentConfig
    paths: dict
    family: object = None
    wave_spec: WaveGalerkinSpec = None
    files: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)
    _equilibria: list = None

    @classmethod
    def create(cls, config):
        t_min, t_max = path_window(config)
        n = config.numeric
        paths = {
            seed: sample_wiener_path(seed, t_min, t_max, n.path_dt)
            for seed in config.seeds
        }
        context = cls(config=config, paths=paths)
        if config.scenario == "wave":
            context.wave_spec = wave_spec(config)
            context.family = build_wave_family(context.wave_spec)
        else:
            context.family = get_scenario(config.scenario).family(n.T_trunc)
        return context

    @property
    def numeric(self):
        return self.config.numeric

    @property
    def scenario(self):
        return get_scenario(self.config.scenario)

    @property
    def primary_seed(self):
        return self.config.seeds[0]

    @property
    def equilibria(self):
        if self._equilibria is None:
            self._equilibria = find_equilibria(
                self.family, self.scenario.box, EQUILIBRIUM_SEEDS
            )
        return self._equilibria

    def pp(self, seed):
        return PathPoint(0.0, self.paths[seed])

    def check(self, suite, name, passed, detail=""):
        result = CheckResult(suite, name, bool(passed), detail)
        self.checks.append(result)
        if not result.passed:
            print(f"Check {suite}.{name} failed: {detail}")
        return result.passed

    def output_path(self, name):
        self.files.append(name)
        return os.path.join(self.config.out_dir, name)

    def write_frame(self, frame, name):
        self.files.append(name)
        return write_frame(frame, self.config.out_dir, name)

    def write_json(self, data, name):
        self.files.append(name)
        return write_json(data, self.config.out_dir, name)

    def map(self, function, items):
        items = list(items)
        threads = thread_count()
        if threads == 1 or len(items) < 2:
            return [function(item) for item in items]
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(function, items))


def wave_spec(config, N=None):
    """Galerkin wave system described by the configuration."""
    w = config.wave
    if w.nonlinearity == "cubic":
        nonlinearity = cubic_nonlinearity(w.lam)
    else:
        nonlinearity = zero_nonlinearity()
    return WaveGalerkinSpec(
        N=N or config.numeric.N_modes,
        beta=w.beta,
        nonlinearity=nonlinearity,
        shape=default_shape(),
        damping=w.damping,
        T_trunc=config.numeric.T_trunc,
    )


def _positive_etas(config, descending=True):
    return sorted({eta for eta in config.etas if eta > 0}, reverse=descending)


def _projection_errors(estimate):
    dim = estimate.proj_u.shape[0]
    complement = float(np.max(np.abs(estimate.proj_u + estimate.proj_s - np.eye(dim))))
    idempotent = float(
        np.max(np.abs(estimate.proj_u @ estimate.proj_u - estimate.proj_u))
    )
    ranks = estimate.unstable_dim + int(round(np.trace(estimate.proj_s))) == dim
    passed = (
        complement <= 1e-10
        and idempotent <= 1e-8
        and estimate.M >= 1.0
        and estimate.alpha > 0
        and ranks
    )
    return passed, complement, idempotent


# driver


def driver_suite(ctx):
    n = ctx.numeric
    noise_rows = []
    for seed in ctx.config.seeds:
        path = ctx.paths[seed]
        step = path.dt
        pp = ctx.pp(seed)

        ctx.check(
            "driver",
            f"anchored_seed{seed}",
            path.values[path.origin] == 0.0,
            f"omega(0) = {_fmt(path.values[path.origin])}",
        )

        residual = ou_residual(path, _snap(-5.0, step), _snap(5.0, step), n.T_trunc)
        ctx.check(
            "driver",
            f"ou_residual_seed{seed}",
            residual <= 3.0 * step,
            f"rms {_fmt(residual)}, bound {_fmt(3.0 * step)}",
        )

        t, s = _snap(1.0, step), _snap(0.5, step)
        composed = shift(shift(path, t), s)
        direct = shift(path, t + s)
        ctx.check(
            "driver",
            f"shift_flow_seed{seed}",
            composed.origin == direct.origin
            and np.array_equal(composed.values, direct.values),
            f"t = {_fmt(t)}, s = {_fmt(s)}",
        )
        ctx.check(
            "driver",
            f"ou_stationarity_seed{seed}",
            ou_stationary(shift(path, t), 0.0, n.T_trunc)
            == ou_stationary(path, t, n.T_trunc),
            f"t = {_fmt(t)}",
        )

        tail = path.values[path.index_of(_snap(-n.T_trunc - 10.0, step)) : path.origin]
        change = abs(
            ou_stationary(path, 0.0, n.T_trunc)
            - ou_stationary(path, 0.0, n.T_trunc + 10.0)
        )
        bound = np.exp(-n.T_trunc) * (1.0 + float(np.max(np.abs(tail))))
        ctx.check(
            "driver",
            f"truncation_seed{seed}",
            change <= bound,
            f"change {_fmt(change)}, bound {_fmt(bound)}",
        )

        reach = min(path.t_max, -path.t_min - n.T_trunc)
        t_grid = [_snap(t, step) for t in np.linspace(-reach, reach, 41)]
        ratios = sublinear_report(path, t_grid, n.T_trunc)
        ctx.write_frame(
            pd.DataFrame(ratios, columns=["t", "ratio"]), f"sublinear_seed{seed}.csv"
        )

        shapes = (("default", default_shape()), ("constant", constant_shape()))
        for label, shape in shapes:
            for half_width in NOISE_WINDOWS:
                if half_width > reach:
                    continue
                n_grid = int(round(2.0 * half_width / step)) + 1
                bounds = m1_m2_estimate(
                    shape, pp, (-half_width, half_width), n_grid, n.T_trunc
                )
                noise_rows.append(
                    {
                        "seed": seed,
                        "shape": label,
                        "half_width": half_width,
                        "m1": bounds.m1,
                        "m2": bounds.m2,
                        "saturated": bounds.saturated,
                    }
                )

        write_path_csv(
            path,
            ctx.output_path(f"path_seed{seed}.csv"),
            _snap(-10.0, step),
            _snap(10.0, step),
        )

    ctx.write_frame(pd.DataFrame(noise_rows), "noise_bounds.csv")


# integrator


def _cubic_solution(y0, t):
    growth = np.exp(t)
    return y0 * growth / np.sqrt(1.0 + y0**2 * (growth**2 - 1.0))


def _order_ratio(family, y0, t1, exact, dts=(0.1, 0.05)):
    errors = [
        abs(float(integrate(family, 0.0, None, [y0], 0.0, t1, dt).final[0]) - exact)
        for dt in dts
    ]
    return errors[0] / errors[1], errors


def integrator_suite(ctx):
    n = ctx.numeric
    scalar = np.zeros((1, 1))
    # (label, field, y0, t1, exact y(t1))
    closed_forms = (
        ("linear", linear_map(-1.0), 1.0, 1.0, np.exp(-1.0)),
        ("cubic", cubic_map(), 0.5, 2.0, _cubic_solution(0.5, 2.0)),
    )
    rows = []
    for label, f, y0, t1, exact in closed_forms:
        family = build_rde(scalar, f, default_shape(), label=label)
        ratio, errors = _order_ratio(family, y0, t1, exact)
        rows.append(
            {
                "field": label,
                "error_dt": errors[0],
                "error_half_dt": errors[1],
                "ratio": ratio,
            }
        )
        ctx.check(
            "integrator",
            f"rk4_order_{label}",
            RK4_BAND[0] <= ratio <= RK4_BAND[1],
            f"error ratio {_fmt(ratio)} under step halving",
        )
    ctx.write_frame(pd.DataFrame(rows), "rk4_order.csv")

    F = ctx.family
    pp = ctx.pp(ctx.primary_seed)
    eta = max(ctx.config.etas)
    y0 = 0.5 * np.ones(F.dim)
    s = _snap(0.5, n.dt)
    t = _snap(1.0, n.dt)
    defect = cocycle_defect(F, eta, pp, y0, t, s, n.dt, n.blowup)
    ctx.check(
        "integrator",
        "cocycle_defect",
        defect <= 1e-9,
        f"eta = {_fmt(eta)}, defect {_fmt(defect)}",
    )

    radius = _box_radius(ctx.scenario.box)
    gap_rows = []
    for value in sorted(set(ctx.config.etas) | {0.0}, reverse=True):
        gap = convergence_gap(F, value, pp, radius, (-5.0, 5.0), n_probe=64)
        gap_rows.append(
            {"eta": value, "gap": gap, "gap_over_eta": gap / value if value else 0.0}
        )
    ctx.write_frame(pd.DataFrame(gap_rows), "convergence_gap.csv")

    ctx.check(
        "integrator",
        "convergence_gap_zero",
        gap_rows[-1]["gap"] == 0.0,
        f"gap at eta = 0 is {_fmt(gap_rows[-1]['gap'])}",
    )
    positive = [row["gap"] for row in gap_rows if row["eta"] > 0]
    ctx.check(
        "integrator",
        "convergence_gap_decreasing",
        all(b < a for a, b in zip(positive, positive[1:])),
        "gaps " + ", ".join(_fmt(g) for g in positive),
    )


# conjugation


def _conjugation_discrepancies(ctx, seed, eta):
    n = ctx.numeric
    scenario = ctx.scenario
    shape = default_shape()
    f = scenario.nonlinearity()
    B = np.zeros((scenario.dim, scenario.dim))
    path = sample_wiener_path(
        seed,
        -(n.T_trunc + 1.0),
        CONJUGATION_HORIZON + 1.0,
        CONJUGATION_PATH_DT,
    )
    pp = PathPoint(0.0, path)
    family = scenario.family(n.T_trunc, shape)
    y0 = 0.5 * np.ones(scenario.dim)
    v0 = rde_state(y0, 0.0, pp, eta, shape, n.T_trunc)

    rows = []
    for dt in CONJUGATION_DTS:
        oracle = sde_oracle(B, f, shape, eta, pp, y0, 0.0, CONJUGATION_HORIZON, dt)
        rde = integrate(family, eta, pp, v0, 0.0, CONJUGATION_HORIZON, dt)
        times = rde.times
        factor = np.exp(eta * shape.kappa(times) * ou_series(path, times, n.T_trunc))
        conjugated = factor[:, None] * rde.states
        discrepancy = float(np.max(np.linalg.norm(oracle.states - conjugated, axis=1)))
        rows.append({"seed": seed, "dt": dt, "discrepancy": discrepancy})

    dt = CONJUGATION_DTS[0]
    autonomous = integrate(family, 0.0, None, y0, 0.0, 1.0, dt).states
    oracle = sde_oracle(B, f, shape, 0.0, pp, y0, 0.0, 1.0, dt).states
    eta_zero = float(np.max(np.linalg.norm(autonomous - oracle, axis=1)))

    v = rde_state(y0, 1.0, pp, eta, shape, n.T_trunc)
    back = conjugate_state(v, 1.0, pp, eta, shape, n.T_trunc)
    round_trip = float(np.max(np.abs(back - y0)))
    return rows, eta_zero, round_trip


def conjugation_suite(ctx):
    positive = _positive_etas(ctx.config)
    eta = positive[0] if positive else 0.1
    seeds = ctx.config.seeds[:3]
    results = ctx.map(lambda seed: _conjugation_discrepancies(ctx, seed, eta), seeds)

    rows = [row for result in results for row in result[0]]
    table = pd.DataFrame(rows)
    ctx.write_frame(table, "conjugation_order.csv")

    mean = table.groupby("dt", sort=False)["discrepancy"].mean().to_numpy()
    ratios = mean[:-1] / mean[1:]
    ctx.check(
        "conjugation",
        "strong_order",
        bool(np.all((ratios >= ORDER_BAND[0]) & (ratios <= ORDER_BAND[1]))),
        f"eta = {_fmt(eta)}, seed-mean ratios " + ", ".join(_fmt(r) for r in ratios),
    )

    dt = CONJUGATION_DTS[0]
    eta_zero = max(result[1] for result in results)
    ctx.check(
        "conjugation",
        "oracle_eta_zero",
        eta_zero <= 10.0 * dt**2,
        f"max difference {_fmt(eta_zero)}, bound {_fmt(10.0 * dt**2)}",
    )
    round_trip = max(result[2] for result in results)
    ctx.check(
        "conjugation",
        "round_trip",
        round_trip <= 1e-14,
        f"max error {_fmt(round_trip)}",
    )


# hyperbolic


def _continue(ctx, seed, index, eta):
    n = ctx.numeric
    eq = ctx.equilibria[index]
    try:
        trace = continue_hyperbolic_solution(
            ctx.family, eta, ctx.pp(seed), eq, n.T_h, n.tol, dt=n.dt
        )
    except NoContractionError:
        return None, "no-contraction"
    except WindowTooShortError:
        return None, "window-too-short"
    return trace, "converged"


def ensure_traces(ctx, seed, etas):
    """Continue every equilibrium for each eta, reusing earlier results."""
    cells = [
        (index, eta)
        for eta in etas
        for index in range(len(ctx.equilibria))
        if (seed, index, eta) not in ctx.traces
    ]
    results = ctx.map(lambda cell: _continue(ctx, seed, *cell), cells)
    for (index, eta), result in zip(cells, results):
        ctx.traces[(seed, index, eta)] = result
    return {
        (index, eta): ctx.traces[(seed, index, eta)]
        for eta in etas
        for index in range(len(ctx.equilibria))
    }


def _equilibria_frame(equilibria):
    rows = []
    for index, eq in enumerate(equilibria):
        row = {"index": index}
        row.update({f"y_{i + 1}": float(v) for i, v in enumerate(eq.y_star)})
        row.update({"gap": eq.gap, "unstable_dim": eq.unstable_dim})
        rows.append(row)
    return pd.DataFrame(rows)


def hyperbolic_suite(ctx):
    n = ctx.numeric
    F = ctx.family
    seed = ctx.primary_seed
    equilibria = ctx.equilibria
    ctx.write_frame(_equilibria_frame(equilibria), "equilibria.csv")
    ctx.check(
        "hyperbolic",
        "equilibria_hyperbolic",
        bool(equilibria) and all(eq.hyperbolic for eq in equilibria),
        f"{len(equilibria)} equilibria, gaps "
        + ", ".join(_fmt(eq.gap) for eq in equilibria),
    )
    if not equilibria:
        return

    algebra = []
    for index, eq in enumerate(equilibria):
        A = np.atleast_2d(F.autonomous_jac(eq.y_star))
        process = LinearizedProcess.constant(A, -n.T_h, n.T_h, n.dt)
        estimate = dichotomy_estimate(process)
        algebra.append(_projection_errors(estimate))
        ctx.write_json(estimate.to_report(), f"dichotomy_eq{index}.json")

    etas = sorted(set(ctx.config.etas) | {0.0})
    traces = ensure_traces(ctx, seed, etas)

    rows = []
    thresholds = []
    for index, eq in enumerate(equilibria):
        contracted = []
        for eta in etas:
            trace, status = traces[(index, eta)]
            row = {"eq": index, "eta": eta, "status": status}
            if trace is not None:
                contracted.append(eta)
                row.update(
                    {
                        "sup_dist": trace.sup_dist,
                        "residual": trace.residual,
                        "contraction_factor": (
                            float(np.mean(trace.contraction))
                            if trace.contraction
                            else float("nan")
                        ),
                        "sup_dist_over_eta": trace.sup_dist / eta if eta else 0.0,
                    }
                )
                ctx.write_frame(
                    trace.to_frame(), f"trace_eq{index}_eta{number_tag(eta)}.csv"
                )
            rows.append(row)
        thresholds.append(
            {"eq": index, "eta_max": max(contracted) if contracted else float("nan")}
        )
        _continuation_checks(ctx, index, eq, etas, traces)

    ctx.write_frame(pd.DataFrame(rows), "continuation.csv")
    ctx.write_frame(pd.DataFrame(thresholds), "contraction_threshold.csv")

    for index, eq in enumerate(equilibria):
        algebra.extend(_linearized_dichotomy(ctx, index, eq, etas, traces))
    ctx.check(
        "hyperbolic",
        "projection_algebra",
        all(passed for passed, _, _ in algebra),
        f"{len(algebra)} estimates, worst complement "
        f"{_fmt(max(c for _, c, _ in algebra))}, worst idempotence "
        f"{_fmt(max(i for _, _, i in algebra))}",
    )


def _continuation_checks(ctx, index, eq, etas, traces):
    n = ctx.numeric
    suite = "hyperbolic"
    zero, _ = traces[(index, 0.0)]
    ctx.check(
        suite,
        f"eta_zero_eq{index}",
        zero is not None and zero.sup_dist <= n.tol and zero.residual <= n.tol,
        "trivial continuation at eta = 0"
        if zero is not None
        else "continuation failed at eta = 0",
    )

    positive = [eta for eta in reversed(etas) if eta > 0]
    if not positive:
        return
    smallest, _ = traces[(index, positive[-1])]
    ctx.check(
        suite,
        f"contracts_smallest_eta_eq{index}",
        smallest is not None,
        f"eta = {_fmt(positive[-1])}",
    )

    converged = [(eta, traces[(index, eta)][0]) for eta in positive]
    converged = [(eta, trace) for eta, trace in converged if trace is not None]
    distances = [trace.sup_dist for _, trace in converged]
    ctx.check(
        suite,
        f"sup_dist_monotone_eq{index}",
        decreasing_within(distances, rel_tol=0.2, abs_tol=10.0 * n.tol),
        "sup_dist " + ", ".join(_fmt(d) for d in distances),
    )
    if len(converged) >= 2:
        scaled = [trace.sup_dist / eta for eta, trace in converged]
        linear = max(distances) <= 10.0 * n.tol or max(scaled) <= 2.0 * min(scaled)
        ctx.check(
            suite,
            f"sup_dist_linear_eq{index}",
            linear,
            "sup_dist/eta " + ", ".join(_fmt(r) for r in scaled),
        )

    if converged:
        eta, trace = converged[0]
        passed, detail = _theta_defect(ctx, eq, eta, trace)
        ctx.check(suite, f"theta_compatible_eq{index}", passed, detail)


def _theta_defect(ctx, eq, eta, trace):
    """Continuation along the shifted driver against the time-shifted trace."""
    n = ctx.numeric
    path = ctx.paths[ctx.primary_seed]
    lag = _snap(THETA_LAG, max(n.dt, path.dt))
    # the driver must cover the padded window on both sides
    room = min(path.t_max - lag, -path.t_min - n.T_trunc) - n.dt
    try:
        defect, window = shift_defect(
            ctx.family,
            eta,
            trace.pp,
            eq,
            lag,
            0.5 * n.T_h,
            n.tol,
            dt=n.dt,
            scale=trace.sup_dist,
            max_window=room,
        )
    except (NoContractionError, WindowTooShortError) as e:
        return False, f"eta = {_fmt(eta)}: {e}"
    return defect <= 2.0 * n.tol, (
        f"eta = {_fmt(eta)}, max defect {_fmt(defect)} on |t| <= "
        f"{_fmt(0.5 * n.T_h)}, half window {_fmt(window)}"
    )


def _linearized_dichotomy(ctx, index, eq, etas, traces):
    positive = [eta for eta in etas if eta > 0]
    if not positive:
        return []
    eta = positive[0]
    trace, _ = traces[(index, eta)]
    if trace is None:
        return []
    try:
        estimate = dichotomy_estimate(linearize_along(ctx.family, eta, trace))
    except (FitFailureError, NoGapError) as e:
        ctx.check("hyperbolic", f"linearized_rate_eq{index}", False, str(e))
        return []
    ctx.write_json(
        estimate.to_report(), f"dichotomy_eq{index}_eta{number_tag(eta)}.json"
    )
    ctx.check(
        "hyperbolic",
        f"linearized_rate_eq{index}",
        abs(estimate.alpha - eq.gap) <= 0.1 * eq.gap,
        f"eta = {_fmt(eta)}, alpha {_fmt(estimate.alpha)}, gap {_fmt(eq.gap)}",
    )
    return [_projection_errors(estimate)]


# manifold


def _graph_horizon(ctx, alpha, room):
    dt = ctx.numeric.dt
    return dt * max(1, round(min(12.0 / alpha, room) / dt))


def _stable_direction(trace):
    basis = linalg.orth(trace.proj_s)
    return basis[:, 0] if basis.shape[1] else None


def manifold_suite(ctx):
    n = ctx.numeric
    F = ctx.family
    seed = ctx.primary_seed
    suite = "manifold"
    equilibria = ctx.equilibria
    etas = sorted(set(ctx.config.etas) | {0.0})
    traces = ensure_traces(ctx, seed, etas)

    saddles = [i for i, eq in enumerate(equilibria) if eq.unstable_dim > 0]
    if saddles:
        _saddle_graphs(ctx, saddles[0], etas, traces)
    else:
        ctx.check(
            suite, "saddle_available", False, "no equilibrium with unstable directions"
        )

    attracting = sorted({0.0, max(etas)})
    for index, eq in enumerate(equilibria):
        if eq.unstable_dim == len(eq.y_star) or index in saddles[:1]:
            continue
        for eta in attracting:
            trace, status = traces[(index, eta)]
            if trace is None:
                name = f"attraction_eq{index}_eta{number_tag(eta)}"
                ctx.check(suite, name, False, status)
                continue
            dich = dichotomy_estimate(linearize_along(F, eta, trace))
            horizon = _graph_horizon(ctx, dich.alpha, n.T_h)
            gm = graph_transform(
                F,
                eta,
                trace,
                dich,
                n.delta0,
                grid_n=n.graph_nodes,
                tol=n.tol,
                horizon=horizon,
            )
            _attraction(ctx, index, eta, trace, gm)


def _saddle_graphs(ctx, index, etas, traces):
    n = ctx.numeric
    F = ctx.family
    suite = "manifold"

    zero, status = traces[(index, 0.0)]
    if zero is None:
        ctx.check(suite, "graph_reference", False, f"continuation at eta = 0: {status}")
        return
    dich_zero = dichotomy_estimate(linearize_along(F, 0.0, zero))
    try:
        delta, _ = calibrate_delta0(F, 0.0, zero, dich_zero, n.delta0, DEFAULT_L)
    except SmallnessViolatedError as e:
        ctx.check(suite, "calibration", False, str(e))
        return
    horizon = _graph_horizon(ctx, dich_zero.alpha, n.T_h)

    graphs = {}
    for eta in etas:
        trace, status = traces[(index, eta)]
        tag = number_tag(eta)
        if trace is None:
            ctx.check(suite, f"graph_eta{tag}", False, f"continuation: {status}")
            continue
        if eta == 0.0:
            dich = dich_zero
        else:
            dich = dichotomy_estimate(linearize_along(F, eta, trace))
        anchors = graphs[0.0].anchors if graphs else None
        try:
            gm = graph_transform(
                F,
                eta,
                trace,
                dich,
                delta,
                grid_n=n.graph_nodes,
                tol=n.tol,
                anchors=anchors,
                horizon=horizon,
                L=DEFAULT_L,
            )
        except NoContractionError as e:
            ctx.check(suite, f"graph_eta{tag}", False, str(e))
            continue
        graphs[eta] = gm
        _graph_checks(ctx, gm, eta)
        if eta == 0.0 and ctx.config.scenario == "saddle2d":
            _series_check(ctx, trace, dich, horizon)
        _attraction(ctx, index, eta, trace, gm)

    if 0.0 in graphs:
        rows = [
            {"eta": eta, "gap": graph_continuity_gap(gm, graphs[0.0])}
            for eta, gm in sorted(graphs.items(), reverse=True)
            if eta > 0
        ]
        for row in rows:
            row["gap_over_eta"] = row["gap"] / row["eta"]
        ctx.write_frame(
            pd.DataFrame(rows, columns=["eta", "gap", "gap_over_eta"]),
            "graph_continuity.csv",
        )
        gaps = [row["gap"] for row in rows]
        ctx.check(
            suite,
            "graph_continuity_decreasing",
            all(b < a for a, b in zip(gaps, gaps[1:])),
            "gaps " + ", ".join(_fmt(g) for g in gaps),
        )


def _graph_checks(ctx, gm, eta):
    suite = "manifold"
    tag = number_tag(eta)
    ctx.write_frame(gm.to_frame(), f"graph_eta{tag}.csv")

    origin = np.zeros((1, gm.unstable_dim))
    at_zero = max(
        float(np.max(np.abs(gm.value_at(s, origin)))) for s in gm.anchors
    )
    off_range = float(np.max(np.abs(gm.values @ gm.solver.proj_u.T)))
    sandwich = sandwich_check(gm, gm.delta0)

    report = gm.to_report()
    report["sandwich"] = sandwich.to_report()
    report["value_at_zero"] = at_zero
    report["rho_along_trace"] = estimate_rho(ctx.family, eta, gm.center, gm.delta0)
    ctx.write_json(report, f"graph_eta{tag}.json")

    ctx.check(
        suite,
        f"graph_zero_eta{tag}",
        at_zero <= 1e-8,
        f"max |Sigma(s, 0)| {_fmt(at_zero)}",
    )
    ctx.check(
        suite,
        f"graph_lipschitz_eta{tag}",
        gm.L_est <= gm.L,
        f"L_est {_fmt(gm.L_est)}, L {_fmt(gm.L)}",
    )
    ctx.check(
        suite,
        f"graph_stable_range_eta{tag}",
        off_range <= 1e-8,
        f"max |P_u Sigma| {_fmt(off_range)}",
    )
    ctx.check(
        suite,
        f"smallness_eta{tag}",
        gm.smallness.passed,
        f"rho {_fmt(gm.rho)}, conditions {gm.smallness.conditions}",
    )
    ctx.check(
        suite,
        f"sandwich_eta{tag}",
        sandwich.passed,
        f"max ratio {_fmt(sandwich.max_ratio)}, escaped {sandwich.escaped}",
    )


def _series_check(ctx, trace, dich, horizon):
    """Unstable graph of the cubic saddle against y = x^2/3 + 2x^4/15."""
    n = ctx.numeric
    gm = graph_transform(
        ctx.family,
        0.0,
        trace,
        dich,
        n.delta0,
        grid_n=n.graph_nodes,
        tol=n.tol,
        anchors=[0.0],
        horizon=horizon,
    )
    inner = np.abs(gm.nodes[:, 0]) <= 0.4 * gm.delta0
    c = gm.nodes[inner, 0]
    predicted = np.zeros((c.size, 2))
    predicted[:, 1] = c**2 / 3.0 + 2.0 * c**4 / 15.0
    error = float(np.max(np.abs(gm.values[0][inner] - predicted)))
    bound = min(5e-3, 0.05 * float(np.max(predicted[:, 1])))
    ctx.check(
        "manifold",
        "graph_series",
        error <= bound,
        f"delta0 {_fmt(n.delta0)}, max node error {_fmt(error)}, bound {_fmt(bound)}",
    )


def _attraction(ctx, index, eta, trace, gm):
    n = ctx.numeric
    tag = f"eq{index}_eta{number_tag(eta)}"
    direction = _stable_direction(trace)
    if direction is None:
        return
    dt = trace.dt
    if gm.unstable_dim:
        t0 = trace.times[0] + gm.solver.horizon
    else:
        t0 = trace.times[0] + dt * round(1.0 / dt)
    t1 = min(t0 + dt * round(3.0 / (gm.dich.gamma * dt)), trace.times[-1])
    zeta0 = 0.25 * gm.delta0 * direction
    report = attraction_rate_check(
        ctx.family, eta, trace, gm, zeta0, (t0, t1), n_samples=11
    )
    ctx.write_json(report.to_report(), f"attraction_{tag}.json")
    fitted = np.isfinite(report.gamma_fit) and report.gamma_fit > 0
    ctx.check(
        "manifold",
        f"attraction_{tag}",
        report.passed and fitted,
        f"gamma_fit {_fmt(report.gamma_fit)}, gamma {_fmt(report.gamma)}, "
        f"max ratio {_fmt(report.max_ratio)}",
    )


# attractor and continuity


def _cloud_params(ctx):
    n = ctx.numeric
    return {
        "box": ctx.scenario.box,
        "T_back": n.T_back,
        "grid_n": n.grid_n,
        "eps_cluster": n.eps_cluster,
        "dt": n.dt,
        "max_doublings": n.max_doublings,
    }


def ensure_sweeps(ctx, seeds):
    missing = [seed for seed in seeds if seed not in ctx.sweeps]
    results = ctx.map(
        lambda seed: continuity_sweep(
            ctx.family,
            ctx.pp(seed),
            list(ctx.config.etas),
            list(ctx.config.t_anchors),
            _cloud_params(ctx),
        ),
        missing,
    )
    ctx.sweeps.update(zip(missing, results))
    return {seed: ctx.sweeps[seed] for seed in seeds}


def _self_rows(table, eps):
    rows = table[table["eta"] == 0.0]
    return rows.empty or bool(((rows["upper"] <= eps) & (rows["lower"] <= eps)).all())


def attractor_suite(ctx):
    n = ctx.numeric
    suite = "attractor"
    seed = ctx.primary_seed
    pp = ctx.pp(seed)
    sweep = ensure_sweeps(ctx, [seed])[seed]

    ctx.write_frame(sweep.table, f"sweep_seed{seed}.csv")
    ctx.write_frame(sweep.maxima, f"sweep_max_seed{seed}.csv")
    for (eta, t_anchor), cloud in sweep.clouds.items():
        ctx.write_frame(
            cloud.to_frame(),
            f"cloud_seed{seed}_eta{number_tag(eta)}_t{number_tag(t_anchor)}.csv",
        )

    ctx.check(
        suite,
        "self_row",
        _self_rows(sweep.table, n.eps_cluster),
        f"eps_cluster {_fmt(n.eps_cluster)}",
    )
    unconverged = [
        key for key, cloud in sweep.clouds.items() if not cloud.meta["converged"]
    ]
    ctx.check(
        suite,
        "pullback_converged",
        not unconverged,
        f"{len(unconverged)} of {len(sweep.clouds)} clouds "
        "without doubling convergence",
    )

    anchor = ctx.config.t_anchors[0]
    reference = next(iter(sweep.clouds.values()))
    if (0.0, anchor) in sweep.clouds:
        reference = sweep.clouds[(0.0, anchor)]
    if ctx.config.scenario == "cubic1d" and reference.eta == 0.0:
        points = np.sort(reference.points[:, 0])
        largest_gap = float(np.max(np.diff(points))) if points.size > 1 else 0.0
        ctx.check(
            suite,
            "reference_span",
            abs(points[0] + 1.0) <= 0.02
            and abs(points[-1] - 1.0) <= 0.02
            and largest_gap <= 2.0 * n.eps_cluster,
            f"span [{_fmt(points[0])}, {_fmt(points[-1])}], "
            f"largest gap {_fmt(largest_gap)}",
        )

    radius = _box_radius(ctx.scenario.box)
    times = np.linspace(-5.0, 5.0, 11)
    margins = {
        eta: dissipation_margin(ctx.family, eta, pp, radius, times)
        for eta in sorted(set(ctx.config.etas) | {0.0})
    }
    ctx.write_frame(
        pd.DataFrame(
            {"eta": list(margins), "radius": radius, "margin": list(margins.values())}
        ),
        "dissipation_margin.csv",
    )
    ctx.check(
        suite,
        "dissipative",
        margins[0.0] < 0,
        f"max f(x).x on |x| = {_fmt(radius)} is {_fmt(margins[0.0])}",
    )

    params = _cloud_params(ctx)
    start = sweep.clouds.get((0.0, anchor)) or pullback_cloud(
        ctx.family, 0.0, pp, t_anchor=anchor, **params
    )
    lag = _snap(INVARIANCE_LAG, n.dt)
    later = pullback_cloud(ctx.family, 0.0, pp, t_anchor=anchor + lag, **params)
    defect = invariance_defect(ctx.family, 0.0, pp, start, later, n.dt)
    thinned = type(start)(points=start.points[::2], t_anchor=start.t_anchor, eta=0.0)
    control = invariance_defect(ctx.family, 0.0, pp, thinned, later, n.dt)
    ctx.write_json(
        {"lag": lag, "defect": defect, "thinned_defect": control},
        "invariance.json",
    )
    ctx.check(
        suite,
        "invariance",
        defect <= 2.0 * n.eps_cluster,
        f"defect {_fmt(defect)}, thinned control {_fmt(control)}",
    )


def continuity_suite(ctx):
    n = ctx.numeric
    suite = "continuity"
    sweeps = ensure_sweeps(ctx, ctx.config.seeds)

    tables = []
    maxima = []
    for seed, sweep in sweeps.items():
        tables.append(sweep.table.assign(seed=seed))
        maxima.append(sweep.maxima.assign(seed=seed))

        ctx.check(
            suite,
            f"self_row_seed{seed}",
            _self_rows(sweep.table, n.eps_cluster),
            f"eps_cluster {_fmt(n.eps_cluster)}",
        )
        ordered = sweep.maxima[sweep.maxima["eta"] > 0].sort_values(
            "eta", ascending=False
        )
        for column in ("dH", "upper", "lower"):
            values = ordered[column].tolist()
            ctx.check(
                suite,
                f"{column}_decreasing_seed{seed}",
                decreasing_within(values, rel_tol=0.2, abs_tol=n.eps_cluster),
                f"{column} " + ", ".join(_fmt(v) for v in values),
            )

    ctx.write_frame(pd.concat(tables, ignore_index=True), "continuity.csv")
    ctx.write_frame(pd.concat(maxima, ignore_index=True), "continuity_max.csv")
    largest = max(
        float(np.max(np.abs(cloud.points)))
        for sweep in sweeps.values()
        for cloud in sweep.clouds.values()
    )
    ctx.write_json(
        {"untested_hypothesis": UNTESTED_COMPACTNESS, "largest_coordinate": largest},
        "continuity_assumptions.json",
    )


# gradient structure


def _separation(traces):
    closest = np.inf
    for i, a in enumerate(traces):
        for b in traces[i + 1 :]:
            distances = np.linalg.norm(a.states - b.states, axis=1)
            closest = min(closest, float(np.min(distances)))
    return closest


def _unstable_clouds(ctx, eta, traces, flow_out):
    n = ctx.numeric
    clouds = []
    for trace in traces:
        dich = dichotomy_estimate(linearize_along(ctx.family, eta, trace))
        horizon = _graph_horizon(ctx, dich.alpha, n.T_h - flow_out)
        gm = graph_transform(
            ctx.family,
            eta,
            trace,
            dich,
            n.delta0,
            grid_n=n.graph_nodes,
            tol=n.tol,
            anchors=[-flow_out],
            horizon=horizon,
        )
        clouds.append(unstable_cloud(ctx.family, eta, gm, 0.0, n.eps_cluster))
    return clouds


def gradient_suite(ctx):
    n = ctx.numeric
    suite = "gradient"
    seed = ctx.primary_seed
    pp = ctx.pp(seed)
    equilibria = ctx.equilibria
    etas = sorted(set(ctx.config.etas) | {0.0})
    traces = ensure_traces(ctx, seed, etas)

    reference_edges = None
    for eta in etas:
        tag = number_tag(eta)
        found = [traces[(i, eta)][0] for i in range(len(equilibria))]
        if any(trace is None for trace in found):
            ctx.check(suite, f"traces_eta{tag}", False, "a continuation failed")
            continue
        eps = min(0.1, _separation(found) / 3.0) if len(found) > 1 else 0.1
        graph = classify_connections(ctx.family, eta, pp, found, eps, CONNECTION_PROBES)

        witness_files = {}
        for (i, j), frame in sorted(graph.witnesses.items()):
            name = f"witness_eta{tag}_{i}_{j}.csv"
            ctx.write_frame(frame, name)
            witness_files[(i, j)] = name
        ctx.write_json(graph.to_json(witness_files), f"connections_eta{tag}.json")

        ctx.check(
            suite,
            f"acyclic_eta{tag}",
            graph.acyclic,
            f"edges {sorted(graph.edges)}, homoclinic {graph.homoclinic}",
        )
        ctx.check(
            suite,
            f"classified_eta{tag}",
            graph.success_rate == 1.0,
            f"success rate {_fmt(graph.success_rate)}",
        )
        if reference_edges is None:
            reference_edges = graph.edges
        else:
            ctx.check(
                suite,
                f"same_digraph_eta{tag}",
                graph.edges == reference_edges,
                f"edges {sorted(graph.edges)} against {sorted(reference_edges)}",
            )

    flow_out = _snap(0.5 * n.T_h, n.dt)
    params = _cloud_params(ctx)
    for eta in sorted({0.0, max(etas)}):
        tag = number_tag(eta)
        found = [traces[(i, eta)][0] for i in range(len(equilibria))]
        if any(trace is None for trace in found):
            continue
        attractor = pullback_cloud(ctx.family, eta, pp, t_anchor=0.0, **params)
        clouds = _unstable_clouds(ctx, eta, found, flow_out)
        residual = unstable_union_residual(attractor, clouds)
        saddles = [i for i, eq in enumerate(equilibria) if eq.unstable_dim > 0]
        remaining = [cloud for i, cloud in enumerate(clouds) if i not in saddles[:1]]
        control = unstable_union_residual(attractor, remaining) if remaining else None
        ctx.write_json(
            {
                "residual": residual.residual,
                "reverse": residual.reverse,
                "without_first_saddle": control.residual if control else float("nan"),
            },
            f"union_residual_eta{tag}.json",
        )
        ctx.check(
            suite,
            f"union_residual_eta{tag}",
            residual.residual <= 2.0 * n.eps_cluster
            and residual.reverse <= 2.0 * n.eps_cluster,
            f"residual {_fmt(residual.residual)}, reverse {_fmt(residual.reverse)}",
        )


# wave


def _mode_roots(spec):
    k = spec.wavenumbers
    root = np.sqrt((spec.beta**2 - 4.0 * k**2).astype(complex))
    return np.concatenate([(-spec.beta + root) / 2.0, (-spec.beta - root) / 2.0])


def _energy_probe(spec):
    y0 = np.zeros(spec.dim)
    y0[0] = 0.5
    if spec.N > 1:
        y0[1] = 0.2
    return y0


def wave_suite(ctx):
    n = ctx.numeric
    suite = "wave"
    spec = ctx.wave_spec
    seed = ctx.primary_seed
    pp = ctx.pp(seed)

    linear = build_wave_family(wave_spec_linear(spec))
    computed = linalg.eigvals(linear.autonomous_jac(np.zeros(spec.dim)))
    predicted = _mode_roots(spec)
    mismatch = max(float(np.min(np.abs(computed - root))) for root in predicted)
    ctx.check(
        suite, "mode_eigenvalues", mismatch <= 1e-10, f"max mismatch {_fmt(mismatch)}"
    )

    growth = spec.growth_fit()
    y0 = _energy_probe(spec)
    trajectory = integrate(ctx.family, 0.0, None, y0, 0.0, WAVE_ENERGY_T, n.dt)
    energy = lyapunov_energy(spec, trajectory.states)
    weighted = lyapunov_energy(spec, trajectory.states, kinetic_weight=spec.beta / 2.0)
    increase = float(np.max(np.diff(energy)))
    ctx.write_frame(
        pd.DataFrame(
            {"t": trajectory.times, "energy": energy, "energy_beta": weighted}
        ),
        "wave_energy.csv",
    )
    ctx.check(
        suite,
        "energy_nonincreasing",
        increase <= 1e-8,
        f"largest step increase {_fmt(increase)}",
    )

    report = {
        "growth": growth._asdict(),
        "energy_beta_largest_increase": float(np.max(np.diff(weighted))),
        "compact_part": "vacuous at Galerkin truncation",
    }
    if 2 * spec.N <= 64:
        fine = wave_spec(ctx.config, N=2 * spec.N)
        fine_y0 = np.zeros(fine.dim)
        fine_y0[: spec.N] = y0[: spec.N]
        fine_states = integrate(
            build_wave_family(fine), 0.0, None, fine_y0, 0.0, WAVE_ENERGY_T, n.dt
        ).states
        fine_energy = lyapunov_energy(fine, fine_states)
        scale = max(float(np.max(np.abs(energy))), 1e-12)
        drift = float(np.max(np.abs(fine_energy - energy))) / scale
        report["galerkin_relative_change"] = drift
        ctx.check(
            suite,
            "galerkin_consistency",
            drift <= 0.01,
            f"relative energy change {_fmt(drift)} on doubling N",
        )

    equilibria = wave_equilibria(spec)
    rows = [
        {
            "index": i,
            "amplitude": float(np.linalg.norm(eq.y_star[: spec.N])),
            "gap": eq.gap,
            "unstable_dim": eq.unstable_dim,
            "hyperbolic": eq.hyperbolic,
        }
        for i, eq in enumerate(equilibria)
    ]
    ctx.write_frame(pd.DataFrame(rows), "wave_equilibria.csv")
    residual = max(
        (
            float(np.linalg.norm(ctx.family.autonomous_rhs(eq.y_star)))
            for eq in equilibria
        ),
        default=float("inf"),
    )
    ctx.check(
        suite, "equilibria_residual", residual <= 1e-8, f"max residual {_fmt(residual)}"
    )
    report["equilibria"] = len(equilibria)
    ctx.write_json(report, "wave_report.json")

    path = ctx.paths[seed]
    half_width = min(25.0, path.t_max, -path.t_min - n.T_trunc)
    bound_rows = []
    decay_rows = []
    for eta in sorted(set(ctx.config.etas) | {0.0}):
        bounds = damping_bounds(spec, eta, pp, (-half_width, half_width))
        bound_rows.append({"eta": eta, **bounds._asdict()})
        floor = spec.beta if spec.damping == "absolute" else spec.beta - eta
        ctx.check(
            suite,
            f"damping_floor_eta{number_tag(eta)}",
            bounds.b0 >= floor,
            f"b0 {_fmt(bounds.b0)}, floor {_fmt(floor)}",
        )
        try:
            split = linear_decay_split(spec, eta, pp, WAVE_DECAY_T, n.dt)
        except FitFailureError as e:
            ctx.check(suite, f"decay_eta{number_tag(eta)}", False, str(e))
            continue
        decay_rows.append({"eta": eta, **split.to_report()})
        ctx.check(
            suite,
            f"splitting_eta{number_tag(eta)}",
            split.splitting_defect <= 1e-12,
            f"defect {_fmt(split.splitting_defect)}, "
            f"Duhamel {_fmt(split.duhamel_defect)}",
        )

    ctx.write_frame(pd.DataFrame(bound_rows), "damping_bounds.csv")
    decay = pd.DataFrame(decay_rows)
    ctx.write_frame(decay, "decay_split.csv")
    if decay.empty or 0.0 not in set(decay["eta"]):
        return
    alpha_zero = float(decay.loc[decay["eta"] == 0.0, "alpha"].iloc[0])
    predicted_alpha = float(decay.loc[decay["eta"] == 0.0, "predicted_alpha"].iloc[0])
    ctx.check(
        suite,
        "decay_rate",
        abs(alpha_zero - predicted_alpha) <= 0.15 * predicted_alpha,
        f"fitted {_fmt(alpha_zero)}, mode-wise {_fmt(predicted_alpha)}",
    )
    if spec.damping == "absolute":
        for row in decay[decay["eta"] > 0].itertuples():
            ctx.check(
                suite,
                f"decay_monotone_eta{number_tag(row.eta)}",
                row.alpha >= 0.95 * alpha_zero,
                f"alpha {_fmt(row.alpha)} against {_fmt(alpha_zero)} at eta = 0",
            )


def wave_spec_linear(spec):
    return replace(spec, nonlinearity=zero_nonlinearity())


SUITES = {
    "driver": driver_suite,
    "integrator": integrator_suite,
    "conjugation": conjugation_suite,
    "hyperbolic": hyperbolic_suite,
    "manifold": manifold_suite,
    "attractor": attractor_suite,
    "continuity": continuity_suite,
    "gradient": gradient_suite,
    "wave": wave_suite,
}


def run(config):
    """
    Run the configured check suites and write all outputs with a manifest.

    Args:
        config: Validated ExperimentConfig

    Returns:
        RunReport: check results, emitted files and the overall status

    Raises:
        Exception: errors of a suite propagate after the manifest has been
            written with status FAILED
    """
    os.makedirs(config.out_dir, exist_ok=True)
    with timer("Sampling driver paths"):
        ctx = RunContext.create(config)

    error = None
    try:
        for name in config.ordered_checks:
            print(f"Running check suite {name}")
            with timer(f"Check suite {name}") as record:
                SUITES[name](ctx)
                results = [c for c in ctx.checks if c.suite == name]
                passed = sum(c.passed for c in results)
                record.detail = f"{passed}/{len(results)} checks passed"
    except Exception as e:
        error = f"{type(e).__name__}: {e}"
        raise
    finally:
        ctx.write_frame(
            pd.DataFrame(ctx.checks, columns=list(CheckResult._fields)), "checks.csv"
        )
        failed = error is not None or not all(c.passed for c in ctx.checks)
        status = FAILED if failed else PASSED
        write_manifest(config.out_dir, config, ctx.checks, ctx.files, status, error)

    return RunReport(
        checks=list(ctx.checks), files=sorted(set(ctx.files)), status=status
    )
