"""
Pullback attractor sections as point clouds, Hausdorff distances, the
noise-continuity sweep and the dynamically gradient structure checks.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx
import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from nrds.cocycle import DEFAULT_BLOWUP, ball_probes, integrate
from nrds.errors import DivergenceError, EmptyCloudError, NotAbsorbingError
from nrds.hyperbolic import spectral_projections
from nrds.lattice import box_lattice, lattice_edges

DEFAULT_MAX_DEPTH = 40
DEFAULT_MAX_POINTS = 200_000
CONNECTION_SCOPE = (
    "acyclic digraph of sampled connections between the given hyperbolic "
    "solutions; weaker than excluding homoclinic structures over all global "
    "solutions"
)


@dataclass(frozen=True)
class SetCloud:
    points: np.ndarray
    t_anchor: float
    eta: float
    pp_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.points) == 0:
            raise EmptyCloudError("A set cloud needs at least one point")

    @property
    def dim(self):
        return self.points.shape[1]

    def to_frame(self):
        columns = {
            "t_anchor": np.full(len(self.points), self.t_anchor),
            "eta": np.full(len(self.points), self.eta),
        }
        for i in range(self.dim):
            columns[f"y_{i + 1}"] = self.points[:, i]
        return pd.DataFrame(columns)


def _as_points(cloud):
    points = cloud.points if isinstance(cloud, SetCloud) else cloud
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise EmptyCloudError("Hausdorff distances need nonempty clouds")
    return points.reshape(len(points), -1)


def cluster_points(points, eps):
    """
    Greedy pruning so that no two kept points are within eps/2.

    Points far from the centroid are visited first so extremes survive; the
    result is sorted lexicographically.
    """
    points = _as_points(points)
    dim = points.shape[1]
    distance = np.linalg.norm(points - points.mean(axis=0), axis=1)
    keys = tuple(points[:, j] for j in reversed(range(dim))) + (-distance,)
    order = np.lexsort(keys)

    tree = cKDTree(points)
    removed = np.zeros(len(points), dtype=bool)
    kept = []
    for i in order:
        if removed[i]:
            continue
        kept.append(i)
        removed[tree.query_ball_point(points[i], 0.5 * eps)] = True

    pruned = points[kept]
    return pruned[np.lexsort(tuple(pruned[:, j] for j in reversed(range(dim))))]


def hausdorff_semidist(A, B):
    """sup over a in A of the distance from a to B."""
    return float(np.max(np.min(cdist(_as_points(A), _as_points(B)), axis=1)))


def hausdorff_dist(A, B):
    return max(hausdorff_semidist(A, B), hausdorff_semidist(B, A))


def _refine(initial, edges, evolve, eps, max_depth, max_points):
    """
    Evolve parameter points and bisect every edge whose images are more
    than eps apart.

    Args:
        initial: Parameter points (n, p)
        edges: Neighbour pairs of parameter points
        evolve: Map from a stack of parameter points to their images

    Returns:
        tuple: (images, truncated flag)
    """
    params = [np.asarray(initial, dtype=float)]
    images = [evolve(params[0])]
    all_params = params[0]
    all_images = images[0]
    truncated = False

    for _ in range(max_depth):
        if not edges:
            break
        a = np.array([e[0] for e in edges])
        b = np.array([e[1] for e in edges])
        split = np.linalg.norm(all_images[a] - all_images[b], axis=1) > eps
        if not split.any():
            break
        if len(all_params) + int(split.sum()) > max_points:
            truncated = True
            break
        a, b = a[split], b[split]
        midpoints = 0.5 * (all_params[a] + all_params[b])
        first = len(all_params)
        all_params = np.vstack([all_params, midpoints])
        all_images = np.vstack([all_images, evolve(midpoints)])
        new_ids = np.arange(first, first + len(midpoints))
        edges = list(zip(a, new_ids)) + list(zip(new_ids, b))
    else:
        truncated = bool(edges)

    return all_images, truncated


def check_absorbing(F, eta, pp, box, t_start, t_end, dt, n_per_axis=5):
    """
    Probe whether box absorbs: lattice points of the doubled box must enter
    box and stay there over the second half of [t_start, t_end].

    Raises:
        NotAbsorbingError: a probe is outside box late in the window or diverges
    """
    probes, _ = box_lattice(box.scaled(2.0), n_per_axis)
    try:
        trajectory = integrate(F, eta, pp, probes, t_start, t_end, dt)
    except DivergenceError as e:
        raise NotAbsorbingError(f"Probe from the doubled box diverged: {e}") from e
    late = trajectory.states[trajectory.times.size // 2 :]
    if not np.all(box.contains(late)):
        raise NotAbsorbingError(
            f"Trajectories from the doubled box do not settle inside {box} "
            f"by t = {trajectory.times[trajectory.times.size // 2]:.6g}"
        )


def _pullback_points(F, eta, pp, box, grid_n, T_back, t_anchor, eps, dt, caps):
    points, idx_to_id = box_lattice(box, grid_n)

    def evolve(initial):
        return integrate(F, eta, pp, initial, t_anchor - T_back, t_anchor, dt).final

    images, truncated = _refine(points, lattice_edges(idx_to_id), evolve, eps, *caps)
    return cluster_points(images, eps), truncated


def pullback_cloud(
    F,
    eta,
    pp,
    box,
    T_back,
    grid_n,
    t_anchor,
    eps_cluster,
    dt,
    max_doublings=8,
    check_box=True,
    max_depth=DEFAULT_MAX_DEPTH,
    max_points=DEFAULT_MAX_POINTS,
):
    """
    Pullback image of a box lattice at t_anchor, clustered at eps_cluster.

    The lattice is evolved from t_anchor - T_back, edges whose images
    separate by more than eps_cluster are bisected, and T_back is doubled
    until the clouds for T_back and 2 T_back are within eps_cluster in
    Hausdorff distance or max_doublings is reached.

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point
        box: Absorbing box of initial states
        T_back: Initial pullback time
        grid_n: Lattice points per axis
        t_anchor: Section time relative to pp.tau
        eps_cluster: Cloud resolution
        dt: Integration step
        max_doublings: Cap on doublings of T_back
        check_box: Run the absorbing probe first

    Returns:
        SetCloud: the section, with the convergence flag in meta

    Raises:
        NotAbsorbingError: box fails the absorbing probe
    """
    if check_box:
        check_absorbing(F, eta, pp, box, t_anchor - T_back, t_anchor, dt)

    caps = (max_depth, max_points)
    current, truncated = _pullback_points(
        F, eta, pp, box, grid_n, T_back, t_anchor, eps_cluster, dt, caps
    )
    converged = False
    doublings = 0
    distance = float("nan")
    while True:
        longer, longer_truncated = _pullback_points(
            F, eta, pp, box, grid_n, 2.0 * T_back, t_anchor, eps_cluster, dt, caps
        )
        distance = hausdorff_dist(current, longer)
        if distance <= eps_cluster:
            converged = True
            break
        if doublings >= max_doublings:
            break
        T_back *= 2.0
        current, truncated = longer, longer_truncated
        doublings += 1

    seed = getattr(getattr(pp, "path", None), "seed", "")
    return SetCloud(
        points=current,
        t_anchor=float(t_anchor),
        eta=float(eta),
        pp_id=f"seed={seed}",
        meta={
            "T_back": T_back,
            "grid_n": grid_n,
            "eps_cluster": eps_cluster,
            "converged": converged,
            "doublings": doublings,
            "doubling_distance": distance,
            "truncated": truncated,
        },
    )


class SweepResult(NamedTuple):
    table: pd.DataFrame
    maxima: pd.DataFrame
    clouds: dict


def continuity_sweep(F, pp, etas, t_anchors, params):
    """
    Hausdorff semidistances between perturbed sections and the unperturbed one.

    The eta = 0 cloud at the first anchor is the reference A0 (the unperturbed
    field is autonomous).

    Args:
        F: Vector field family
        pp: Driver point
        etas: Noise amplitudes
        t_anchors: Section times
        params: Keyword arguments of pullback_cloud besides F, eta, pp, t_anchor

    Returns:
        SweepResult: rows (eta, t_anchor, upper, lower, dH), per-eta maxima and
            the clouds keyed by (eta, t_anchor)
    """
    reference = pullback_cloud(F, 0.0, pp, t_anchor=t_anchors[0], **params)
    clouds = {}
    rows = []
    for eta in etas:
        for t_anchor in t_anchors:
            if eta == 0.0 and t_anchor == t_anchors[0]:
                cloud = reference
            else:
                cloud = pullback_cloud(F, eta, pp, t_anchor=t_anchor, **params)
            clouds[(eta, t_anchor)] = cloud
            upper = hausdorff_semidist(cloud, reference)
            lower = hausdorff_semidist(reference, cloud)
            rows.append(
                {
                    "eta": eta,
                    "t_anchor": t_anchor,
                    "upper": upper,
                    "lower": lower,
                    "dH": max(upper, lower),
                }
            )
    table = pd.DataFrame(rows, columns=["eta", "t_anchor", "upper", "lower", "dH"])
    maxima = (
        table.groupby("eta", sort=False)[["upper", "lower", "dH"]].max().reset_index()
    )
    return SweepResult(table=table, maxima=maxima, clouds=clouds)


def decreasing_within(values, rel_tol=0.2, abs_tol=0.0):
    """True when each value is at most (1 + rel_tol) x previous + abs_tol."""
    values = list(values)
    return all(b <= (1.0 + rel_tol) * a + abs_tol for a, b in zip(values, values[1:]))


def invariance_defect(F, eta, pp, cloud_s, cloud_t, dt):
    """Hausdorff distance between the flowed section at s and the section at t."""
    if cloud_t.t_anchor <= cloud_s.t_anchor:
        raise ValueError("Invariance defect needs cloud_t later than cloud_s")
    image = integrate(
        F, eta, pp, cloud_s.points, cloud_s.t_anchor, cloud_t.t_anchor, dt
    ).final
    return hausdorff_dist(image, cloud_t.points)


class UnionResidual(NamedTuple):
    residual: float
    reverse: float

    @property
    def hausdorff(self):
        return max(self.residual, self.reverse)


def unstable_union_residual(A, unstable_clouds):
    """
    Semidistance from the attractor cloud to the union of unstable clouds,
    with the reverse semidistance.
    """
    if not unstable_clouds:
        raise EmptyCloudError("Union of unstable clouds is empty")
    union = np.vstack([_as_points(cloud) for cloud in unstable_clouds])
    return UnionResidual(
        residual=hausdorff_semidist(A, union), reverse=hausdorff_semidist(union, A)
    )


def unstable_cloud(
    F,
    eta,
    gm,
    t_anchor,
    eps_cluster,
    anchor_index=0,
    max_depth=DEFAULT_MAX_DEPTH,
    max_points=DEFAULT_MAX_POINTS,
):
    """
    Section at t_anchor of the unstable set of a trace: graph points at the
    anchor are flowed forward, edges between neighbouring nodes are bisected
    until images are eps_cluster dense.
    """
    trace = gm.center
    s = float(gm.anchors[anchor_index])
    if t_anchor < s:
        raise ValueError(f"Section time {t_anchor} precedes the graph anchor {s}")

    if gm.unstable_dim == 0:
        points = integrate(
            F, eta, trace.pp, trace.state_at(s)[None, :], s, t_anchor, trace.dt
        ).final
        return SetCloud(points=points, t_anchor=float(t_anchor), eta=float(eta))

    def evolve(coords):
        start = gm.graph_points(anchor_index, coords)
        return integrate(F, eta, trace.pp, start, s, t_anchor, trace.dt).final

    images, truncated = _refine(
        gm.nodes,
        lattice_edges(gm.node_index),
        evolve,
        eps_cluster,
        max_depth,
        max_points,
    )
    return SetCloud(
        points=cluster_points(images, eps_cluster),
        t_anchor=float(t_anchor),
        eta=float(eta),
        meta={"anchor": s, "truncated": truncated},
    )


def dissipation_margin(F, eta, pp, radius, times, n_dirs=64, seed=0):
    """max of rhs(t, x) . x over the sphere |x| = radius and the given times."""
    if F.dim == 1:
        sphere = np.array([[radius], [-radius]])
    else:
        sphere = ball_probes(F.dim, 1.0, n_dirs, seed)
        sphere = radius * sphere / np.linalg.norm(sphere, axis=1, keepdims=True)
        axes = radius * np.vstack([np.eye(F.dim), -np.eye(F.dim)])
        sphere = np.vstack([sphere, axes])
    margin = -np.inf
    for t in times:
        radial = np.sum(F.rhs(eta, t, pp, sphere) * sphere, axis=1)
        margin = max(margin, float(np.max(radial)))
    return margin


@dataclass
class ConnectionGraph:
    """
    Directed connections between hyperbolic solutions found by probing.

    `success_rate` is the share of probes whose both limits matched a trace;
    `homoclinic` lists traces a probe returned to.
    """

    nodes: list
    edges: set
    witnesses: dict
    unclassified: list
    homoclinic: list
    success_rate: float
    graph: nx.DiGraph = field(repr=False)

    @property
    def acyclic(self):
        return nx.is_directed_acyclic_graph(self.graph) and not self.homoclinic

    @property
    def gradient_like(self):
        return self.acyclic and self.success_rate == 1.0

    def to_json(self, witness_files=None):
        witness_files = witness_files or {}
        return {
            "nodes": list(self.nodes),
            "edges": [list(edge) for edge in sorted(self.edges)],
            "acyclic": self.acyclic,
            "success_rate": self.success_rate,
            "homoclinic": sorted(self.homoclinic),
            "unclassified": len(self.unclassified),
            "scope": CONNECTION_SCOPE,
            "witnesses": {
                f"{i}->{j}": witness_files.get((i, j), "")
                for i, j in sorted(self.edges)
            },
        }


def _nearest_trace(traces, times, states, eps):
    """Index of the single trace within eps of every given state, else None."""
    for index, trace in enumerate(traces):
        centre = np.array([trace.state_at(t) for t in times])
        if np.all(np.linalg.norm(states - centre, axis=1) <= eps):
            return index
    return None


def classify_connections(
    F,
    eta,
    pp,
    traces,
    eps,
    n_probe,
    t_start=None,
    t_end=None,
    window_share=0.1,
):
    """
    Probe connections between hyperbolic solutions.

    From each trace, probes start at distance eps/4 along unstable directions
    at t_start and are integrated to t_end. The alpha-limit is the trace the
    probe starts next to; the omega-limit is the trace within eps of the probe
    over the trailing window.

    Args:
        F: Vector field family
        eta: Noise amplitude
        pp: Driver point the traces were computed on
        traces: Hyperbolic solution traces on a common grid
        eps: Matching radius
        n_probe: Probes per trace with unstable directions
        t_start: Probe start, default the middle of the first half of the window
        t_end: Probe end, default the end of the window

    Returns:
        ConnectionGraph: edges, witnesses and classification diagnostics
    """
    reference = traces[0]
    dt = reference.dt
    if t_start is None:
        t_start = reference.times[0] + dt * round(
            0.25 * (reference.times[-1] - reference.times[0]) / dt
        )
    if t_end is None:
        t_end = float(reference.times[-1])

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(traces)))
    edges = set()
    witnesses = {}
    unclassified = []
    homoclinic = set()
    total = 0

    for source, trace in enumerate(traces):
        basis = spectral_projections(trace.A)[2]
        k = basis.shape[1]
        if k == 0:
            continue
        directions = np.vstack([basis.T, -basis.T])
        if n_probe > 2 * k:
            extra = ball_probes(k, 1.0, n_probe - 2 * k, seed=source)
            extra /= np.linalg.norm(extra, axis=1, keepdims=True)
            directions = np.vstack([directions, extra @ basis.T])
        starts = trace.state_at(t_start) + 0.25 * eps * directions

        trajectory = integrate(F, eta, pp, starts, t_start, t_end, dt, DEFAULT_BLOWUP)
        tail = max(2, int(round(window_share * trajectory.times.size)))
        tail_times = trajectory.times[-tail:]
        for p in range(starts.shape[0]):
            total += 1
            tail_states = trajectory.states[-tail:, p]
            target = _nearest_trace(traces, tail_times, tail_states, eps)
            if target is None:
                unclassified.append((source, p))
                continue
            if target == source:
                homoclinic.add(source)
                continue
            if (source, target) not in edges:
                edges.add((source, target))
                graph.add_edge(source, target)
                witnesses[(source, target)] = pd.DataFrame(
                    {"t": trajectory.times}
                    | {
                        f"y_{i + 1}": trajectory.states[:, p, i]
                        for i in range(F.dim)
                    }
                )

    success = 1.0 if total == 0 else (total - len(unclassified)) / total
    return ConnectionGraph(
        nodes=list(range(len(traces))),
        edges=edges,
        witnesses=witnesses,
        unclassified=unclassified,
        homoclinic=sorted(homoclinic),
        success_rate=success,
        graph=graph,
    )
