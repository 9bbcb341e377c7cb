"""Grid discretization of objectives, brute-force minimizer oracle and the
critical elevation constant via bottleneck (minimax) paths.

The elevation constant is twice the largest, over node pairs, of the lowest
barrier separating them, normalized by the endpoint values and the global
minimum.  On a grid it is computed exactly through the minimum-spanning-tree
characterization of bottleneck paths; `all_pairs_minimax` provides the
exhaustive dynamic-programming dual used to validate it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .manifolds import Circle, FlatTorus, Sphere, icosphere

# Safety factor applied to the grid elevation constant when recommending the
# schedule constant: the theorems need k strictly above c(U) and the grid
# value may underestimate the continuum one.
K_SAFETY_SCALE = 1.1
K_SAFETY_OFFSET = 0.1


@dataclass
class ScalarField:
    """Values of a function M -> R on a regular grid with wrap-around adjacency."""

    manifold: object
    nodes: np.ndarray        # (n, c) chart coordinates
    values: np.ndarray       # (n,)
    indptr: np.ndarray       # CSR adjacency
    indices: np.ndarray
    cell_volumes: np.ndarray  # (n,), sums to 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field: values must be finite")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def argmin(self) -> int:
        return int(np.argmin(self.values))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            coords = [f"x{i}" for i in range(self.nodes.shape[1])]
            w.writerow(coords + ["value"])
            for node, val in zip(self.nodes, self.values):
                w.writerow([f"{c:.17g}" for c in node] + [f"{val:.17g}"])


def _csr_from_pairs(n: int, pairs) -> tuple[np.ndarray, np.ndarray]:
    adj = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(adj[i])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i in range(n):
        indices[indptr[i] : indptr[i + 1]] = sorted(adj[i])
    return indptr, indices


def make_grid(manifold, resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build (nodes, indptr, indices, cell_volumes) for a manifold.

    Circle: `resolution` equally spaced nodes.  Torus: `resolution` nodes per
    axis.  Sphere: geodesic icosahedral mesh with at least `resolution`
    vertices (node count 10 * 4^k + 2).
    """
    if isinstance(manifold, Circle):
        n = resolution
        nodes = (np.arange(n) / n)[:, None]
        pairs = [(i, (i + 1) % n) for i in range(n)]
        indptr, indices = _csr_from_pairs(n, pairs)
        return nodes, indptr, indices, np.full(n, 1.0 / n)
    if isinstance(manifold, FlatTorus):
        d = manifold.dim
        axis = np.arange(resolution) / resolution
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        nodes = np.stack([ax.ravel() for ax in mesh], axis=1)
        n = nodes.shape[0]
        shape = (resolution,) * d
        idx = np.arange(n).reshape(shape)
        pairs = []
        for ax in range(d):
            rolled = np.roll(idx, -1, axis=ax)
            pairs.extend(zip(idx.ravel().tolist(), rolled.ravel().tolist()))
        indptr, indices = _csr_from_pairs(n, pairs)
        return nodes, indptr, indices, np.full(n, 1.0 / n)
    if isinstance(manifold, Sphere):
        subdiv = 0
        while 10 * 4**subdiv + 2 < resolution:
            subdiv += 1
        verts, faces, weights = icosphere(subdiv, manifold.radius)
        pairs = set()
        for (a, b, c) in faces:
            pairs.add((min(a, b), max(a, b)))
            pairs.add((min(b, c), max(b, c)))
            pairs.add((min(c, a), max(c, a)))
        indptr, indices = _csr_from_pairs(len(verts), pairs)
        return verts, indptr, indices, weights
    raise ConfigError(f"field: unsupported manifold {manifold!r}")


def evaluate_field(f, manifold, resolution: int, batch: bool = False) -> ScalarField:
    """Tabulate f on the grid; `batch=True` if f maps an (n, c) array to (n,)."""
    nodes, indptr, indices, vols = make_grid(manifold, resolution)
    if batch:
        values = np.asarray(f(nodes), dtype=float)
    else:
        values = np.array([f(pt) for pt in nodes], dtype=float)
    return ScalarField(manifold, nodes, values, indptr, indices, vols)


@dataclass
class MinimizerReport:
    """Near-optimal nodes clustered into basins plus the uniqueness gap."""

    q_nodes: np.ndarray            # nodes within gap_tol of the global minimum
    basins: list                   # Q components as node arrays, best first
    basin_values: np.ndarray       # minimum value per component
    gap: float                     # second-best distinct basin minus the best
    global_min: float
    argmin: int


def _components(members: np.ndarray, field: ScalarField) -> list:
    member_set = set(members.tolist())
    seen: set[int] = set()
    comps = []
    for start in members.tolist():
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        comp = []
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in field.neighbors(i):
                j = int(j)
                if j in member_set and j not in seen:
                    seen.add(j)
                    stack.append(j)
        comps.append(np.array(sorted(comp), dtype=np.int64))
    return comps


def local_minima(field: ScalarField) -> np.ndarray:
    """Nodes whose value does not exceed any neighbor's value."""
    neigh_min = np.minimum.reduceat(field.values[field.indices], field.indptr[:-1])
    return np.flatnonzero(field.values <= neigh_min)


def minimizers(field: ScalarField, gap_tol: float) -> MinimizerReport:
    """Cluster the sublevel set within gap_tol of the minimum into basins.

    The uniqueness gap is the value difference between the best and the
    second-best distinct basin.  When the sublevel set is one component the
    gap falls back to the lowest local minimum outside it (+inf if there is
    none): this keeps the gap finite and meaningful at tight tolerances,
    where only the winning basin survives the threshold.
    """
    vmin = float(field.values.min())
    members = np.flatnonzero(field.values <= vmin + gap_tol)
    comps = _components(members, field)
    comp_vals = np.array([field.values[c].min() for c in comps])
    order = np.argsort(comp_vals, kind="stable")
    comps = [comps[i] for i in order]
    comp_vals = comp_vals[order]
    if len(comps) >= 2:
        gap = float(comp_vals[1] - comp_vals[0])
    else:
        inside = set(members.tolist())
        outside = [i for i in local_minima(field).tolist() if i not in inside]
        gap = float(min(field.values[outside]) - vmin) if outside else math.inf
    return MinimizerReport(
        q_nodes=members,
        basins=comps,
        basin_values=comp_vals,
        gap=gap,
        global_min=vmin,
        argmin=field.argmin(),
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        self.parent[self.find(i)] = self.find(j)


@dataclass
class ElevationReport:
    """Critical elevation constant and the pair/path realizing it."""

    c_u: float
    argpair: tuple[int, int]
    barrier_path: list[int]
    global_min: float
    recommended_k: float = field(init=False)

    def __post_init__(self):
        self.recommended_k = K_SAFETY_SCALE * self.c_u + K_SAFETY_OFFSET

    def to_json(self, extra: dict | None = None) -> dict:
        out = {
            "c_u": self.c_u,
            "argpair": list(self.argpair),
            "barrier_path": [int(i) for i in self.barrier_path],
            "global_min": self.global_min,
            "recommended_k": self.recommended_k,
        }
        if extra:
            out.update(extra)
        return out


def _edge_list(field: ScalarField) -> np.ndarray:
    edges = []
    for i in range(field.n_nodes):
        for j in field.neighbors(i):
            if i < j:
                edges.append((i, int(j)))
    return np.array(edges, dtype=np.int64)


def elevation_constant(field: ScalarField) -> ElevationReport:
    """Exact grid elevation constant via Kruskal merges.

    With edge weight max(v_i, v_j), the bottleneck value between any two
    nodes merged by an edge of weight w is exactly w; the best pair for a
    merge is the pair of per-component argmins.  Path elevation uses node
    maxima, so c(U) = 2 * max over merges of
    (w - min_A - min_B + global_min), floored at 0 by the diagonal pairs.
    """
    v = field.values
    vmin = float(v.min())
    edges = _edge_list(field)
    w = np.maximum(v[edges[:, 0]], v[edges[:, 1]])
    order = np.argsort(w, kind="stable")

    uf = _UnionFind(field.n_nodes)
    comp_min_node = list(range(field.n_nodes))
    best_expr = 0.0
    best_pair = (field.argmin(), field.argmin())
    mst_pairs = []
    for e in order:
        i, j = int(edges[e, 0]), int(edges[e, 1])
        ri, rj = uf.find(i), uf.find(j)
        if ri == rj:
            continue
        a, b = comp_min_node[ri], comp_min_node[rj]
        expr = float(w[e]) - float(v[a]) - float(v[b]) + vmin
        if expr > best_expr:
            best_expr = expr
            best_pair = (a, b)
        uf.union(ri, rj)
        root = uf.find(ri)
        comp_min_node[root] = a if v[a] <= v[b] else b
        mst_pairs.append((i, j))

    path = _tree_path(field.n_nodes, mst_pairs, best_pair[0], best_pair[1])
    return ElevationReport(
        c_u=2.0 * best_expr,
        argpair=best_pair,
        barrier_path=path,
        global_min=vmin,
    )


def _tree_path(n: int, pairs, src: int, dst: int) -> list[int]:
    adj = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    prev = {src: -1}
    stack = [src]
    while stack:
        i = stack.pop()
        if i == dst:
            break
        for j in adj[i]:
            if j not in prev:
                prev[j] = i
                stack.append(j)
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def all_pairs_minimax(field: ScalarField) -> np.ndarray:
    """Exhaustive bottleneck values by dynamic programming over node pairs.

    Floyd-Warshall-style recurrence B_ij = min(B_ij, max(B_ik, B_kj)) on the
    dense matrix; the independent oracle for the MST route.  O(n^3) - keep n
    at a few hundred.
    """
    n = field.n_nodes
    v = field.values
    big = math.inf
    B = np.full((n, n), big)
    np.fill_diagonal(B, v)
    for i in range(n):
        for j in field.neighbors(i):
            B[i, j] = max(v[i], v[int(j)])
    for k in range(n):
        np.minimum(B, np.maximum(B[:, k][:, None], B[k, :][None, :]), out=B)
    return B


def elevation_bruteforce(field: ScalarField) -> float:
    """c(U) from the exhaustive all-pairs bottleneck table.

    The expression is evaluated in the same operation order as in
    `elevation_constant` so the two routes agree exactly in floats.
    """
    B = all_pairs_minimax(field)
    v = field.values
    vmin = float(v.min())
    expr = B - v[:, None] - v[None, :] + vmin
    return 2.0 * float(max(0.0, expr.max()))


def gibbs_mass(field: ScalarField, beta: float, node_mask) -> float:
    """Mass of exp(-2 beta U) restricted to `node_mask` (bool array or indices)."""
    if beta < 0.0:
        raise ConfigError(f"gibbs_mass: beta must be >= 0, got {beta}")
    if isinstance(node_mask, (set, frozenset)):
        node_mask = np.array(sorted(node_mask), dtype=np.int64)
    v = field.values
    w = field.cell_volumes * np.exp(-2.0 * beta * (v - v.min()))
    mask = np.zeros(field.n_nodes, dtype=bool)
    mask[node_mask] = True
    return float(w[mask].sum() / w.sum())


def nodes_within(field: ScalarField, center, radius: float) -> np.ndarray:
    """Boolean mask of grid nodes within geodesic distance `radius` of center."""
    d = field.manifold.dist_many(field.nodes, np.asarray(center, dtype=float))
    return d <= radius


def elevation_report_to_file(report: ElevationReport, path, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(extra), fh, indent=2, sort_keys=True)
        fh.write("\n")
