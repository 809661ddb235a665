"""Graph objects behind the network recursions.

All node indices are 0-based internally. External labels (tickers) are kept on
the topology so that 1-indexed examples and labelled CSV inputs round-trip.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NetworkTopology",
    "StageNeighborhoods",
    "stage_neighborhoods",
    "stage_adjacency",
    "connection_weights",
    "masked_weights",
    "stage_masks",
    "read_edge_csv",
    "read_adjacency_csv",
    "write_edge_csv",
    "path_graph",
    "from_edges",
    "simulation_topology",
    "SIMULATION_EDGES",
]


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected, unweighted, loop-free graph on ``d`` nodes.

    Parameters
    ----------
    d : int
        Number of nodes.
    edges : iterable of pairs
        Unordered node pairs. Duplicates and either orientation are accepted;
        pairs are stored once as ``(min, max)``.
    labels : sequence of str, optional
        External node names. Defaults to ``"0" .. "d-1"``.
    """

    d: int
    edges: frozenset = field(default_factory=frozenset)
    labels: tuple = ()

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"node count must be a positive integer, got {self.d!r}")
        normalized = set()
        for pair in self.edges:
            i, j = (int(v) for v in pair)
            if i == j:
                raise ValueError(f"self-loop on node {i} is not allowed")
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise ValueError(f"edge ({i}, {j}) has an endpoint outside 0..{self.d - 1}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "edges", frozenset(normalized))
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(self.d))
        if len(labels) != self.d:
            raise ValueError(f"expected {self.d} labels, got {len(labels)}")
        if len(set(labels)) != self.d:
            raise ValueError("node labels must be unique")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_adjacency(cls, A, labels: Sequence[str] = ()) -> "NetworkTopology":
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if not np.array_equal(A != 0, (A != 0).T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency matrix must have a zero diagonal")
        rows, cols = np.nonzero(np.triu(A, 1))
        return cls(A.shape[0], frozenset(zip(rows.tolist(), cols.tolist())), tuple(labels))

    @classmethod
    def edgeless(cls, d: int) -> "NetworkTopology":
        return cls(d, frozenset())

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.d, self.d), dtype=np.int64)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    def neighbours(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.d)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def index_of(self, label: str) -> int:
        return self.labels.index(str(label))


@dataclass(frozen=True)
class StageNeighborhoods:
    """Shortest-path stage sets ``N_r(i)`` for ``r = 1 .. max_stage``.

    ``sets[r - 1][i]`` is the frozenset of nodes at distance exactly ``r``
    from node ``i``. ``distance`` holds the BFS distances (``-1`` when
    unreachable or beyond ``max_stage``).
    """

    d: int
    max_stage: int
    sets: tuple
    distance: np.ndarray

    def stage(self, r: int) -> tuple:
        if not 1 <= r <= self.max_stage:
            raise ValueError(f"stage {r} outside computed range 1..{self.max_stage}")
        return self.sets[r - 1]


def _bfs_distances(nbrs: list[list[int]], source: int, cutoff: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] >= cutoff:
            continue
        for v in nbrs[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def stage_neighborhoods(topology: NetworkTopology, r_max: int | None = None) -> StageNeighborhoods:
    """Breadth-first r-stage neighbourhoods of every node.

    Parameters
    ----------
    topology : NetworkTopology
    r_max : int, optional
        Largest stage to record. ``None`` records every reachable stage,
        i.e. ``max(1, d - 1)``.

    Returns
    -------
    StageNeighborhoods
        Nodes further than ``r_max`` away (or unreachable) appear in no set.
    """
    d = topology.d
    if r_max is None:
        r_max = max(1, d - 1)
    if r_max < 1:
        raise ValueError("r_max must be at least 1")
    nbrs = topology.neighbours()
    distance = np.full((d, d), -1, dtype=np.int64)
    buckets = [[set() for _ in range(d)] for _ in range(r_max)]
    for i in range(d):
        for j, r in _bfs_distances(nbrs, i, r_max).items():
            distance[i, j] = r
            if r >= 1:
                buckets[r - 1][i].add(j)
    sets = tuple(tuple(frozenset(s) for s in stage) for stage in buckets)
    distance.setflags(write=False)
    return StageNeighborhoods(d=d, max_stage=r_max, sets=sets, distance=distance)


def stage_adjacency(nbhd: StageNeighborhoods, r: int) -> np.ndarray:
    """The {0, 1} matrix ``S_r`` with ``S_r[i, j] = 1`` iff ``j`` is in ``N_r(i)``."""
    S = np.zeros((nbhd.d, nbhd.d))
    for i, members in enumerate(nbhd.stage(r)):
        for j in members:
            S[i, j] = 1.0
    return S


def connection_weights(nbhd: StageNeighborhoods) -> np.ndarray:
    """Connection weights ``w_ij = 1 / |N_r(i)|`` with ``r`` the stage of ``j``.

    Pairs that are unreachable within ``max_stage`` get weight 0. The matrix
    is generally asymmetric.
    """
    W = np.zeros((nbhd.d, nbhd.d))
    for stage in nbhd.sets:
        for i, members in enumerate(stage):
            if members:
                idx = sorted(members)
                W[i, idx] = 1.0 / len(members)
    return W


def masked_weights(W: np.ndarray, S_r: np.ndarray) -> np.ndarray:
    """Hadamard product ``W * S_r``; each row sums to 1 or is all zero."""
    W = np.asarray(W, dtype=float)
    S_r = np.asarray(S_r, dtype=float)
    if W.shape != S_r.shape or W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"dimension mismatch: W {W.shape} vs S_r {S_r.shape}")
    return W * S_r


def stage_masks(topology: NetworkTopology, r_max: int) -> np.ndarray:
    """Stack of masked weight matrices, ``masks[r - 1] = W * S_r``.

    ``r_max = 0`` returns an empty ``(0, d, d)`` stack.
    """
    d = topology.d
    if r_max < 1:
        return np.zeros((0, d, d))
    nbhd = stage_neighborhoods(topology, r_max)
    W = connection_weights(nbhd)
    masks = np.stack([masked_weights(W, stage_adjacency(nbhd, r)) for r in range(1, r_max + 1)])
    return np.ascontiguousarray(masks)


# --- CSV interfaces -------------------------------------------------------


def _resolve(token: str, labels: list[str], lookup: dict[str, int]) -> int:
    token = token.strip()
    if token not in lookup:
        lookup[token] = len(labels)
        labels.append(token)
    return lookup[token]


def read_edge_csv(path, labels: Sequence[str] | None = None, d: int | None = None) -> NetworkTopology:
    """Read a ``src,dst`` edge list.

    Endpoints are matched against ``labels`` when given. Otherwise, if every
    endpoint is an integer, they are node indices (``d`` defaults to the
    largest index + 1); if not, labels are assigned in order of appearance.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["src", "dst"]:
            raise ValueError(f"{path}: edge list must have a 'src,dst' header")
        rows = [(row["src"].strip(), row["dst"].strip()) for row in reader]

    if labels is not None:
        lookup = {str(lab): k for k, lab in enumerate(labels)}
        try:
            edges = [(lookup[a], lookup[b]) for a, b in rows]
        except KeyError as exc:
            raise ValueError(f"{path}: unknown node label {exc.args[0]!r}") from None
        return NetworkTopology(len(labels), frozenset(edges), tuple(labels))

    if all(a.lstrip("-").isdigit() and b.lstrip("-").isdigit() for a, b in rows):
        edges = [(int(a), int(b)) for a, b in rows]
        n = max([max(e) for e in edges], default=-1) + 1
        return NetworkTopology(d if d is not None else max(n, 1), frozenset(edges))

    found: list[str] = []
    lookup: dict[str, int] = {}
    edges = [(_resolve(a, found, lookup), _resolve(b, found, lookup)) for a, b in rows]
    return NetworkTopology(len(found), frozenset(edges), tuple(found))


def read_adjacency_csv(path) -> NetworkTopology:
    """Read a square adjacency matrix whose header row holds node labels.

    A leading label column (same labels as the header) is tolerated.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    header, body = rows[0], rows[1:]
    if header and header[0].strip() in ("", "node"):
        header = header[1:]
    if body and len(body[0]) == len(header) + 1:
        body = [r[1:] for r in body]
    A = np.array([[float(x) for x in r] for r in body])
    return NetworkTopology.from_adjacency(A, tuple(h.strip() for h in header))


def write_edge_csv(path, topology: NetworkTopology, use_labels: bool = True) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst"])
        for i, j in sorted(topology.edges):
            if use_labels:
                writer.writerow([topology.labels[i], topology.labels[j]])
            else:
                writer.writerow([i, j])


def path_graph(d: int) -> NetworkTopology:
    return NetworkTopology(d, frozenset((i, i + 1) for i in range(d - 1)))


def from_edges(d: int, edges: Iterable, labels: Sequence[str] = ()) -> NetworkTopology:
    return NetworkTopology(d, frozenset(tuple(e) for e in edges), tuple(labels))


# Five-node graph used for the simulation studies (edge set is a configurable
# default; any connected 5-node graph may be substituted).
SIMULATION_EDGES = ((0, 1), (0, 2), (1, 3), (2, 3), (3, 4))


def simulation_topology() -> NetworkTopology:
    return from_edges(5, SIMULATION_EDGES)
