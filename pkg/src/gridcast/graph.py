"""Static power-grid topology and the derived structures the layers consume.

A grid is a set of named nodes (states) with renewable potentials and
coordinates, joined by undirected transmission lines carrying physical
attributes.  Lines are expanded to two directed edges so message passing is
direction-aware; every node additionally gets a self-loop with neutral
attributes (a perfect zero-length line to itself).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GraphLoadError, SchemaError

NODE_COLUMNS = ["name", "pv_potential", "onshore_wind_potential",
                "offshore_wind_potential", "longitude", "latitude"]
EDGE_COLUMNS = ["source", "target", "capacity_mw", "efficiency", "length_km", "carrier"]

# Raw attribute values assigned to the synthetic self-loop "line": lossless,
# zero-length, zero-capacity, no carrier class.
SELF_LOOP_CAPACITY = 0.0
SELF_LOOP_EFFICIENCY = 1.0
SELF_LOOP_LENGTH = 0.0


@dataclass(frozen=True)
class NodeRecord:
    name: str
    pv_potential: float
    onshore_wind_potential: float
    offshore_wind_potential: float
    longitude: float
    latitude: float

    def feature_row(self) -> list[float]:
        return [self.pv_potential, self.onshore_wind_potential,
                self.offshore_wind_potential, self.longitude, self.latitude]


@dataclass(frozen=True)
class EdgeRecord:
    source: str
    target: str
    capacity: float
    efficiency: float
    length: float
    carrier: str


@dataclass(frozen=True)
class PowerGraph:
    """Validated grid topology; immutable once constructed."""

    nodes: tuple[NodeRecord, ...]
    edges: tuple[EdgeRecord, ...]
    node_index: dict[str, int] = field(hash=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_lines(self) -> int:
        return len(self.edges)

    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def directed_edges(self) -> list[tuple[int, int, int]]:
        """(source, target, line) index triples; each line appears both ways."""
        out = []
        for li, e in enumerate(self.edges):
            s, t = self.node_index[e.source], self.node_index[e.target]
            out.append((s, t, li))
            out.append((t, s, li))
        return out

    def node_feature_matrix(self) -> np.ndarray:
        return np.array([n.feature_row() for n in self.nodes], dtype=np.float64)


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Flat directed-edge list with self-loops appended.

    ``segment_of[e]`` is the destination node of entry ``e`` and doubles as
    the softmax segment id; ``src[e]`` is the message source; ``attr_row[e]``
    indexes the matching row of the encoded edge-attribute matrix.
    """

    src: np.ndarray
    segment_of: np.ndarray
    attr_row: np.ndarray
    n_nodes: int

    @property
    def n_entries(self) -> int:
        return len(self.src)

    def segment_sizes(self) -> np.ndarray:
        return np.bincount(self.segment_of, minlength=self.n_nodes)


def build_graph(nodes: list[NodeRecord], edges: list[EdgeRecord]) -> PowerGraph:
    """Validate records and assemble a PowerGraph."""
    index: dict[str, int] = {}
    for row, node in enumerate(nodes):
        if node.name in index:
            raise GraphLoadError(f"nodes row {row}: duplicate node name {node.name!r}")
        if not -90.0 <= node.latitude <= 90.0:
            raise GraphLoadError(f"nodes row {row}: latitude {node.latitude} outside [-90, 90]")
        if not -180.0 <= node.longitude <= 180.0:
            raise GraphLoadError(f"nodes row {row}: longitude {node.longitude} outside [-180, 180]")
        for attr in ("pv_potential", "onshore_wind_potential", "offshore_wind_potential"):
            if getattr(node, attr) < 0:
                raise GraphLoadError(f"nodes row {row}: {attr} must be >= 0")
        index[node.name] = row
    seen_pairs: set[tuple[str, str]] = set()
    for row, edge in enumerate(edges):
        for endpoint in (edge.source, edge.target):
            if endpoint not in index:
                raise GraphLoadError(f"edges row {row}: unknown endpoint {endpoint!r}")
        if edge.source == edge.target:
            raise GraphLoadError(f"edges row {row}: line endpoints must differ")
        pair = tuple(sorted((edge.source, edge.target)))
        if pair in seen_pairs:
            raise GraphLoadError(f"edges row {row}: duplicate line {pair[0]}-{pair[1]}")
        seen_pairs.add(pair)
        if not 0.0 < edge.efficiency <= 1.0:
            raise GraphLoadError(f"edges row {row}: efficiency {edge.efficiency} outside (0, 1]")
        if edge.capacity < 0:
            raise GraphLoadError(f"edges row {row}: capacity must be >= 0")
        if edge.length < 0:
            raise GraphLoadError(f"edges row {row}: length must be >= 0")
    return PowerGraph(nodes=tuple(nodes), edges=tuple(edges), node_index=index)


def _read_table(path: Path, required: list[str]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
        return list(reader)


def load_graph(nodes_path: str | Path, edges_path: str | Path) -> PowerGraph:
    """Read the delimited node/edge tables and build a validated graph."""
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    nodes = []
    for row, rec in enumerate(_read_table(nodes_path, NODE_COLUMNS)):
        try:
            nodes.append(NodeRecord(
                name=rec["name"],
                pv_potential=float(rec["pv_potential"]),
                onshore_wind_potential=float(rec["onshore_wind_potential"]),
                offshore_wind_potential=float(rec["offshore_wind_potential"]),
                longitude=float(rec["longitude"]),
                latitude=float(rec["latitude"]),
            ))
        except ValueError as exc:
            raise GraphLoadError(f"nodes row {row}: {exc}") from exc
    edges = []
    for row, rec in enumerate(_read_table(edges_path, EDGE_COLUMNS)):
        try:
            edges.append(EdgeRecord(
                source=rec["source"],
                target=rec["target"],
                capacity=float(rec["capacity_mw"]),
                efficiency=float(rec["efficiency"]),
                length=float(rec["length_km"]),
                carrier=rec["carrier"],
            ))
        except ValueError as exc:
            raise GraphLoadError(f"edges row {row}: {exc}") from exc
    return build_graph(nodes, edges)


def save_graph(graph: PowerGraph, nodes_path: str | Path, edges_path: str | Path) -> None:
    with open(nodes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(NODE_COLUMNS)
        for n in graph.nodes:
            writer.writerow([n.name, repr(n.pv_potential), repr(n.onshore_wind_potential),
                             repr(n.offshore_wind_potential), repr(n.longitude), repr(n.latitude)])
    with open(edges_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_COLUMNS)
        for e in graph.edges:
            writer.writerow([e.source, e.target, repr(e.capacity), repr(e.efficiency),
                             repr(e.length), e.carrier])


def build_neighborhoods(graph: PowerGraph) -> NeighborhoodIndex:
    """One entry per directed edge plus one self-loop entry per node."""
    src, dst = [], []
    for s, t, _ in graph.directed_edges():
        src.append(s)
        dst.append(t)
    for i in range(graph.n_nodes):
        src.append(i)
        dst.append(i)
    n = len(src)
    return NeighborhoodIndex(
        src=np.asarray(src, dtype=np.intp),
        segment_of=np.asarray(dst, dtype=np.intp),
        attr_row=np.arange(n, dtype=np.intp),
        n_nodes=graph.n_nodes,
    )


def carrier_vocabulary(graph: PowerGraph) -> list[str]:
    return sorted({e.carrier for e in graph.edges})


def encode_edge_attrs(graph: PowerGraph) -> np.ndarray:
    """Per-entry attribute rows: [capacity, efficiency, length, one-hot carrier].

    Continuous columns are standardized to mean 0 / std 1 over the real
    directed edges only; the statistics are then applied to the self-loop
    rows so the synthetic loops cannot skew them.  A zero-variance column
    encodes to all zeros.  Row order matches ``build_neighborhoods``.
    """
    carriers = carrier_vocabulary(graph)
    carrier_pos = {c: i for i, c in enumerate(carriers)}
    d_cont = 3
    d_e = d_cont + len(carriers)
    directed = graph.directed_edges()
    n_real = len(directed)
    rows = np.zeros((n_real + graph.n_nodes, d_e))
    for k, (_, _, li) in enumerate(directed):
        e = graph.edges[li]
        rows[k, 0] = e.capacity
        rows[k, 1] = e.efficiency
        rows[k, 2] = e.length
        rows[k, d_cont + carrier_pos[e.carrier]] = 1.0
    loop_raw = [SELF_LOOP_CAPACITY, SELF_LOOP_EFFICIENCY, SELF_LOOP_LENGTH]
    for i in range(graph.n_nodes):
        rows[n_real + i, :d_cont] = loop_raw
    if n_real:
        mean = rows[:n_real, :d_cont].mean(axis=0)
        std = rows[:n_real, :d_cont].std(axis=0)
    else:
        mean = np.zeros(d_cont)
        std = np.zeros(d_cont)
    safe = np.where(std > 0, std, 1.0)
    rows[:, :d_cont] = (rows[:, :d_cont] - mean) / safe
    rows[:n_real, :d_cont][:, std == 0] = 0.0
    rows[n_real:, :d_cont][:, std == 0] = 0.0
    return rows


def normalized_adjacency(graph: PowerGraph) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops.

    With A the symmetric 0/1 line adjacency and D the degree matrix of
    A + I, returns D^{-1/2} (A + I) D^{-1/2}.
    """
    n = graph.n_nodes
    a = np.zeros((n, n))
    for s, t, _ in graph.directed_edges():
        a[s, t] = 1.0
    a_tilde = a + np.eye(n)
    deg = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]
