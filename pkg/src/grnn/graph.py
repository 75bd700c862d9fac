"""Road networks, linkage networks and the propagation matrix.

A road network is the usual directed graph of intersections and road
segments.  Its linkage network is the line graph: every segment becomes a
node, and a directed edge ``i -> j`` exists iff segment ``i`` ends at the
intersection where segment ``j`` starts.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from grnn.errors import ParameterError, ValidationError


@dataclass(frozen=True)
class Vertex:
    vertex_id: str
    lng: float
    lat: float


@dataclass(frozen=True)
class Segment:
    segment_id: str
    init_vertex: str
    term_vertex: str


@dataclass(frozen=True)
class RoadNetwork:
    """Intersections plus directed road segments.

    Coordinates are carried for export only; nothing downstream reads them.
    """

    vertices: tuple[Vertex, ...]
    segments: tuple[Segment, ...]

    def __post_init__(self):
        seen = set()
        for v in self.vertices:
            if v.vertex_id in seen:
                raise ValidationError(f"duplicate vertex id {v.vertex_id!r}")
            seen.add(v.vertex_id)
        seg_ids = set()
        for s in self.segments:
            if s.segment_id in seg_ids:
                raise ValidationError(f"duplicate segment id {s.segment_id!r}")
            seg_ids.add(s.segment_id)
            for end in (s.init_vertex, s.term_vertex):
                if end not in seen:
                    raise ValidationError(
                        f"segment {s.segment_id!r} references unknown vertex {end!r}"
                    )

    def in_out_degrees(self) -> dict[str, tuple[int, int]]:
        deg = {v.vertex_id: [0, 0] for v in self.vertices}
        for s in self.segments:
            deg[s.term_vertex][0] += 1
            deg[s.init_vertex][1] += 1
        return {k: (i, o) for k, (i, o) in deg.items()}

    def expected_linkages(self) -> int:
        """Sum over intersections of indegree * outdegree."""
        return sum(i * o for i, o in self.in_out_degrees().values())


@dataclass(frozen=True)
class LinkageNetwork:
    nodes: tuple[str, ...]
    adjacency: np.ndarray
    node_index: Mapping[str, int] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def nnz(self) -> int:
        return int(self.adjacency.sum())

    def linkages(self) -> list[tuple[str, str]]:
        """Directed ``(from, to)`` pairs in row-major adjacency order."""
        rows, cols = np.nonzero(self.adjacency)
        return [(self.nodes[i], self.nodes[j]) for i, j in zip(rows, cols)]

    def upstream(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, j])


@dataclass(frozen=True)
class PropagationMatrix:
    """``alpha * A + I``, the per-step state mixing operator."""

    values: np.ndarray
    alpha: float

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def sparse(self) -> sp.csc_matrix:
        return sparse_view(self)


def load_road_network(
    vertices: Iterable[Mapping[str, object]],
    edges: Iterable[Mapping[str, object]],
) -> RoadNetwork:
    """Build a validated :class:`RoadNetwork` from node/edge records.

    Records are mappings with the keys of the node file
    (``vertex_id, lng, lat``) and the edge file
    (``segment_id, init_vertex, term_vertex``).
    """
    try:
        vs = tuple(
            Vertex(str(r["vertex_id"]), float(r["lng"]), float(r["lat"]))
            for r in vertices
        )
        es = tuple(
            Segment(str(r["segment_id"]), str(r["init_vertex"]), str(r["term_vertex"]))
            for r in edges
        )
    except KeyError as exc:
        raise ValidationError(f"record missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed record: {exc}") from None
    return RoadNetwork(vs, es)


def _read_records(path: str | Path, header: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != header:
        raise ValidationError(
            f"{path}: expected header {','.join(header)}, got {reader.fieldnames}"
        )
    return list(reader)


def read_road_network(nodes_path: str | Path, edges_path: str | Path) -> RoadNetwork:
    return load_road_network(
        _read_records(nodes_path, ("vertex_id", "lng", "lat")),
        _read_records(edges_path, ("segment_id", "init_vertex", "term_vertex")),
    )


def write_road_network(net: RoadNetwork, nodes_path: str | Path, edges_path: str | Path):
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex_id", "lng", "lat"])
        for v in net.vertices:
            w.writerow([v.vertex_id, repr(v.lng), repr(v.lat)])
    with open(edges_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_id", "init_vertex", "term_vertex"])
        for s in net.segments:
            w.writerow([s.segment_id, s.init_vertex, s.term_vertex])


def transform(net: RoadNetwork) -> LinkageNetwork:
    """Line-graph transform of a road network.

    Segments are grouped by their initial intersection, then each segment
    links to every segment leaving its terminal intersection.  Node order
    follows the input segment order.
    """
    if not net.segments:
        raise ValidationError("road network has no segments; linkage network would be empty")
    nodes = tuple(s.segment_id for s in net.segments)
    index = {sid: i for i, sid in enumerate(nodes)}
    leaving: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(net.segments):
        leaving[s.init_vertex].append(i)
    n = len(nodes)
    adj = np.zeros((n, n), dtype=np.int8)
    for i, s in enumerate(net.segments):
        adj[i, leaving.get(s.term_vertex, [])] = 1
    adj.setflags(write=False)
    return LinkageNetwork(nodes, adj, index)


def build_propagation_matrix(link: LinkageNetwork, alpha: float) -> PropagationMatrix:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise ParameterError(f"alpha must be a finite value >= 0, got {alpha}")
    values = alpha * link.adjacency.astype(np.float64) + np.eye(link.n)
    values.setflags(write=False)
    return PropagationMatrix(values, alpha)


def sparse_view(pm: PropagationMatrix) -> sp.csc_matrix:
    """Column-compressed copy of ``A'``; ``indices[indptr[j]:indptr[j+1]]``
    are the rows with a nonzero in column ``j``."""
    m = sp.csc_matrix(pm.values)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def column_nonzeros(m: sp.csc_matrix, j: int) -> list[tuple[int, float]]:
    lo, hi = m.indptr[j], m.indptr[j + 1]
    return [(int(i), float(v)) for i, v in zip(m.indices[lo:hi], m.data[lo:hi])]


def export_linkages(link: LinkageNetwork) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["from_segment", "to_segment"])
    w.writerows(link.linkages())
    return buf.getvalue()


# --- synthetic networks -----------------------------------------------------

def grid_road_network(rows: int, cols: int, spacing: float = 0.005) -> RoadNetwork:
    """Rectangular street grid with a two-way road between grid neighbours.

    Produces ``2 * (rows*(cols-1) + cols*(rows-1))`` segments.
    """
    if rows < 1 or cols < 1:
        raise ParameterError("grid needs at least one row and column")
    vs = []
    for r in range(rows):
        for c in range(cols):
            vs.append(Vertex(f"v{r}_{c}", 121.4 + c * spacing, 31.2 + r * spacing))
    es = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < rows and cc < cols:
                    a, b = f"v{r}_{c}", f"v{rr}_{cc}"
                    es.append(Segment(f"s{len(es)}", a, b))
                    es.append(Segment(f"s{len(es)}", b, a))
    return RoadNetwork(tuple(vs), tuple(es))


def chain_road_network(n_segments: int) -> RoadNetwork:
    """One-way corridor ``v0 -> v1 -> ... -> vn``."""
    if n_segments < 1:
        raise ParameterError("chain needs at least one segment")
    vs = tuple(Vertex(f"v{i}", 121.4 + 0.005 * i, 31.2) for i in range(n_segments + 1))
    es = tuple(Segment(f"s{i}", f"v{i}", f"v{i + 1}") for i in range(n_segments))
    return RoadNetwork(vs, es)


def random_road_network(
    n_vertices: int, n_segments: int, seed: int, allow_loops: bool = True
) -> RoadNetwork:
    """Random directed road network; parallel segments get distinct ids."""
    if n_vertices < 1 or n_segments < 0:
        raise ParameterError("need n_vertices >= 1 and n_segments >= 0")
    rng = np.random.default_rng(seed)
    vs = tuple(
        Vertex(f"v{i}", float(rng.uniform(121.0, 122.0)), float(rng.uniform(31.0, 32.0)))
        for i in range(n_vertices)
    )
    es = []
    while len(es) < n_segments:
        a, b = rng.integers(n_vertices, size=2)
        if a == b and not allow_loops:
            continue
        es.append(Segment(f"e{len(es)}", f"v{a}", f"v{b}"))
    return RoadNetwork(vs, tuple(es))


def ladder_road_network(columns: int, spacing: float = 0.005) -> RoadNetwork:
    """Two parallel one-way arterials joined by one-way cross streets.

    Cross street ``k`` (``1 <= k <= columns - 2``) alternates direction.  The
    network has no directed cycles and ``2 * (columns - 1) + columns - 2``
    segments; ``columns=8`` gives 20.
    """
    if columns < 2:
        raise ParameterError("ladder needs at least two columns")
    vs, es = [], []
    for row, lat in (("a", 31.2), ("b", 31.2 + spacing)):
        for c in range(columns):
            vs.append(Vertex(f"{row}{c}", 121.4 + c * spacing, lat))
    for row in ("a", "b"):
        for c in range(columns - 1):
            es.append(Segment(f"{row}{c}-{c + 1}", f"{row}{c}", f"{row}{c + 1}"))
    for c in range(1, columns - 1):
        src, dst = ("a", "b") if c % 2 else ("b", "a")
        es.append(Segment(f"x{c}", f"{src}{c}", f"{dst}{c}"))
    return RoadNetwork(tuple(vs), tuple(es))
