"""Hierarchical zoom graph: nodes are image regions, zooming adds grid children.

Node ids are dense and assigned in creation order, so the nodes of levels
``1..r`` always form a prefix of the node list. Regions are kept in
original-image coordinates and features are always cropped from the
original image.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .imageops import Region, crop_array, grid_split, resize_array
from .tensor import Tensor


@dataclass(frozen=True)
class ZoomNode:
    id: int
    level: int
    region: Region
    parent_id: int | None = None
    grid_index: int | None = None


@dataclass(frozen=True)
class ZoomDecision:
    """Whether to zoom into a frontier node; ``prob`` orders nodes under the cap."""

    node_id: int
    zoom: bool
    prob: float = 1.0


class ZoomGraph:
    def __init__(self, nodes, adjacency, current_level, grid=None):
        self.nodes = list(nodes)
        self.adjacency = adjacency
        self.current_level = current_level
        self.grid = grid
        # ids of nodes that have been expanded
        self.zoomed = set()

    @property
    def num_nodes(self):
        return len(self.nodes)

    def level_ids(self, level):
        return [n.id for n in self.nodes if n.level == level]

    def frontier(self):
        return self.level_ids(self.current_level)

    def prefix_size(self, level):
        """Number of nodes with level <= ``level`` (they occupy ids 0..k-1)."""
        return sum(1 for n in self.nodes if n.level <= level)

    def children(self, node_id):
        return [n.id for n in self.nodes if n.parent_id == node_id]

    def copy(self):
        g = ZoomGraph(self.nodes, self.adjacency.copy(), self.current_level, self.grid)
        g.zoomed = set(self.zoomed)
        return g

    def dump_lines(self, zoomed=None):
        """``node_id level x0 y0 w h parent_id zoomed_flag`` per node."""
        flags = self.zoomed if zoomed is None else zoomed
        lines = []
        for n in self.nodes:
            parent = -1 if n.parent_id is None else n.parent_id
            r = n.region
            lines.append(
                f"{n.id} {n.level} {r.x0} {r.y0} {r.width} {r.height} {parent} {int(n.id in flags)}"
            )
        return lines

    def __repr__(self):
        return f"ZoomGraph(nodes={self.num_nodes}, level={self.current_level})"


def init_graph(img):
    """Single root node covering the whole image; its zoom probability is 1."""
    height, width = img.shape if hasattr(img, "shape") else img
    root = ZoomNode(0, 1, Region(0, 0, width, height))
    return ZoomGraph([root], np.ones((1, 1), dtype=np.int8), 1)


def _sibling_pairs(s):
    pairs = []
    for i in range(s):
        for j in range(s):
            k = i * s + j
            if j + 1 < s:
                pairs.append((k, k + 1))
            if i + 1 < s:
                pairs.append((k, k + s))
    return pairs


def expand(g, decisions, s, node_cap=256, max_level=None):
    """Grow ``g`` by one level, zooming the frontier nodes marked in ``decisions``.

    Each zoomed node receives ``s*s`` children from ``grid_split``. If the
    result would hold more than ``node_cap`` nodes, zoomed nodes are taken in
    descending ``prob`` order (ties by id) while they still fit. Returns a new
    graph; ``g`` is left untouched.
    """
    if max_level is not None and g.current_level >= max_level:
        raise UsageError(f"graph already at maximum level {max_level}")
    if g.grid is not None and g.grid != s:
        raise UsageError(f"graph was grown with grid {g.grid}, got {s}")
    frontier = set(g.frontier())
    seen = set()
    for d in decisions:
        if d.node_id not in frontier:
            raise UsageError(
                f"decision for node {d.node_id}, which is not on the deepest level {g.current_level}"
            )
        if d.node_id in seen:
            raise UsageError(f"duplicate decision for node {d.node_id}")
        seen.add(d.node_id)
    if seen != frontier:
        raise UsageError(f"decisions must cover the frontier {sorted(frontier)}, got {sorted(seen)}")

    chosen = sorted((d for d in decisions if d.zoom), key=lambda d: (-d.prob, d.node_id))
    room = max(node_cap - g.num_nodes, 0) // (s * s)
    chosen = sorted(d.node_id for d in chosen[:room])

    nodes = list(g.nodes)
    n_old = len(nodes)
    n_new = n_old + len(chosen) * s * s
    adj = np.zeros((n_new, n_new), dtype=np.int8)
    adj[:n_old, :n_old] = g.adjacency
    level = g.current_level + 1
    sib = _sibling_pairs(s)
    for parent_id in chosen:
        base = len(nodes)
        for idx, cell in enumerate(grid_split(nodes[parent_id].region, s)):
            nodes.append(ZoomNode(base + idx, level, cell, parent_id, idx))
            adj[base + idx, base + idx] = 1
            adj[parent_id, base + idx] = adj[base + idx, parent_id] = 1
        for a, b in sib:
            adj[base + a, base + b] = adj[base + b, base + a] = 1
    out = ZoomGraph(nodes, adj, level, s)
    out.zoomed = set(g.zoomed) | set(chosen)
    return out


def neighbors(g, node_id):
    if not 0 <= node_id < g.num_nodes:
        raise UsageError(f"invalid node id {node_id} for graph with {g.num_nodes} nodes")
    return [int(j) for j in np.flatnonzero(g.adjacency[node_id])]


def node_feature(pixels, region, d):
    return resize_array(crop_array(pixels, region), d, d)


def feature_array(g, img, d, ids=None):
    """Crop each node's region from the original image and resize to ``d x d``.

    Returns an ``(N, d, d)`` array for all nodes, or for ``ids`` if given.
    """
    pixels = img.pixels if hasattr(img, "pixels") else np.asarray(img, dtype=np.float64)
    ids = range(g.num_nodes) if ids is None else ids
    out = np.empty((len(ids), d, d))
    for row, i in enumerate(ids):
        out[row] = node_feature(pixels, g.nodes[i].region, d)
    return out


def materialize_features(g, img, d):
    return Tensor(feature_array(g, img, d))
