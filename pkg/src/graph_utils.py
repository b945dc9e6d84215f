import logging

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)


def directed_edges(triangles):
    """All half-edges of a triangle array as an (3F, 2) integer array."""
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    return np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])


def edge_use_counts(triangles):
    """
    Counts how many triangles use each undirected edge.

    Args:
        triangles: (F, 3) vertex indices.

    Returns:
        Tuple (edges, counts): edges is an (E, 2) array sorted row-wise and
        lexicographically, counts is the number of incident triangles per edge.
    """
    half_edges = directed_edges(triangles)
    if len(half_edges) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    edges, counts = np.unique(np.sort(half_edges, axis=1), axis=0, return_counts=True)
    return edges, counts


def boundary_edges(triangles):
    """Edges used by exactly one triangle."""
    edges, counts = edge_use_counts(triangles)
    return edges[counts == 1]


def boundary_loops(triangles):
    """
    Orders the boundary edges of a mesh into vertex loops.

    Returns:
        List of vertex-index lists, one per boundary component, each starting
        at its smallest vertex index.
    """
    return [nodes for nodes, _ in chain_segments(boundary_edges(triangles).tolist())]


def chain_segments(segments):
    """
    Chains unordered segments that share end nodes into ordered chains.

    Each segment is a pair of hashable node keys. Components in which every
    node has degree 2 become closed chains; the rest are walked from their
    smallest end node.

    Args:
        segments: Iterable of (node_a, node_b) pairs.

    Returns:
        List of (nodes, closed) tuples sorted by the smallest node of each chain.
    """
    graph = nx.Graph()
    graph.add_edges_from((a, b) for a, b in segments if a != b)
    if graph.number_of_nodes() == 0:
        return []

    chains = []
    for component in sorted(nx.connected_components(graph), key=min):
        subgraph = graph.subgraph(component)
        ends = sorted(node for node, degree in subgraph.degree() if degree == 1)
        branching = [node for node, degree in subgraph.degree() if degree > 2]
        if branching:
            logger.debug("Chain component with %d branching nodes; walking depth-first", len(branching))
        start = ends[0] if ends else min(component)
        order = list(nx.dfs_preorder_nodes(subgraph, source=start))
        closed = not ends and not branching and len(order) >= 3
        chains.append((order, closed))
    return chains
