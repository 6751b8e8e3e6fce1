"""Edge-list IO and small graph generators."""
import random

import numpy as np

from .errors import ParameterError


def parse_edge_list(text, n_nodes=None):
    """Parse "a b [weight]" lines (0-indexed, '#' comments) into (n, edges)."""
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParameterError(f"line {lineno}: expected 'a b [weight]', got {line!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParameterError(f"line {lineno}: cannot parse {line!r}") from None
        if a < 0 or b < 0:
            raise ParameterError(f"line {lineno}: node indices must be nonnegative")
        edges.append((a, b, w))
    top = max((max(a, b) for a, b, _ in edges), default=-1) + 1
    if n_nodes is None:
        n_nodes = top
    elif top > n_nodes:
        raise ParameterError(f"edge list mentions node {top - 1} but n_nodes={n_nodes}")
    return n_nodes, edges


def read_edge_list(path, n_nodes=None):
    with open(path) as fh:
        return parse_edge_list(fh.read(), n_nodes)


def format_edge_list(edges):
    return "".join(f"{a} {b} {w:g}\n" for a, b, w in edges)


def write_edge_list(path, edges, comment=None):
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(format_edge_list(edges))


def adjacency(n_nodes, edges, symmetric=True):
    """Dense float adjacency; with ``symmetric`` each edge fills both triangles."""
    a = np.zeros((n_nodes, n_nodes))
    for u, v, w in edges:
        a[u, v] = w
        if symmetric:
            a[v, u] = w
    return a


def neighbor_rows(n_nodes, edges):
    """Row -> {col: weight} for an undirected edge list."""
    rows = [dict() for _ in range(n_nodes)]
    for u, v, w in edges:
        rows[u][v] = w
        rows[v][u] = w
    return rows


def erdos_renyi(n_nodes, p, seed=None):
    rng = random.Random(seed)
    return [(a, b, 1.0) for a in range(n_nodes) for b in range(a + 1, n_nodes) if rng.random() < p]


def complete_graph(n_nodes):
    return [(a, b, 1.0) for a in range(n_nodes) for b in range(a + 1, n_nodes)]


def star_graph(leaves):
    return [(0, b, 1.0) for b in range(1, leaves + 1)]


def path_graph(n_nodes):
    return [(a, a + 1, 1.0) for a in range(n_nodes - 1)]
