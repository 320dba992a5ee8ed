"""Independent brute-force oracles for the graph algorithms.

Everything here enumerates simple paths explicitly and applies the
d-separation rules edge by edge, sharing no code with the package's
reachability implementation.
"""

from __future__ import annotations

from shiftstable import BIDIRECTED, CausalGraph, Edge


def _points_into(edge: Edge, node: str) -> bool:
    return edge.kind == BIDIRECTED or edge.head == node


def _ancestors_closure(g: CausalGraph, nodes) -> set[str]:
    out = set(nodes)
    changed = True
    while changed:
        changed = False
        for e in g.edges:
            if e.kind != BIDIRECTED and e.head in out and e.tail not in out:
                out.add(e.tail)
                changed = True
    return out


def all_simple_paths(g: CausalGraph, start: str, end: str) -> list[list[Edge]]:
    """Every simple path (distinct nodes; parallel edges distinct) between
    two nodes, as edge lists."""
    paths: list[list[Edge]] = []

    def extend(node, visited, acc):
        if node == end:
            paths.append(list(acc))
            return
        for e in sorted(g.edges):
            if node not in e.endpoints:
                continue
            nxt = e.other(node)
            if nxt in visited:
                continue
            acc.append(e)
            extend(nxt, visited | {nxt}, acc)
            acc.pop()

    extend(start, {start}, [])
    return paths


def path_nodes(start: str, path: list[Edge]) -> list[str]:
    nodes = [start]
    for e in path:
        nodes.append(e.other(nodes[-1]))
    return nodes


def path_active(g: CausalGraph, start: str, path: list[Edge], z) -> bool:
    """Apply the d-separation rules to one explicit path: every collider must
    be a conditioned node or an ancestor of one, every other inner node must
    be unconditioned."""
    z = set(z)
    anc = _ancestors_closure(g, z)
    nodes = path_nodes(start, path)
    for i in range(1, len(nodes) - 1):
        node = nodes[i]
        collider = _points_into(path[i - 1], node) and _points_into(path[i], node)
        if collider:
            if node not in anc:
                return False
        elif node in z:
            return False
    return True


def d_separated_bruteforce(g: CausalGraph, xs, ys, z) -> bool:
    for x in sorted(set(xs)):
        for y in sorted(set(ys)):
            for path in all_simple_paths(g, x, y):
                if path_active(g, x, path, z):
                    return False
    return True
