"""Seeded random graph and model generators shared by the tests."""

from __future__ import annotations

import numpy as np

from shiftstable import CausalGraph, Edge, LinearGaussianSCM, bidirected, directed, linear_scm


def random_admg(rng: np.random.Generator, max_nodes: int = 8, max_edges: int = 14,
                allow_bidirected: bool = True, allow_latent: bool = True) -> CausalGraph:
    n = int(rng.integers(2, max_nodes + 1))
    names = [f"V{i}" for i in range(n)]
    order = list(rng.permutation(names))
    possible = [directed(order[i], order[j]) for i in range(n) for j in range(i + 1, n)]
    if allow_bidirected:
        possible += [bidirected(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    rng.shuffle(possible)
    k = int(rng.integers(1, min(max_edges, len(possible)) + 1))
    edges = possible[:k]
    n_unstable = int(rng.integers(0, len(edges) + 1))
    unstable = list(rng.permutation(len(edges)))[:n_unstable]
    latent = set()
    if allow_latent and n > 2:
        n_latent = int(rng.integers(0, max(1, n // 3) + 1))
        latent = set(rng.permutation(names)[:n_latent])
    target = str(rng.choice(sorted(set(names) - latent)))
    return CausalGraph.build(
        nodes=names,
        edges=edges,
        target=target,
        latent=latent,
        unstable=[edges[i] for i in unstable],
    )


def random_dag_scm(rng: np.random.Generator, max_nodes: int = 6,
                   n_unstable: int | None = None) -> LinearGaussianSCM:
    """Fully observed random DAG model with coefficients in [-2, 2] and a few
    unstable directed edges."""
    n = int(rng.integers(2, max_nodes + 1))
    names = [f"V{i}" for i in range(n)]
    order = list(rng.permutation(names))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.5:
                edges.append(directed(order[i], order[j]))
    if not edges:
        edges = [directed(order[0], order[1])]
    if n_unstable is None:
        n_unstable = int(rng.integers(0, len(edges) + 1))
    unstable_idx = list(rng.permutation(len(edges)))[:n_unstable]
    unstable = [edges[i] for i in unstable_idx]
    target = order[-1] if rng.random() < 0.5 else str(rng.choice(names))
    unstable = [e for e in unstable if e.head != target]
    g = CausalGraph.build(names, edges, target, unstable=unstable)
    coeffs = {e: float(rng.uniform(-2, 2)) for e in edges}
    noise = {v: float(rng.uniform(0.5, 1.5)) for v in names}
    return linear_scm(g, coeffs, noise)


def random_mixed_scm(rng: np.random.Generator, max_nodes: int = 6) -> LinearGaussianSCM:
    """Random model with bidirected edges; exogenous covariance kept PSD by
    diagonal dominance."""
    base = random_dag_scm(rng, max_nodes, n_unstable=0)
    g = base.graph
    names = list(g.nodes)
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    rng.shuffle(pairs)
    n_bi = int(rng.integers(0, min(3, len(pairs)) + 1))
    bi_edges = [bidirected(a, b) for a, b in pairs[:n_bi]]
    degree = {v: 0 for v in names}
    for e in bi_edges:
        degree[e.tail] += 1
        degree[e.head] += 1
    confound = {}
    for e in bi_edges:
        cap = min(base.noise_var[e.tail], base.noise_var[e.head])
        share = max(degree[e.tail], degree[e.head])
        confound[e] = float(rng.uniform(-1, 1)) * 0.8 * cap / share
    graph = CausalGraph.build(
        names, list(g.edges) + bi_edges, g.target,
        unstable=[e for e in g.unstable])
    return linear_scm(graph, base.coeffs, base.noise_var, confound)


def all_subsets(items):
    import itertools

    items = sorted(items)
    for size in range(len(items) + 1):
        yield from itertools.combinations(items, size)
