"""Mixed causal graphs with unstable edges.

A :class:`CausalGraph` is an acyclic directed mixed graph (directed edges are
causal mechanisms, bidirected edges mark unobserved confounding) together with
a set of *unstable* edges whose mechanisms may differ arbitrarily across
environments, and a prediction target.

The module provides d-separation on mixed graphs, detection of active paths
that carry instability into the target, a selection-diagram construction that
serves as an independent stability oracle, and the two graph surgeries
(intervention and single-edge deletion) behind the hierarchy of stable
distributions.  All graph values are immutable and every operation is a pure
function.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .errors import GraphError, QueryError, SpecError, UnsupportedError

DIRECTED = "directed"
BIDIRECTED = "bidirected"

# Edge marks used by the reachability walk: an edge meets a node either with
# an arrowhead ("head") or with a tail.
_HEAD = "head"
_TAIL = "tail"


@dataclass(frozen=True, order=True)
class Edge:
    """An edge identified by (tail, head, kind); bidirected edges are
    canonicalised so the lexicographically smaller endpoint is stored first."""

    tail: str
    head: str
    kind: str = DIRECTED

    def __post_init__(self):
        if self.kind not in (DIRECTED, BIDIRECTED):
            raise GraphError(f"unknown edge kind {self.kind!r}")
        if self.tail == self.head:
            raise GraphError(f"self loop on {self.tail!r}")
        if self.kind == BIDIRECTED and self.head < self.tail:
            tail, head = self.head, self.tail
            object.__setattr__(self, "tail", tail)
            object.__setattr__(self, "head", head)

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.tail, self.head)

    @property
    def heads(self) -> tuple[str, ...]:
        """Endpoints the edge points into (both, for a bidirected edge)."""
        if self.kind == BIDIRECTED:
            return self.endpoints
        return (self.head,)

    def other(self, node: str) -> str:
        if node == self.tail:
            return self.head
        if node == self.head:
            return self.tail
        raise KeyError(node)

    def mark_at(self, node: str) -> str:
        """Return ``"head"`` if the edge points into ``node``, else ``"tail"``."""
        if self.kind == BIDIRECTED:
            return _HEAD
        return _HEAD if node == self.head else _TAIL

    def __str__(self) -> str:
        arrow = "<->" if self.kind == BIDIRECTED else "->"
        return f"{self.tail} {arrow} {self.head}"


def directed(tail: str, head: str) -> Edge:
    return Edge(tail, head, DIRECTED)


def bidirected(a: str, b: str) -> Edge:
    return Edge(a, b, BIDIRECTED)


def _as_edge(spec) -> Edge:
    if isinstance(spec, Edge):
        return spec
    if isinstance(spec, (tuple, list)):
        if len(spec) == 2:
            return Edge(spec[0], spec[1], DIRECTED)
        if len(spec) == 3:
            kind = {"->": DIRECTED, "<->": BIDIRECTED, DIRECTED: DIRECTED,
                    BIDIRECTED: BIDIRECTED}.get(spec[2])
            if kind is None:
                raise GraphError(f"unknown edge kind {spec[2]!r}")
            return Edge(spec[0], spec[1], kind)
    raise GraphError(f"cannot interpret {spec!r} as an edge")


@dataclass(frozen=True)
class CausalGraph:
    """Acyclic directed mixed graph with unstable edges and a target.

    ``context`` records nodes that were turned into root/context variables by
    an intervention; it is bookkeeping only and excluded from equality.
    """

    nodes: tuple[str, ...]
    observed: frozenset[str]
    edges: frozenset[Edge]
    unstable: frozenset[Edge]
    target: str
    context: frozenset[str] = field(default_factory=frozenset, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "observed", frozenset(self.observed))
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "unstable", frozenset(self.unstable))
        object.__setattr__(self, "context", frozenset(self.context))
        self._validate()
        adjacency: dict[str, list[Edge]] = {v: [] for v in self.nodes}
        parents: dict[str, set[str]] = {v: set() for v in self.nodes}
        children: dict[str, set[str]] = {v: set() for v in self.nodes}
        for e in self.edges:
            adjacency[e.tail].append(e)
            adjacency[e.head].append(e)
            if e.kind == DIRECTED:
                parents[e.head].add(e.tail)
                children[e.tail].add(e.head)
        object.__setattr__(
            self, "_adjacency",
            {v: tuple(sorted(es)) for v, es in adjacency.items()})
        object.__setattr__(self, "_parents", {v: frozenset(s) for v, s in parents.items()})
        object.__setattr__(self, "_children", {v: frozenset(s) for v, s in children.items()})
        object.__setattr__(self, "_topo", self._toposort())

    def _validate(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node ids")
        known = set(self.nodes)
        if not self.observed <= known:
            raise GraphError(f"observed nodes {sorted(self.observed - known)} not in graph")
        for e in self.edges:
            if e.tail not in known or e.head not in known:
                raise GraphError(f"edge {e} references unknown nodes")
        if not self.unstable <= self.edges:
            missing = sorted(map(str, self.unstable - self.edges))
            raise GraphError(f"unstable edges not in graph: {missing}")
        if self.target not in known:
            raise GraphError(f"target {self.target!r} not in graph")
        if self.target not in self.observed:
            raise GraphError(f"target {self.target!r} must be observed")
        if not self.context <= known:
            raise GraphError("context nodes not in graph")

    def _toposort(self) -> tuple[str, ...]:
        indeg = {v: len(self._parents[v]) for v in self.nodes}
        ready = sorted(v for v in self.nodes if indeg[v] == 0)
        order: list[str] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            grew = False
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    grew = True
            if grew:
                ready.sort()
        if len(order) != len(self.nodes):
            stuck = sorted(v for v in self.nodes if indeg[v] > 0)
            raise GraphError(f"directed cycle through {stuck}")
        return tuple(order)

    @classmethod
    def build(cls, nodes, edges, target, *, latent=(), unstable=(), context=()) -> "CausalGraph":
        """Friendly constructor: edges may be ``Edge`` objects or tuples
        ``(tail, head)`` / ``(tail, head, "<->")``."""
        nodes = tuple(nodes)
        latent = frozenset(latent)
        if not latent <= set(nodes):
            raise GraphError(f"latent nodes {sorted(latent - set(nodes))} not in node list")
        return cls(
            nodes=nodes,
            observed=frozenset(nodes) - latent,
            edges=frozenset(_as_edge(e) for e in edges),
            unstable=frozenset(_as_edge(e) for e in unstable),
            target=target,
            context=frozenset(context),
        )

    # --- basic views -----------------------------------------------------

    @property
    def directed_edges(self) -> frozenset[Edge]:
        return frozenset(e for e in self.edges if e.kind == DIRECTED)

    @property
    def bidirected_edges(self) -> frozenset[Edge]:
        return frozenset(e for e in self.edges if e.kind == BIDIRECTED)

    @property
    def latent(self) -> frozenset[str]:
        return frozenset(self.nodes) - self.observed

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._topo

    def edges_at(self, node: str) -> tuple[Edge, ...]:
        return self._adjacency[node]

    def parents(self, node: str) -> frozenset[str]:
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        return self._children[node]

    def has_node(self, node: str) -> bool:
        return node in self._adjacency

    def ancestors_of(self, nodes) -> frozenset[str]:
        """Nodes with a directed path into ``nodes``, including ``nodes``."""
        seen = set()
        stack = [v for v in nodes]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self._parents[v])
        return frozenset(seen)

    def descendants_of(self, nodes, *, ignore: frozenset[Edge] = frozenset()) -> frozenset[str]:
        """Nodes reachable from ``nodes`` along directed edges not in
        ``ignore``, including ``nodes``."""
        ignored = frozenset(ignore)
        seen = set()
        stack = [v for v in nodes]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            for e in self._adjacency[v]:
                if e.kind == DIRECTED and e.tail == v and e not in ignored:
                    stack.append(e.head)
        return frozenset(seen)

    def structural_key(self):
        """Hashable canonical form ignoring context annotations."""
        return (self.nodes, self.observed, self.edges, self.unstable, self.target)

    def __str__(self) -> str:
        parts = []
        for e in sorted(self.edges):
            mark = "!" if e in self.unstable else ""
            parts.append(f"{e}{mark}")
        return f"CausalGraph(target={self.target}, edges=[{', '.join(parts)}])"


# --------------------------------------------------------------------------
# d-separation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationQuery:
    """A d-separation question: are ``sources`` separated from ``sinks``
    given ``conditioning``?  The three sets must be pairwise disjoint."""

    sources: frozenset[str]
    sinks: frozenset[str]
    conditioning: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "sources", frozenset(self.sources))
        object.__setattr__(self, "sinks", frozenset(self.sinks))
        object.__setattr__(self, "conditioning", frozenset(self.conditioning))

    def validate(self, g: CausalGraph) -> None:
        all_nodes = self.sources | self.sinks | self.conditioning
        unknown = sorted(v for v in all_nodes if not g.has_node(v))
        if unknown:
            raise QueryError(f"unknown node ids {unknown}")
        if not self.sources:
            raise QueryError("empty source set")
        if not self.sinks:
            raise QueryError("empty sink set")
        for a, b, name in (
            (self.sources, self.sinks, "sources/sinks"),
            (self.sources, self.conditioning, "sources/conditioning"),
            (self.sinks, self.conditioning, "sinks/conditioning"),
        ):
            if a & b:
                raise QueryError(f"{name} overlap on {sorted(a & b)}")


def _reachable(g: CausalGraph, seeds, conditioning: frozenset[str]) -> set[tuple[str, str]]:
    """Generalised Bayes-ball reachability over (node, arrival-mark) states.

    ``seeds`` is an iterable of ``(node, mark)`` states; a mark of ``"head"``
    means the walk arrives at the node through an arrowhead.  A collider
    (head in, head out) passes only if the node is a conditioned node or an
    ancestor of one; any other configuration passes only if the node is not
    conditioned.  Bidirected edges carry arrowheads at both endpoints.
    """
    anc_cond = g.ancestors_of(conditioning)
    seen: set[tuple[str, str]] = set()
    queue: deque[tuple[str, str]] = deque()
    for state in seeds:
        if state not in seen:
            seen.add(state)
            queue.append(state)
    while queue:
        node, mark = queue.popleft()
        for e in g.edges_at(node):
            here = e.mark_at(node)
            if mark == _HEAD and here == _HEAD:
                if node not in anc_cond:
                    continue
            elif node in conditioning:
                continue
            nxt = e.other(node)
            state = (nxt, e.mark_at(nxt))
            if state not in seen:
                seen.add(state)
                queue.append(state)
    return seen


def d_separated(g: CausalGraph, sources, sinks=None, conditioning=()) -> bool:
    """True iff every path between ``sources`` and ``sinks`` is blocked by
    ``conditioning`` under the d-separation rules for mixed graphs.

    ``sources`` may also be a :class:`SeparationQuery`.
    """
    if isinstance(sources, SeparationQuery):
        query = sources
    else:
        query = SeparationQuery(frozenset(sources), frozenset(sinks), frozenset(conditioning))
    query.validate(g)
    seeds = []
    for x in sorted(query.sources):
        for e in g.edges_at(x):
            nxt = e.other(x)
            seeds.append((nxt, e.mark_at(nxt)))
    reached = _reachable(g, seeds, query.conditioning)
    return not any(node in query.sinks for node, _ in reached)


# --------------------------------------------------------------------------
# Stability: active unstable paths and the dual oracles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Path:
    """Alternating node/edge sequence; ``nodes`` has one more entry than
    ``edges``."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if len(self.nodes) != len(self.edges) + 1:
            raise GraphError("malformed path")

    def render(self, unstable: frozenset[Edge] = frozenset()) -> str:
        out = [self.nodes[0]]
        for node, e in zip(self.nodes[1:], self.edges):
            if e.kind == BIDIRECTED:
                arrow = "<->"
            elif e.head == node:
                arrow = "->"
            else:
                arrow = "<-"
            if e in unstable:
                arrow += "*"
            out.append(arrow)
            out.append(node)
        return " ".join(out)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Witness:
    """An active path that carries an unstable edge's shift into the target.

    ``path`` runs from the unstable edge's head to the target; when the
    edge's tail does not already appear on it, ``display_path`` prepends the
    edge itself so the whole route reads naturally.
    """

    edge: Edge
    path: Path

    @property
    def display_path(self) -> Path:
        start = self.path.nodes[0]
        if start in self.edge.endpoints:
            tail = self.edge.other(start)
            if tail not in self.path.nodes and self.edge not in self.path.edges:
                return Path((tail,) + self.path.nodes, (self.edge,) + self.path.edges)
        return self.path

    def render(self, g: CausalGraph | None = None) -> str:
        unstable = g.unstable if g is not None else frozenset({self.edge})
        shown = self.display_path
        if shown is self.path and len(self.path.nodes) > 1:
            return f"[{self.edge}] {self.path.render(unstable)}"
        return shown.render(unstable)

    def _sort_key(self):
        p = self.display_path
        return (p.nodes, p.edges, self.edge)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    witnesses: tuple[Witness, ...] = ()
    reason: str = ""

    def __bool__(self) -> bool:
        return self.stable


def _check_stability_query(g: CausalGraph, z: frozenset[str], y: str) -> None:
    unknown = sorted(v for v in z | {y} if not g.has_node(v))
    if unknown:
        raise QueryError(f"unknown node ids {unknown}")
    if y not in g.observed:
        raise QueryError(f"target {y!r} is not an observed node")
    if y in z:
        raise QueryError(f"target {y!r} cannot be conditioned on")
    hidden = sorted(z - g.observed)
    if hidden:
        raise QueryError(f"cannot condition on latent nodes {hidden}")
    for e in g.unstable:
        if e.kind == BIDIRECTED and y in e.endpoints:
            raise UnsupportedError(
                f"unstable bidirected edge {e} touches the target; whether this "
                "leaves the target's mechanism stable is undefined, refusing to guess")


def _active_paths_from(g, start: str, sink: str, cond: frozenset[str]) -> list[Path]:
    """All simple active paths from ``start`` (entered through an arrowhead)
    to ``sink`` given ``cond``.  Deterministic depth-first order."""
    anc_cond = g.ancestors_of(cond)
    found: list[Path] = []

    def walk(node, mark, visited, nodes_acc, edges_acc):
        if node == sink:
            found.append(Path(nodes_acc, edges_acc))
            return
        for e in g.edges_at(node):
            nxt = e.other(node)
            if nxt in visited:
                continue
            here = e.mark_at(node)
            if mark == _HEAD and here == _HEAD:
                if node not in anc_cond:
                    continue
            elif node in cond:
                continue
            walk(nxt, e.mark_at(nxt), visited | {nxt}, nodes_acc + (nxt,), edges_acc + (e,))

    walk(start, _HEAD, {start}, (start,), ())
    return found


def active_unstable_paths(g: CausalGraph, z, y: str | None = None) -> tuple[Witness, ...]:
    """Every active path that feeds an unstable edge's shift into ``y``.

    For each unstable edge the walk starts at the edge's head as if arriving
    through an extra arrowhead (the shift enters the mechanism there), so an
    empty result certifies that no instability can reach the target given
    ``z``.  Witnesses are returned in a canonical lexicographic order.
    """
    y = g.target if y is None else y
    z = frozenset(z)
    _check_stability_query(g, z, y)
    witnesses: list[Witness] = []
    seen: set[tuple] = set()
    for e in sorted(g.unstable):
        for h in e.heads:
            if h == y:
                found = [Witness(e, Path((y,), ()))]
            else:
                found = [Witness(e, p) for p in _active_paths_from(g, h, y, z)]
            for w in found:
                key = (w.edge, w.path.nodes, w.path.edges)
                if key not in seen:
                    seen.add(key)
                    witnesses.append(w)
    witnesses.sort(key=Witness._sort_key)
    return tuple(witnesses)


def is_stable_conditional(g: CausalGraph, z, y: str | None = None) -> StabilityVerdict:
    """Decide whether predicting ``y`` from ``z`` is invariant to arbitrary
    shifts in the unstable edges.

    Stable iff no unstable edge points into ``y`` and no active path carries
    an unstable edge's head into ``y`` given ``z``.  The verdict carries the
    witness paths when unstable.
    """
    y = g.target if y is None else y
    z = frozenset(z)
    _check_stability_query(g, z, y)
    into_target = sorted(e for e in g.unstable if y in e.heads)
    if into_target:
        witnesses = tuple(Witness(e, Path((y,), ())) for e in into_target)
        return StabilityVerdict(False, witnesses, "unstable edge into the target")
    connected = False
    for e in sorted(g.unstable):
        seeds = [(h, _HEAD) for h in e.heads]
        reached = _reachable(g, seeds, z)
        if any(node == y for node, _ in reached):
            connected = True
            break
    if not connected:
        return StabilityVerdict(True)
    return StabilityVerdict(False, active_unstable_paths(g, z, y), "active unstable path")


# --------------------------------------------------------------------------
# Selection diagrams: the independent oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionDiagram:
    """Base graph augmented with one selection node per unstable edge, each
    pointing at the endpoint(s) the edge points into."""

    graph: CausalGraph
    selection_nodes: tuple[str, ...]
    provenance: tuple[tuple[str, Edge], ...]

    @property
    def provenance_map(self) -> dict[str, Edge]:
        return dict(self.provenance)

    @property
    def base_observed(self) -> frozenset[str]:
        return self.graph.observed


def to_selection_diagram(g: CausalGraph) -> SelectionDiagram:
    """Augment ``g`` with a selection node per unstable edge.

    The selection node points at the head of a directed unstable edge; for an
    unstable bidirected edge it points at both endpoints, mirroring a shift
    in the latent confounder behind the edge.
    """
    taken = set(g.nodes)
    sel_nodes: list[str] = []
    provenance: list[tuple[str, Edge]] = []
    new_edges: list[Edge] = []
    for i, e in enumerate(sorted(g.unstable), start=1):
        name = f"S{i}"
        while name in taken:
            name = "_" + name
        taken.add(name)
        sel_nodes.append(name)
        provenance.append((name, e))
        for h in e.heads:
            new_edges.append(directed(name, h))
    aug = CausalGraph(
        nodes=g.nodes + tuple(sel_nodes),
        observed=g.observed,
        edges=g.edges | frozenset(new_edges),
        unstable=g.unstable,
        target=g.target,
        context=g.context,
    )
    return SelectionDiagram(aug, tuple(sel_nodes), tuple(provenance))


def selection_stable(sd: SelectionDiagram, z, y: str | None = None) -> bool:
    """Stability via the selection diagram: all selection nodes d-separated
    from ``y`` given ``z``.  Must agree with :func:`is_stable_conditional`
    on every input."""
    y = sd.graph.target if y is None else y
    z = frozenset(z)
    base = sd.graph
    unknown = sorted(v for v in z | {y} if not base.has_node(v))
    if unknown:
        raise QueryError(f"unknown node ids {unknown}")
    if y not in sd.base_observed:
        raise QueryError(f"target {y!r} is not an observed node")
    if y in z:
        raise QueryError(f"target {y!r} cannot be conditioned on")
    hidden = sorted(z - sd.base_observed)
    if hidden:
        raise QueryError(f"cannot condition on latent nodes {hidden}")
    for _, e in sd.provenance:
        if e.kind == BIDIRECTED and y in e.endpoints:
            raise UnsupportedError(
                f"unstable bidirected edge {e} touches the target; whether this "
                "leaves the target's mechanism stable is undefined, refusing to guess")
    if not sd.selection_nodes:
        return True
    return d_separated(sd.graph, frozenset(sd.selection_nodes), frozenset({y}), z)


# --------------------------------------------------------------------------
# Graph surgery
# --------------------------------------------------------------------------


def edges_into(g: CausalGraph, nodes) -> frozenset[Edge]:
    """All edges with an arrowhead at any of ``nodes`` (bidirected edges
    count at either endpoint)."""
    nodes = frozenset(nodes)
    return frozenset(e for e in g.edges if any(h in nodes for h in e.heads))


def mutilate_do(g: CausalGraph, w) -> CausalGraph:
    """Intervention surgery: remove every edge pointing into a node of ``w``
    and flag those nodes as context roots."""
    w = frozenset(w)
    if g.target in w:
        raise SpecError(f"cannot intervene on the target {g.target!r}")
    bad = sorted(w - g.observed)
    if bad:
        raise SpecError(f"cannot intervene on latent or unknown nodes {bad}")
    removed = edges_into(g, w)
    return CausalGraph(
        nodes=g.nodes,
        observed=g.observed,
        edges=g.edges - removed,
        unstable=g.unstable - removed,
        target=g.target,
        context=g.context | w,
    )


def delete_edges(g: CausalGraph, d) -> CausalGraph:
    """Remove exactly the edges in ``d``; everything else is preserved."""
    d = frozenset(_as_edge(e) for e in d)
    extra = d - g.edges
    if extra:
        raise SpecError(f"edges not in graph: {sorted(map(str, extra))}")
    return CausalGraph(
        nodes=g.nodes,
        observed=g.observed,
        edges=g.edges - d,
        unstable=g.unstable - d,
        target=g.target,
        context=g.context,
    )
