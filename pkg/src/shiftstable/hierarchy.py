"""The three-level hierarchy of stable distributions.

Level 1 conditions on observed variables, level 2 additionally intervenes
(deleting every edge into the intervened variables), level 3 deletes
individual edges and conditions on the counterfactual versions of the
affected variables.  Each level's operator is realised here as graph surgery
followed by the stability check, together with exhaustive enumeration,
conversion between levels, the optimal level-3 construction, and a report of
which stable paths into the target each choice retains.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import CapacityError, NoStableSolutionError, SpecError, UnsupportedError
from .graphs import (
    BIDIRECTED,
    DIRECTED,
    CausalGraph,
    Edge,
    Path,
    StabilityVerdict,
    delete_edges,
    edges_into,
    is_stable_conditional,
)


@dataclass(frozen=True)
class PredictorSpec:
    """A hierarchy-level description of a distribution over the target.

    ``conditioning`` holds plain observed features, ``interventions`` the
    intervened features (level >= 2), and ``deleted_edges`` the edges removed
    by the level's operator (derived as all edges into the interventions at
    level 2, arbitrary at level 3).  Features that head a deleted edge stand
    for their counterfactual versions with reference value 0.
    """

    level: int
    conditioning: frozenset[str]
    interventions: frozenset[str]
    deleted_edges: frozenset[Edge]
    target: str

    def __post_init__(self):
        from .graphs import _as_edge

        object.__setattr__(self, "conditioning", frozenset(self.conditioning))
        object.__setattr__(self, "interventions", frozenset(self.interventions))
        object.__setattr__(self, "deleted_edges",
                           frozenset(_as_edge(e) for e in self.deleted_edges))

    @property
    def features(self) -> frozenset[str]:
        return self.conditioning | self.interventions

    @property
    def sorted_features(self) -> tuple[str, ...]:
        return tuple(sorted(self.features))

    def counterfactual_features(self) -> frozenset[str]:
        """Features standing for counterfactual versions: the heads of
        deleted edges."""
        affected = set()
        for e in self.deleted_edges:
            affected.update(e.heads)
        return self.features & affected

    def validate(self, g: CausalGraph) -> None:
        if self.level not in (1, 2, 3):
            raise SpecError(f"level must be 1, 2 or 3, got {self.level}")
        if self.target != g.target:
            raise SpecError(f"spec target {self.target!r} != graph target {g.target!r}")
        unknown = sorted(v for v in self.features if not g.has_node(v))
        if unknown:
            raise SpecError(f"unknown feature nodes {unknown}")
        hidden = sorted(self.features - g.observed)
        if hidden:
            raise SpecError(f"latent nodes cannot be features: {hidden}")
        if self.target in self.features:
            raise SpecError("the target cannot be one of its own features")
        if self.conditioning & self.interventions:
            raise SpecError("conditioning and intervention sets overlap")
        if self.level == 1 and (self.interventions or self.deleted_edges):
            raise SpecError("level 1 admits conditioning only")
        if self.level == 2 and self.deleted_edges != edges_into(g, self.interventions):
            raise SpecError("level 2 must delete exactly the edges into the interventions")
        extra = self.deleted_edges - g.edges
        if extra:
            raise SpecError(f"deleted edges not in graph: {sorted(map(str, extra))}")
        for e in self.deleted_edges:
            if e.kind == DIRECTED and e.head == self.target:
                raise SpecError(
                    f"deleting {e} would alter the target's own mechanism")

    def describe(self) -> str:
        cf = self.counterfactual_features()
        feats = []
        for v in self.sorted_features:
            feats.append(f"{v}*" if v in cf else v)
        body = ", ".join(feats) if feats else "-"
        dels = ", ".join(str(e) for e in sorted(self.deleted_edges)) or "-"
        return f"level {self.level} | features: {body} | deleted: {dels}"


def level1(z, target: str) -> PredictorSpec:
    return PredictorSpec(1, frozenset(z), frozenset(), frozenset(), target)


def level2(g: CausalGraph, w, z) -> PredictorSpec:
    w = frozenset(w)
    return PredictorSpec(2, frozenset(z), w, edges_into(g, w), g.target)


def level3(g: CausalGraph, z, deleted, interventions=()) -> PredictorSpec:
    return PredictorSpec(3, frozenset(z), frozenset(interventions),
                         frozenset(deleted), g.target)


def stable_for_spec(g: CausalGraph, spec: PredictorSpec) -> StabilityVerdict:
    """Apply the spec's edge deletions, then run the stability check with all
    features (conditioned, intervened or counterfactual) as the conditioning
    set in the surgered graph."""
    spec.validate(g)
    surgered = delete_edges(g, spec.deleted_edges)
    return is_stable_conditional(surgered, spec.features, spec.target)


def surgered_graph(g: CausalGraph, spec: PredictorSpec) -> CausalGraph:
    spec.validate(g)
    return delete_edges(g, spec.deleted_edges)


def _subset_budget(count: int, limit: int, what: str) -> None:
    if count > limit:
        raise CapacityError(
            f"{what} needs {count} combinations, over the limit of {limit}; "
            "raise max_combinations to force it")


def _sorted_subsets(items):
    items = sorted(items)
    for size in range(len(items) + 1):
        yield from itertools.combinations(items, size)


def enumerate_level1(g: CausalGraph, *, max_combinations: int = 2**20) -> list[PredictorSpec]:
    """All conditioning sets with a stable verdict, by (size, lexicographic)."""
    pool = sorted(g.observed - {g.target})
    _subset_budget(2 ** len(pool), max_combinations, "level-1 enumeration")
    out = []
    for z in _sorted_subsets(pool):
        spec = level1(z, g.target)
        if stable_for_spec(g, spec).stable:
            out.append(spec)
    return out


def enumerate_level2(g: CausalGraph, *, max_combinations: int = 2**20) -> list[PredictorSpec]:
    """All disjoint (interventions, conditioning) pairs with a stable verdict
    after the intervention surgery.

    Pairs whose surgered graph and full feature set coincide describe the
    same distribution; only the first (smallest intervention set) is kept.
    """
    pool = sorted(g.observed - {g.target})
    _subset_budget(3 ** len(pool), max_combinations, "level-2 enumeration")
    out = []
    seen_keys = set()
    for w in _sorted_subsets(pool):
        rest = [v for v in pool if v not in w]
        for z in _sorted_subsets(rest):
            spec = level2(g, w, z)
            if not stable_for_spec(g, spec).stable:
                continue
            surgered = delete_edges(g, spec.deleted_edges)
            key = (surgered.edges, surgered.unstable, spec.features)
            if key in seen_keys:
                continue
            seen_keys.add(key)
            out.append(spec)
    return out


def optimal_stable(g: CausalGraph) -> PredictorSpec:
    """The level-3 spec that deletes the unstable edges and only those,
    conditioning on every observed non-target variable (counterfactual
    versions where affected)."""
    for e in g.unstable:
        if g.target in e.heads:
            if e.kind == BIDIRECTED:
                raise UnsupportedError(
                    f"unstable bidirected edge {e} touches the target; no "
                    "supported stability reading exists for this graph")
            raise NoStableSolutionError(
                f"unstable edge {e} points into the target; no stable "
                "distribution exists")
    spec = level3(g, g.observed - {g.target}, g.unstable)
    verdict = stable_for_spec(g, spec)
    if not verdict.stable:  # removing every unstable edge always suffices
        raise AssertionError("optimal construction produced an unstable spec")
    return spec


def embed_level1_as_level2(g: CausalGraph, spec: PredictorSpec) -> PredictorSpec:
    """A stable conditional is the interventional distribution with an empty
    intervention set."""
    if spec.level != 1:
        raise SpecError("expected a level-1 spec")
    if not stable_for_spec(g, spec).stable:
        raise SpecError("refusing to embed an unstable spec")
    return level2(g, frozenset(), spec.conditioning)


def convert_level2_to_level3(g: CausalGraph, spec: PredictorSpec) -> PredictorSpec:
    """Re-express an interventional distribution as a counterfactual one:
    delete all edges into the intervened variables and condition on the
    counterfactual versions of the features."""
    if spec.level != 2:
        raise SpecError("expected a level-2 spec")
    if not stable_for_spec(g, spec).stable:
        raise SpecError("refusing to convert an unstable spec")
    return level3(g, spec.conditioning, spec.deleted_edges,
                  interventions=spec.interventions)


# --------------------------------------------------------------------------
# Retained-path comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RetainedPath:
    """A stable path from one of a spec's features into the target in the
    spec's surgered graph.  ``active`` records whether the path is open given
    the spec's remaining features."""

    source: str
    path: Path
    active: bool

    def key(self):
        return (self.path.nodes, self.path.edges)


@dataclass(frozen=True)
class PathDiff:
    retained_a: tuple[RetainedPath, ...]
    retained_b: tuple[RetainedPath, ...]
    only_b: tuple[RetainedPath, ...]


def _simple_paths(g: CausalGraph, start: str, sink: str) -> list[Path]:
    found: list[Path] = []

    def walk(node, visited, nodes_acc, edges_acc):
        if node == sink:
            found.append(Path(nodes_acc, edges_acc))
            return
        for e in g.edges_at(node):
            nxt = e.other(node)
            if nxt in visited:
                continue
            walk(nxt, visited | {nxt}, nodes_acc + (nxt,), edges_acc + (e,))

    walk(start, {start}, (start,), ())
    return found


def _path_is_active(g: CausalGraph, path: Path, cond: frozenset[str]) -> bool:
    anc_cond = g.ancestors_of(cond)
    for i in range(1, len(path.nodes) - 1):
        node = path.nodes[i]
        into = path.edges[i - 1].mark_at(node) == "head"
        outof = path.edges[i].mark_at(node) == "head"
        if into and outof:
            if node not in anc_cond:
                return False
        elif node in cond:
            return False
    return True


def retained_stable_paths(g: CausalGraph, spec: PredictorSpec) -> tuple[RetainedPath, ...]:
    """Stable paths from the spec's features into the target that survive the
    spec's surgery, annotated with their open/blocked status given the other
    features."""
    surgered = delete_edges(g, spec.deleted_edges)
    out: list[RetainedPath] = []
    seen = set()
    for f in spec.sorted_features:
        cond = spec.features - {f}
        for path in _simple_paths(surgered, f, spec.target):
            if any(e in surgered.unstable for e in path.edges):
                continue
            key = (path.nodes, path.edges)
            if key in seen:
                continue
            seen.add(key)
            out.append(RetainedPath(f, path, _path_is_active(surgered, path, cond)))
    out.sort(key=lambda r: r.key())
    return tuple(out)


def compare_retained_paths(g: CausalGraph, a: PredictorSpec, b: PredictorSpec) -> PathDiff:
    """Which stable paths into the target does ``b`` keep that ``a`` lost?"""
    for spec in (a, b):
        if not stable_for_spec(g, spec).stable:
            raise SpecError("retained-path comparison expects stable specs")
    ra = retained_stable_paths(g, a)
    rb = retained_stable_paths(g, b)
    keys_a = {r.key() for r in ra}
    only_b = tuple(r for r in rb if r.key() not in keys_a)
    return PathDiff(ra, rb, only_b)


# --------------------------------------------------------------------------
# Full report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HierarchyReport:
    graph: CausalGraph
    level1: tuple[PredictorSpec, ...]
    level2: tuple[PredictorSpec, ...]
    optimal: PredictorSpec
    retained: tuple[tuple[PredictorSpec, tuple[RetainedPath, ...]], ...]
    optimal_retained: tuple[RetainedPath, ...]

    def missing_vs_optimal(self, spec: PredictorSpec) -> tuple[RetainedPath, ...]:
        kept = None
        for s, paths in self.retained:
            if s == spec:
                kept = {r.key() for r in paths}
                break
        if kept is None:
            raise KeyError(spec)
        return tuple(r for r in self.optimal_retained if r.key() not in kept)


def hierarchy_report(g: CausalGraph, *, max_combinations: int = 2**20) -> HierarchyReport:
    l1 = enumerate_level1(g, max_combinations=max_combinations)
    l2 = enumerate_level2(g, max_combinations=max_combinations)
    opt = optimal_stable(g)
    retained = tuple((s, retained_stable_paths(g, s)) for s in (*l1, *l2))
    return HierarchyReport(
        graph=g,
        level1=tuple(l1),
        level2=tuple(l2),
        optimal=opt,
        retained=retained,
        optimal_retained=retained_stable_paths(g, opt),
    )
