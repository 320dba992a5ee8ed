"""Exact linear Gaussian SCM engine.

A model assigns a coefficient to every directed edge and a covariance to the
exogenous noises (diagonal variances plus one off-diagonal entry per
bidirected edge); all variables are mean zero.  With coefficients arranged in
a matrix ``L`` (rows = tails) the observables satisfy ``O = L^T O + U`` and
the covariance decomposes exactly as ``(I - L)^-T E (I - L)^-1``, which this
module exploits for closed-form predictor fitting and mean squared error:

    mse(beta) = var(Y) - 2 beta' S_fy + beta' S_ff beta

Counterfactual feature construction (auxiliary variables that subtract
deleted parent effects), deleted-world covariances, and population predictor
fitting for hierarchy specs all live here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, ModelError, SpecError, UnsupportedError
from .graphs import BIDIRECTED, DIRECTED, CausalGraph, Edge, _as_edge
from .hierarchy import PredictorSpec, StabilityVerdict, stable_for_spec

DEFAULT_NOISE_VAR = 0.01
PSD_TOL = 1e-9
RIDGE_SCALE = 1e-10


def _solve_weights(s_ff: np.ndarray, s_fy: np.ndarray) -> np.ndarray:
    """Population least squares with a small-ridge fallback for the exactly
    collinear systems that zero-noise auxiliary variables produce."""
    k = s_ff.shape[0]
    if k == 0:
        return np.zeros(0)
    try:
        if np.linalg.cond(s_ff) < 1e12:
            beta = np.linalg.solve(s_ff, s_fy)
            if np.all(np.isfinite(beta)):
                return beta
    except np.linalg.LinAlgError:
        pass
    ridge = RIDGE_SCALE * float(np.trace(s_ff)) / k
    if not np.isfinite(ridge) or ridge <= 0.0:
        ridge = RIDGE_SCALE
    try:
        beta = np.linalg.solve(s_ff + ridge * np.eye(k), s_fy)
    except np.linalg.LinAlgError as exc:
        raise FitError("feature covariance singular even after ridge") from exc
    if not np.all(np.isfinite(beta)):
        raise FitError("non-finite weights after ridge")
    return beta


@dataclass(frozen=True)
class CovarianceMatrix:
    """Node-indexed symmetric PSD matrix."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        m = np.asarray(self.matrix, dtype=float)
        m = (m + m.T) / 2.0
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.ids)})
        if m.shape != (len(self.ids), len(self.ids)):
            raise ModelError("covariance shape does not match ids")
        eigs = np.linalg.eigvalsh(m)
        scale = max(float(eigs[-1]), 1.0)
        if eigs[0] < -PSD_TOL * scale:
            raise ModelError(f"covariance not PSD (min eigenvalue {eigs[0]:.3e})")

    def loc(self, node: str) -> int:
        try:
            return self._index[node]
        except KeyError:
            raise KeyError(f"no covariance entry for {node!r}") from None

    def var(self, node: str) -> float:
        i = self.loc(node)
        return float(self.matrix[i, i])

    def cov(self, a: str, b: str) -> float:
        return float(self.matrix[self.loc(a), self.loc(b)])

    def __contains__(self, node: str) -> bool:
        return node in self._index

    def submatrix(self, ids) -> np.ndarray:
        idx = [self.loc(v) for v in ids]
        return self.matrix[np.ix_(idx, idx)]

    def vector(self, ids, node: str) -> np.ndarray:
        idx = [self.loc(v) for v in ids]
        return self.matrix[idx, self.loc(node)]


@dataclass(frozen=True)
class AVDefinition:
    """An auxiliary variable: a copy of ``base`` with the direct effect of
    some parents subtracted, ``derived = base - sum(coeff * parent)``."""

    base: str
    derived: str
    subtracted: tuple[tuple[str, float], ...]


@dataclass(frozen=True, eq=False)
class LinearGaussianSCM:
    """One environment instantiation of a causal graph: coefficients on the
    directed edges, noise variances per node, and one exogenous covariance
    per bidirected edge."""

    graph: CausalGraph
    coeffs: dict[Edge, float]
    noise_var: dict[str, float]
    confound: dict[Edge, float]
    avs: tuple[AVDefinition, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", dict(self.coeffs))
        object.__setattr__(self, "noise_var", dict(self.noise_var))
        object.__setattr__(self, "confound", dict(self.confound))
        g = self.graph
        if set(self.coeffs) != set(g.directed_edges):
            raise ModelError("coefficient support must match the directed edges exactly")
        if set(self.confound) != set(g.bidirected_edges):
            raise ModelError("exogenous covariance support must match the bidirected edges")
        if set(self.noise_var) != set(g.nodes):
            raise ModelError("need a noise variance for every node")
        av_nodes = {a.derived for a in self.avs}
        for v, var in self.noise_var.items():
            if var < 0:
                raise ModelError(f"negative noise variance at {v!r}")
            if var == 0 and v not in av_nodes:
                raise ModelError(f"zero noise variance at non-auxiliary node {v!r}")
        object.__setattr__(self, "order", g.topological_order)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(g.nodes)})
        exo = self.exo_matrix()
        eigs = np.linalg.eigvalsh(exo)
        scale = max(float(eigs[-1]), 1.0)
        if eigs[0] < -PSD_TOL * scale:
            raise ModelError("exogenous covariance not PSD")

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.graph.nodes

    def index_of(self, node: str) -> int:
        return self._index[node]

    def coefficient_matrix(self) -> np.ndarray:
        """Entry [tail, head] per directed edge; permutation-triangular under
        the topological order."""
        n = len(self.nodes)
        lam = np.zeros((n, n))
        for e, value in self.coeffs.items():
            lam[self._index[e.tail], self._index[e.head]] = value
        return lam

    def exo_matrix(self) -> np.ndarray:
        n = len(self.nodes)
        exo = np.zeros((n, n))
        for v, var in self.noise_var.items():
            exo[self._index[v], self._index[v]] = var
        for e, value in self.confound.items():
            i, j = self._index[e.tail], self._index[e.head]
            exo[i, j] = exo[j, i] = value
        return exo

    def with_coefficients(self, assignment: dict[Edge, float]) -> "LinearGaussianSCM":
        """A new environment differing only in the given directed-edge
        coefficients."""
        unknown = sorted(str(e) for e in assignment if e not in self.coeffs)
        if unknown:
            raise ModelError(f"not directed edges of this model: {unknown}")
        coeffs = dict(self.coeffs)
        coeffs.update(assignment)
        return LinearGaussianSCM(self.graph, coeffs, self.noise_var, self.confound, self.avs)


def linear_scm(graph: CausalGraph, coeffs, noise=None, confound=None) -> LinearGaussianSCM:
    """Build a model, defaulting unspecified noise variances to 0.01.

    ``coeffs`` maps directed edges (``Edge`` or tuples) to values; every
    bidirected edge needs an entry in ``confound``.
    """
    cmap = {_as_edge(e): float(v) for e, v in dict(coeffs or {}).items()}
    noise = {k: float(v) for k, v in dict(noise or {}).items()}
    for v in graph.nodes:
        noise.setdefault(v, DEFAULT_NOISE_VAR)
    conf = {_as_edge(e): float(v) for e, v in dict(confound or {}).items()}
    return LinearGaussianSCM(graph, cmap, noise, conf)


def covariance(m: LinearGaussianSCM) -> CovarianceMatrix:
    """Exact covariance ``(I - L)^-T E (I - L)^-1`` of the model."""
    n = len(m.nodes)
    lam = m.coefficient_matrix()
    factor = np.linalg.inv(np.eye(n) - lam.T)  # maps noises to values
    sigma = factor @ m.exo_matrix() @ factor.T
    return CovarianceMatrix(m.nodes, sigma)


def counterfactual_covariance(m: LinearGaussianSCM, deleted) -> CovarianceMatrix:
    """Covariance of the world in which the given edges are removed: deleted
    directed edges lose their coefficient, deleted bidirected edges their
    exogenous covariance entry.  Noise variances are untouched."""
    deleted = frozenset(_as_edge(e) for e in deleted)
    extra = deleted - m.graph.edges
    if extra:
        raise SpecError(f"edges not in graph: {sorted(map(str, extra))}")
    coeffs = {e: (0.0 if e in deleted else v) for e, v in m.coeffs.items()}
    confound = {e: (0.0 if e in deleted else v) for e, v in m.confound.items()}
    world = LinearGaussianSCM(m.graph, coeffs, m.noise_var, confound, m.avs)
    return covariance(world)


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DataTable:
    """Sampled values, one column per node (latent columns included; CSV
    emission restricts to observed columns)."""

    ids: tuple[str, ...]
    values: np.ndarray
    observed: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_index", {v_: i for i, v_ in enumerate(self.ids)})

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, node: str) -> np.ndarray:
        try:
            return self.values[:, self._index[node]]
        except KeyError:
            raise KeyError(f"no column for {node!r}") from None

    def columns(self, ids) -> np.ndarray:
        return self.values[:, [self._index[v] for v in ids]]

    def restrict(self, ids) -> "DataTable":
        ids = tuple(ids)
        return DataTable(ids, self.columns(ids), self.observed & set(ids))

    def observed_only(self) -> "DataTable":
        return self.restrict([v for v in self.ids if v in self.observed])


def sample(m: LinearGaussianSCM, n: int, seed) -> DataTable:
    """Ancestral sampling in topological order; deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    k = len(m.nodes)
    exo = m.exo_matrix()
    eigval, eigvec = np.linalg.eigh(exo)
    factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    noises = rng.standard_normal((n, k)) @ factor.T
    values = np.zeros((n, k))
    for v in m.order:
        i = m.index_of(v)
        col = noises[:, i].copy()
        for p in sorted(m.graph.parents(v)):
            col += m.coeffs[Edge(p, v)] * values[:, m.index_of(p)]
        values[:, i] = col
    return DataTable(m.nodes, values, m.graph.observed)


# --------------------------------------------------------------------------
# Auxiliary variables
# --------------------------------------------------------------------------


def _star_name(base: str, taken) -> str:
    name = base + "*"
    while name in taken:
        name += "*"
    return name


def estimate_parent_coefficients(graph: CausalGraph, table: DataTable,
                                 heads) -> dict[Edge, float]:
    """Least-squares estimates of the incoming edge coefficients for each
    head node, regressing it on all of its parents."""
    out: dict[Edge, float] = {}
    for v in sorted(set(heads)):
        parents = sorted(graph.parents(v))
        if not parents:
            continue
        missing = [p for p in parents + [v] if p not in table.ids]
        if missing:
            raise UnsupportedError(
                f"cannot estimate coefficients into {v!r}: no data for {missing}")
        x = table.columns(parents)
        beta, *_ = np.linalg.lstsq(x, table.column(v), rcond=None)
        for p, b in zip(parents, beta):
            out[Edge(p, v)] = float(b)
    return out


def extend_with_avs(m: LinearGaussianSCM, deleted, coeffs="exact") -> LinearGaussianSCM:
    """Append one auxiliary node per head of ``deleted``, with structural
    equation ``V* = V - sum(coeff * X)`` over the deleted edges ``X -> V``.

    ``coeffs`` selects the coefficient source: ``"exact"`` (the model's own),
    a :class:`DataTable` (least-squares estimates), or an explicit mapping.
    Deleting a bidirected edge has no auxiliary-variable realisation and is
    rejected.
    """
    deleted = sorted(frozenset(_as_edge(e) for e in deleted))
    for e in deleted:
        if e.kind == BIDIRECTED:
            raise UnsupportedError(
                f"no auxiliary-variable construction for bidirected edge {e}")
        if e not in m.graph.edges:
            raise SpecError(f"edge {e} not in graph")
    if not deleted:
        return m
    heads = sorted({e.head for e in deleted})
    if coeffs == "exact":
        values = {e: m.coeffs[e] for e in deleted}
    elif isinstance(coeffs, DataTable):
        estimates = estimate_parent_coefficients(m.graph, coeffs, heads)
        values = {e: estimates[e] for e in deleted}
    else:
        values = {e: float(dict(coeffs)[e]) for e in deleted}

    g = m.graph
    taken = set(g.nodes)
    nodes = list(g.nodes)
    observed = set(g.observed)
    edges = set(g.edges)
    new_coeffs = dict(m.coeffs)
    noise = dict(m.noise_var)
    defs = list(m.avs)
    for v in heads:
        star = _star_name(v, taken)
        taken.add(star)
        nodes.append(star)
        subtracted = tuple((e.tail, values[e]) for e in deleted if e.head == v)
        carrier = Edge(v, star)
        edges.add(carrier)
        new_coeffs[carrier] = 1.0
        for tail, coeff in subtracted:
            back = Edge(tail, star)
            edges.add(back)
            new_coeffs[back] = -coeff
        noise[star] = 0.0
        if v in observed and all(t in observed for t, _ in subtracted):
            observed.add(star)
        defs.append(AVDefinition(v, star, subtracted))
    graph = CausalGraph(
        nodes=tuple(nodes),
        observed=frozenset(observed),
        edges=frozenset(edges),
        unstable=g.unstable,
        target=g.target,
        context=g.context,
    )
    return LinearGaussianSCM(graph, new_coeffs, noise, m.confound, tuple(defs))


# --------------------------------------------------------------------------
# Predictors
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearPredictor:
    """Fixed linear weights over a feature list; the target is never a
    feature."""

    features: tuple[str, ...]
    weights: np.ndarray
    target: str

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.shape != (len(self.features),):
            raise SpecError("one weight per feature required")
        if self.target in self.features:
            raise SpecError("the target cannot be a feature of its own predictor")

    def weight_of(self, feature: str) -> float:
        return float(self.weights[self.features.index(feature)])

    def predict(self, table: DataTable) -> np.ndarray:
        if not self.features:
            return np.zeros(len(table))
        return table.columns(self.features) @ self.weights


def fit_predictor(sigma: CovarianceMatrix, target: str, features) -> LinearPredictor:
    """Population least squares / conditional-Gaussian weights
    ``S_ff^-1 S_fy``."""
    features = tuple(features)
    sigma.loc(target)
    s_ff = sigma.submatrix(features)
    s_fy = sigma.vector(features, target)
    return LinearPredictor(features, _solve_weights(s_ff, s_fy), target)


def mse(p: LinearPredictor, sigma: CovarianceMatrix) -> float:
    """Exact population mean squared error of fixed weights in the
    environment described by ``sigma``:
    ``var(Y) - 2 beta' S_fy + beta' S_ff beta``."""
    var_y = sigma.var(p.target)
    if not p.features:
        return var_y
    s_fy = sigma.vector(p.features, p.target)
    s_ff = sigma.submatrix(p.features)
    value = var_y - 2.0 * float(p.weights @ s_fy) + float(p.weights @ s_ff @ p.weights)
    if value < 0.0:
        if value < -1e-9 * max(var_y, 1.0):
            raise ModelError(f"negative mean squared error {value:.3e}")
        value = 0.0
    return value


def oracle_predictor(m: LinearGaussianSCM, sigma: CovarianceMatrix | None = None) -> LinearPredictor:
    """The in-environment optimum: regression of the target on every other
    observed variable."""
    if sigma is None:
        sigma = covariance(m)
    features = sorted(v for v in m.graph.observed
                      if v != m.graph.target and v in sigma)
    return fit_predictor(sigma, m.graph.target, features)


# --------------------------------------------------------------------------
# Feature functionals (counterfactual versions as linear maps of the row)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """Named linear functionals of the base nodes, one column per feature."""

    base_ids: tuple[str, ...]
    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_ids", tuple(self.base_ids))
        object.__setattr__(self, "ids", tuple(self.ids))
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.base_ids), len(self.ids)):
            raise SpecError("basis matrix shape mismatch")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_bindex", {v: i for i, v in enumerate(self.base_ids)})

    @classmethod
    def from_nodes(cls, base_ids, features) -> "FeatureBasis":
        base_ids = tuple(base_ids)
        features = tuple(features)
        index = {v: i for i, v in enumerate(base_ids)}
        m = np.zeros((len(base_ids), len(features)))
        for j, f in enumerate(features):
            m[index[f], j] = 1.0
        return cls(base_ids, features, m)

    def with_node(self, node: str) -> "FeatureBasis":
        if node in self.ids:
            return self
        col = np.zeros((len(self.base_ids), 1))
        col[self._bindex[node], 0] = 1.0
        return FeatureBasis(self.base_ids, self.ids + (node,),
                            np.hstack([self.matrix, col]))

    def support(self, tol: float = 1e-12) -> frozenset[str]:
        hit = np.any(np.abs(self.matrix) > tol, axis=1)
        return frozenset(v for v, h in zip(self.base_ids, hit) if h)

    def moments(self, sigma: CovarianceMatrix, target: str) -> tuple[np.ndarray, np.ndarray]:
        base = sigma.submatrix(self.base_ids)
        e_y = np.zeros(len(self.base_ids))
        e_y[self._bindex[target]] = 1.0
        s_ff = self.matrix.T @ base @ self.matrix
        s_fy = self.matrix.T @ base @ e_y
        return s_ff, s_fy

    def fit(self, sigma: CovarianceMatrix, target: str) -> np.ndarray:
        s_ff, s_fy = self.moments(sigma, target)
        return _solve_weights(s_ff, s_fy)

    def compose(self, weights) -> np.ndarray:
        return self.matrix @ np.asarray(weights, dtype=float)

    def compose_predictor(self, weights, target: str, *, tol: float = 1e-9) -> LinearPredictor:
        """Flatten weighted functionals into one weight vector over the base
        nodes; refuses to silently use the target's own value."""
        vec = self.compose(weights)
        scale = max(float(np.max(np.abs(vec))), 1.0)
        ti = self._bindex[target]
        if abs(vec[ti]) > tol * scale:
            raise SpecError("composed predictor would read the target's own value")
        features = tuple(v for i, v in enumerate(self.base_ids) if i != ti)
        values = np.delete(vec, ti)
        return LinearPredictor(features, values, target)

    def values(self, table: DataTable) -> np.ndarray:
        return table.columns(self.base_ids) @ self.matrix

    def predict(self, table: DataTable, weights) -> np.ndarray:
        return self.values(table) @ np.asarray(weights, dtype=float)


def counterfactual_functionals(m: LinearGaussianSCM, deleted) -> FeatureBasis:
    """Each node's value in the world where the given directed edges are
    removed, written as a linear functional of the factual node values
    (reference value 0)."""
    deleted = frozenset(_as_edge(e) for e in deleted)
    for e in deleted:
        if e.kind == BIDIRECTED:
            raise UnsupportedError(
                f"no value-level realisation for deleting bidirected edge {e}")
        if e not in m.graph.edges:
            raise SpecError(f"edge {e} not in graph")
    n = len(m.nodes)
    lam = m.coefficient_matrix()
    lam_deleted = lam.copy()
    delta = np.zeros((n, n))
    for e in deleted:
        i, j = m.index_of(e.tail), m.index_of(e.head)
        delta[i, j] = lam[i, j]
        lam_deleted[i, j] = 0.0
    # deleted-world value = R @ factual, R = I - (I - L_d^T)^-1 Delta^T
    r = np.eye(n) - np.linalg.inv(np.eye(n) - lam_deleted.T) @ delta.T
    return FeatureBasis(m.nodes, m.nodes, r.T)


# --------------------------------------------------------------------------
# Predictors for hierarchy specs
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FittedSpec:
    """A spec realised as deployable weights over the factual features.

    Weights are fit in the spec's deleted-edge world and applied to factual
    values; for stable specs this reproduces the counterfactual conditional
    exactly (verified in the test suite).  ``mse_invariant`` reports a probe
    over the unstable coefficients: whether this realisation's risk is exactly
    flat across environments.
    """

    spec: PredictorSpec
    predictor: LinearPredictor
    feature_labels: tuple[str, ...]
    verdict: StabilityVerdict
    mse_invariant: bool


def _probe_invariance(m: LinearGaussianSCM, p: LinearPredictor, *, tol: float = 1e-8) -> bool:
    varied = sorted(e for e in m.graph.unstable if e.kind == DIRECTED)
    if not varied:
        return True
    seen = []
    for offset in (-7.7, -1.3, 0.0, 1.9, 11.0):
        env = m.with_coefficients({e: m.coeffs[e] + offset for e in varied})
        seen.append(mse(p, covariance(env)))
    spread = max(seen) - min(seen)
    return bool(spread <= tol * max(max(seen), 1e-30))


def predictor_for_spec(m: LinearGaussianSCM, spec: PredictorSpec,
                       coeff_source="exact") -> FittedSpec:
    """Population predictor realising a hierarchy spec.

    The weights are the regression of the target on the spec's features in
    the covariance of the deleted-edge world, applied to factual feature
    values.  ``coeff_source`` may be ``"exact"`` or a :class:`DataTable`, in
    which case all structural coefficients are first estimated from the data.
    An unstable spec is still computable but raises a warning.
    """
    spec.validate(m.graph)
    verdict = stable_for_spec(m.graph, spec)
    if not verdict.stable:
        warnings.warn(f"spec is not stable: {spec.describe()}", stacklevel=2)
    model = m if coeff_source == "exact" else fit_scm_from_data(m.graph, coeff_source)
    sigma_world = counterfactual_covariance(model, spec.deleted_edges)
    features = spec.sorted_features
    predictor = fit_predictor(sigma_world, spec.target, features)
    affected = spec.counterfactual_features()
    labels = tuple(f"{v}*" if v in affected else v for v in features)
    return FittedSpec(spec, predictor, labels, verdict,
                      _probe_invariance(m, predictor))


def fit_scm_from_data(graph: CausalGraph, table: DataTable) -> LinearGaussianSCM:
    """Estimate a model on a known graph: per-node least squares on the
    parents, residual variances, and residual covariances on the bidirected
    support.  Needs a column for every node."""
    missing = [v for v in graph.nodes if v not in table.ids]
    if missing:
        raise UnsupportedError(f"cannot estimate a model without columns for {missing}")
    coeffs = estimate_parent_coefficients(graph, table, [v for v in graph.nodes
                                                         if graph.parents(v)])
    residuals = {}
    for v in graph.nodes:
        col = table.column(v).copy()
        for p in sorted(graph.parents(v)):
            col = col - coeffs[Edge(p, v)] * table.column(p)
        residuals[v] = col
    noise = {v: float(np.mean(residuals[v] ** 2)) for v in graph.nodes}
    confound = {e: float(np.mean(residuals[e.tail] * residuals[e.head]))
                for e in graph.bidirected_edges}
    return LinearGaussianSCM(graph, coeffs, noise, confound)


# --------------------------------------------------------------------------
# Deployable stable feature sets
# --------------------------------------------------------------------------


def stable_feature_basis(m: LinearGaussianSCM, spec: PredictorSpec) -> FeatureBasis:
    """A deployable feature set spanning the spec's stable information.

    Features whose deleted-world version would have to read the target or a
    latent variable are dropped, and their direct contributions are instead
    subtracted out of every remaining feature (the auxiliary-variable trick).
    If the resulting set cannot reproduce the spec's predictor exactly, the
    basis falls back to the single composed stable-prediction functional,
    which always can.
    """
    g = m.graph
    y = spec.target
    fitted = predictor_for_spec(m, spec)
    composite = np.zeros(len(m.nodes))
    for f, w in zip(fitted.predictor.features, fitted.predictor.weights):
        composite[m.index_of(f)] = w
    fallback = FeatureBasis(m.nodes, (f"stable[{y}]",), composite[:, None])

    usable = g.observed - {y}
    tainted: set[str] = set()
    clean: list[Edge] = []
    realizable = True
    for e in sorted(spec.deleted_edges):
        if e.kind == DIRECTED:
            if e.tail in usable:
                clean.append(e)
            else:
                # the head's value cannot be repaired without reading the
                # target or a latent; drop it and purge its contributions
                tainted.add(e.head)
        else:
            a, b = e.endpoints
            if a in usable and b in usable:
                realizable = False
            else:
                tainted.update(v for v in e.endpoints if v in usable)
    purge = frozenset(clean) | frozenset(
        e for e in g.directed_edges if e.tail in tainted)
    kept = [f for f in spec.sorted_features if f not in tainted]

    basis = fallback
    if realizable:
        functionals = counterfactual_functionals(m, purge)
        cols = []
        names = []
        for f in kept:
            col = functionals.matrix[:, m.index_of(f)]
            plain = np.zeros_like(col)
            plain[m.index_of(f)] = 1.0
            names.append(f if np.allclose(col, plain) else _star_name(f, set(m.nodes)))
            cols.append(col)
        candidate = FeatureBasis(
            m.nodes, tuple(names),
            np.stack(cols, axis=1) if cols else np.zeros((len(m.nodes), 0)))
        if candidate.support() <= usable:
            beta = candidate.fit(covariance(m), y)
            got = candidate.compose(beta)
            scale = max(float(np.max(np.abs(composite))), 1.0)
            if np.max(np.abs(got - composite)) <= 1e-8 * scale:
                basis = candidate
    return basis
