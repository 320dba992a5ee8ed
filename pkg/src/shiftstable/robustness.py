"""Monte Carlo evaluation of predictors across environments.

An environment prior places a distribution on each unstable directed-edge
coefficient; draws from the prior induce exact covariance matrices, so every
per-environment mean squared error is closed form.  On top of that sit the
average-regret / worst-case report, greedy stepwise reincorporation of
unstable features, and the spread sweep that traces how the stable /
unstable / stepwise choices trade off as the prior widens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SpecError, UnsupportedError
from .graphs import DIRECTED, Edge
from .hierarchy import optimal_stable
from .scm import (
    CovarianceMatrix,
    FeatureBasis,
    LinearGaussianSCM,
    LinearPredictor,
    _solve_weights,
    covariance,
    fit_predictor,
    mse,
    oracle_predictor,
    predictor_for_spec,
    stable_feature_basis,
)

IMPROVEMENT_TOL = 1e-12
REGRET_TOL = 1e-9


@dataclass(frozen=True)
class CoefficientPrior:
    """Distribution of one unstable coefficient: ``fixed``, ``normal`` with
    the source value as mean, or ``uniform_sign`` (magnitude uniform on
    [lo, hi] with a random sign)."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    def draw(self, source_value: float, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.a
        if self.kind == "normal":
            return float(rng.normal(source_value, self.a))
        if self.kind == "uniform_sign":
            sign = 1.0 if rng.random() < 0.5 else -1.0
            return sign * float(rng.uniform(self.a, self.b))
        raise SpecError(f"unknown prior kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class EnvironmentPrior:
    """Per-unstable-edge coefficient distributions around a source model."""

    source: LinearGaussianSCM
    per_edge: dict[Edge, CoefficientPrior]
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "per_edge", dict(self.per_edge))
        unstable = self.source.graph.unstable
        for e in unstable:
            if e.kind != DIRECTED:
                raise UnsupportedError(
                    f"priors over unstable bidirected edges are unsupported ({e})")
        if set(self.per_edge) != set(unstable):
            raise SpecError("prior must cover exactly the unstable edges")
        if self.sigma < 0:
            raise SpecError("spread must be nonnegative")

    @classmethod
    def normal(cls, source: LinearGaussianSCM, sigma: float) -> "EnvironmentPrior":
        """Normal priors centred at each unstable coefficient's source value."""
        per_edge = {e: CoefficientPrior("normal", float(sigma))
                    for e in source.graph.unstable}
        return cls(source, per_edge, float(sigma))

    @classmethod
    def point(cls, source: LinearGaussianSCM) -> "EnvironmentPrior":
        per_edge = {e: CoefficientPrior("fixed", source.coeffs[e])
                    for e in source.graph.unstable}
        return cls(source, per_edge, 0.0)

    def draw(self, n: int, seed) -> list["EnvironmentDraw"]:
        """Deterministic per seed; each draw's covariance is computed once."""
        if n < 1:
            raise ValueError("need at least one draw")
        rng = np.random.default_rng(seed)
        edges = sorted(self.per_edge)
        out = []
        for _ in range(n):
            assignment = {e: self.per_edge[e].draw(self.source.coeffs[e], rng)
                          for e in edges}
            model = self.source.with_coefficients(assignment)
            out.append(EnvironmentDraw(tuple(sorted(assignment.items())),
                                       model, covariance(model)))
        return out


@dataclass(frozen=True, eq=False)
class EnvironmentDraw:
    """One instantiation of the graph: differs from the source only on the
    unstable-edge coefficients."""

    assignment: tuple[tuple[Edge, float], ...]
    scm: LinearGaussianSCM
    sigma: CovarianceMatrix


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-environment and aggregate risk for a set of fixed predictors."""

    names: tuple[str, ...]
    mse: np.ndarray            # (n_predictors, n_envs)
    oracle_mse: np.ndarray     # (n_envs,)
    n_envs: int
    seed: int | None = None

    @property
    def avg_mse(self) -> np.ndarray:
        return self.mse.mean(axis=1)

    @property
    def avg_regret(self) -> np.ndarray:
        return (self.mse - self.oracle_mse[None, :]).mean(axis=1)

    @property
    def max_mse(self) -> np.ndarray:
        return self.mse.max(axis=1)

    def row(self, name: str) -> dict[str, float]:
        i = self.names.index(name)
        return {
            "avg_mse": float(self.avg_mse[i]),
            "avg_regret": float(self.avg_regret[i]),
            "max_mse": float(self.max_mse[i]),
        }


def evaluate(predictors, envs, *, seed: int | None = None) -> EvalReport:
    """Closed-form risk of each fixed predictor in every environment, with
    the oracle refit per environment for the regret column.

    ``predictors`` maps names to :class:`LinearPredictor` values over base
    graph nodes (pass a dict; insertion order is kept).
    """
    if not isinstance(predictors, dict):
        predictors = {f"p{i}": p for i, p in enumerate(predictors)}
    names = tuple(predictors)
    envs = list(envs)
    if not envs:
        raise ValueError("need at least one environment")
    grid = np.zeros((len(names), len(envs)))
    oracle = np.zeros(len(envs))
    for j, env in enumerate(envs):
        o = oracle_predictor(env.scm, env.sigma)
        oracle[j] = mse(o, env.sigma)
        for i, name in enumerate(names):
            grid[i, j] = mse(predictors[name], env.sigma)
    worst = float((grid - oracle[None, :]).min(initial=0.0))
    if worst < -REGRET_TOL:
        raise ModelError(f"regret {worst:.3e} below the oracle floor; "
                         "a predictor beat the per-environment optimum")
    return EvalReport(names, grid, oracle, len(envs), seed)


# --------------------------------------------------------------------------
# Stepwise reincorporation of unstable features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    step: int
    scores: tuple[tuple[str, float], ...]
    chosen: str | None
    expected_mse: float


@dataclass(frozen=True, eq=False)
class StepwiseResult:
    features: tuple[str, ...]
    weights: np.ndarray
    predictor: LinearPredictor
    trace: tuple[StepRecord, ...]


def _fit_in_mode(basis: FeatureBasis, target: str, mode: str,
                 source_sigma: CovarianceMatrix, draws) -> np.ndarray:
    if mode == "source":
        return basis.fit(source_sigma, target)
    if mode == "prior-optimal":
        s_ff = None
        s_fy = None
        for d in draws:
            ff, fy = basis.moments(d.sigma, target)
            s_ff = ff if s_ff is None else s_ff + ff
            s_fy = fy if s_fy is None else s_fy + fy
        return _solve_weights(s_ff / len(draws), s_fy / len(draws))
    raise SpecError(f"unknown weights mode {mode!r}")


def _expected_mse(basis: FeatureBasis, weights, target: str, draws) -> float:
    p = basis.compose_predictor(weights, target)
    return float(np.mean([mse(p, d.sigma) for d in draws]))


def stepwise_reincorporation(prior: EnvironmentPrior, stable_features,
                             candidates, n_mc: int, seed, *,
                             weights_mode: str = "source",
                             fitting_sigma: CovarianceMatrix | None = None) -> StepwiseResult:
    """Greedy forward selection of factual features on top of a stable set.

    Every candidate is scored by expected mean squared error over one fixed
    set of environment draws (common random numbers); the loop stops when no
    candidate strictly improves the estimate.  Ties break on the candidate
    id, so traces are deterministic.  ``fitting_sigma`` substitutes an
    estimated covariance for the source-environment fits.
    """
    source = prior.source
    target = source.graph.target
    if isinstance(stable_features, FeatureBasis):
        basis = stable_features
    else:
        basis = FeatureBasis.from_nodes(source.nodes, tuple(stable_features))
    remaining = sorted(set(candidates) - set(basis.ids))
    if target in remaining:
        raise SpecError("the target cannot be a candidate feature")
    draws = prior.draw(n_mc, seed)
    source_sigma = covariance(source) if fitting_sigma is None else fitting_sigma

    weights = _fit_in_mode(basis, target, weights_mode, source_sigma, draws)
    current = _expected_mse(basis, weights, target, draws)
    trace = [StepRecord(0, (), None, current)]
    step = 0
    while remaining:
        step += 1
        scored = []
        for c in remaining:
            trial = basis.with_node(c)
            w = _fit_in_mode(trial, target, weights_mode, source_sigma, draws)
            scored.append((c, _expected_mse(trial, w, target, draws)))
        best_c, best_score = min(scored, key=lambda cs: (cs[1], cs[0]))
        if best_score < current - IMPROVEMENT_TOL:
            basis = basis.with_node(best_c)
            weights = _fit_in_mode(basis, target, weights_mode, source_sigma, draws)
            current = _expected_mse(basis, weights, target, draws)
            remaining.remove(best_c)
            trace.append(StepRecord(step, tuple(scored), best_c, current))
        else:
            trace.append(StepRecord(step, tuple(scored), None, current))
            break
    return StepwiseResult(basis.ids, weights,
                          basis.compose_predictor(weights, target),
                          tuple(trace))


# --------------------------------------------------------------------------
# Spread sweep: the stability / performance tradeoff
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    sigma: float
    predictor: str
    avg_mse: float
    avg_regret: float
    max_mse: float
    n_envs: int
    seed: int


@dataclass(frozen=True, eq=False)
class TradeoffResult:
    rows: tuple[SweepRow, ...]
    meta: dict
    traces: tuple[tuple[float, tuple[StepRecord, ...]], ...]


def tradeoff_sweep(source: LinearGaussianSCM, sigma_grid, n_mc: int, seed: int,
                   *, weights_mode: str = "source",
                   fitting_model: LinearGaussianSCM | None = None) -> TradeoffResult:
    """For each prior spread: draw environments, evaluate the stable,
    source-oracle (unstable) and stepwise predictors, and report average
    risk, average regret and worst-case risk.

    Environments always instantiate the true ``source``; passing an
    estimated ``fitting_model`` makes every predictor use estimated
    coefficients instead of the true ones.
    """
    sigma_grid = [float(s) for s in sigma_grid]
    if not sigma_grid:
        raise SpecError("spread grid is empty")
    target = source.graph.target
    fitting = source if fitting_model is None else fitting_model
    spec = optimal_stable(source.graph)
    stable = predictor_for_spec(fitting, spec)
    basis = stable_feature_basis(fitting, spec)
    fitting_sigma = covariance(fitting)
    unstable = oracle_predictor(fitting, fitting_sigma)
    factual_kept = set(basis.ids) & set(source.nodes)
    candidates = sorted(source.graph.observed - {target} - factual_kept)

    master = np.random.SeedSequence(seed)
    children = master.spawn(len(sigma_grid))
    rows: list[SweepRow] = []
    traces = []
    for child, s in zip(children, sigma_grid):
        prior = EnvironmentPrior.normal(source, s)
        draws = prior.draw(n_mc, child)
        stepped = stepwise_reincorporation(prior, basis, candidates, n_mc, child,
                                           weights_mode=weights_mode,
                                           fitting_sigma=fitting_sigma)
        report = evaluate(
            {"stable": stable.predictor, "unstable": unstable,
             "stepwise": stepped.predictor},
            draws, seed=seed)
        for name in report.names:
            r = report.row(name)
            rows.append(SweepRow(s, name, r["avg_mse"], r["avg_regret"],
                                 r["max_mse"], n_mc, seed))
        traces.append((s, stepped.trace))
    meta = {
        "seed": seed,
        "n_mc": n_mc,
        "weights_mode": weights_mode,
        "sigma_grid": sigma_grid,
        "stable_features": list(basis.ids),
        "candidates": candidates,
        "stepwise_recomputed_per_sigma": True,
        "stable_mse_invariant": stable.mse_invariant,
        "coefficients_estimated": fitting_model is not None,
    }
    return TradeoffResult(tuple(rows), meta, tuple(traces))


# --------------------------------------------------------------------------
# Single-coefficient sweep (fixed predictors against a moving environment)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaSweepRow:
    value: float
    oracle_mse: float
    stable_mse: float
    unstable_fixed_mse: float


@dataclass(frozen=True, eq=False)
class LambdaSweepResult:
    edge: Edge
    source_value: float
    rows: tuple[LambdaSweepRow, ...]
    crossover: tuple[float, float] | None

    def as_meta(self) -> dict:
        return {
            "edge": {"tail": self.edge.tail, "head": self.edge.head},
            "source_value": self.source_value,
            "crossover_lo": None if self.crossover is None else self.crossover[0],
            "crossover_hi": None if self.crossover is None else self.crossover[1],
        }


def coefficient_sweep(source: LinearGaussianSCM, grid, edge: Edge | None = None) -> LambdaSweepResult:
    """Exact oracle / stable / source-fit risk as one unstable coefficient
    moves across ``grid``.  ``edge`` may be omitted when the model has
    exactly one unstable edge."""
    unstable = sorted(e for e in source.graph.unstable if e.kind == DIRECTED)
    if edge is None:
        if len(unstable) != 1:
            raise SpecError(
                f"{len(unstable)} unstable directed edges; pick one explicitly")
        edge = unstable[0]
    elif edge not in source.graph.unstable:
        raise SpecError(f"{edge} is not an unstable edge of the model")
    spec = optimal_stable(source.graph)
    stable = predictor_for_spec(source, spec).predictor
    unstable_fixed = oracle_predictor(source)
    rows = []
    for value in grid:
        env = source.with_coefficients({edge: float(value)})
        sigma = covariance(env)
        rows.append(LambdaSweepRow(
            float(value),
            mse(oracle_predictor(env, sigma), sigma),
            mse(stable, sigma),
            mse(unstable_fixed, sigma),
        ))
    beats = [r.value for r in rows if r.unstable_fixed_mse < r.stable_mse]
    crossover = (min(beats), max(beats)) if beats else None
    return LambdaSweepResult(edge, source.coeffs[edge], tuple(rows), crossover)
