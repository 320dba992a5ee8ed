"""File formats: graph/SCM/spec JSON and the CSV outputs.

Every CSV the package writes can be read back by the matching reader here,
and all output files are written atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graphs import BIDIRECTED, DIRECTED, CausalGraph, Edge
from .hierarchy import PredictorSpec
from .scm import DEFAULT_NOISE_VAR, DataTable, LinearGaussianSCM, linear_scm


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing {key!r}")
    return obj[key]


# --------------------------------------------------------------------------
# Graph JSON
# --------------------------------------------------------------------------


def _edge_from_dict(entry: dict, where: str) -> tuple[Edge, bool]:
    tail = _need(entry, "tail", where)
    head = _need(entry, "head", where)
    kind = entry.get("kind", DIRECTED)
    if kind not in (DIRECTED, BIDIRECTED):
        raise ParseError(f"{where}: unknown edge kind {kind!r}")
    return Edge(tail, head, kind), bool(entry.get("unstable", False))


def graph_from_dict(data: dict) -> CausalGraph:
    nodes = []
    observed = set()
    for entry in _need(data, "nodes", "graph"):
        node = _need(entry, "id", "graph node")
        nodes.append(node)
        if entry.get("observed", True):
            observed.add(node)
    edges = set()
    unstable = set()
    for entry in _need(data, "edges", "graph"):
        edge, is_unstable = _edge_from_dict(entry, "graph edge")
        edges.add(edge)
        if is_unstable:
            unstable.add(edge)
    try:
        return CausalGraph(
            nodes=tuple(nodes),
            observed=frozenset(observed),
            edges=frozenset(edges),
            unstable=frozenset(unstable),
            target=_need(data, "target", "graph"),
        )
    except ValueError as exc:
        raise ParseError(f"graph: {exc}") from exc


def graph_to_dict(g: CausalGraph) -> dict:
    return {
        "nodes": [{"id": v, "observed": v in g.observed} for v in g.nodes],
        "edges": [
            {"tail": e.tail, "head": e.head, "kind": e.kind,
             "unstable": e in g.unstable}
            for e in sorted(g.edges)
        ],
        "target": g.target,
    }


def load_graph(source) -> CausalGraph:
    return graph_from_dict(_load_json(source))


def save_graph(g: CausalGraph, path) -> None:
    atomic_write_text(path, json.dumps(graph_to_dict(g), indent=2) + "\n")


# --------------------------------------------------------------------------
# SCM JSON
# --------------------------------------------------------------------------


def scm_from_dict(data: dict) -> LinearGaussianSCM:
    g = graph_from_dict(data)
    coeffs = {}
    for entry in data.get("coefficients", []):
        e = Edge(_need(entry, "tail", "coefficient"), _need(entry, "head", "coefficient"))
        coeffs[e] = float(_need(entry, "value", "coefficient"))
    missing = sorted(str(e) for e in g.directed_edges if e not in coeffs)
    if missing:
        raise ParseError(f"scm: no coefficient for directed edges {missing}")
    noise = {}
    for entry in data.get("noise", []):
        noise[_need(entry, "node", "noise")] = float(_need(entry, "var", "noise"))
    confound = {}
    for entry in data.get("exo_cov", []):
        e = Edge(_need(entry, "a", "exo_cov"), _need(entry, "b", "exo_cov"), BIDIRECTED)
        confound[e] = float(_need(entry, "value", "exo_cov"))
    missing = sorted(str(e) for e in g.bidirected_edges if e not in confound)
    if missing:
        raise ParseError(f"scm: no exo_cov entry for bidirected edges {missing}")
    try:
        return linear_scm(g, coeffs, noise, confound)
    except ValueError as exc:
        raise ParseError(f"scm: {exc}") from exc


def scm_to_dict(m: LinearGaussianSCM) -> dict:
    data = graph_to_dict(m.graph)
    data["coefficients"] = [
        {"tail": e.tail, "head": e.head, "value": v}
        for e, v in sorted(m.coeffs.items())
    ]
    data["noise"] = [{"node": v, "var": m.noise_var[v]} for v in m.nodes]
    data["exo_cov"] = [
        {"a": e.tail, "b": e.head, "value": v}
        for e, v in sorted(m.confound.items())
    ]
    return data


def load_scm(source) -> LinearGaussianSCM:
    return scm_from_dict(_load_json(source))


def save_scm(m: LinearGaussianSCM, path) -> None:
    atomic_write_text(path, json.dumps(scm_to_dict(m), indent=2) + "\n")


# --------------------------------------------------------------------------
# PredictorSpec JSON
# --------------------------------------------------------------------------


def spec_from_dict(data: dict, g: CausalGraph) -> PredictorSpec:
    level = int(_need(data, "level", "spec"))
    deleted = set()
    for entry in data.get("deleted_edges", []):
        edge, _ = _edge_from_dict(entry, "spec deleted edge")
        deleted.add(edge)
    spec = PredictorSpec(
        level=level,
        conditioning=frozenset(data.get("conditioning", [])),
        interventions=frozenset(data.get("interventions", [])),
        deleted_edges=frozenset(deleted),
        target=data.get("target", g.target),
    )
    spec.validate(g)
    return spec


def spec_to_dict(spec: PredictorSpec) -> dict:
    return {
        "level": spec.level,
        "conditioning": sorted(spec.conditioning),
        "interventions": sorted(spec.interventions),
        "deleted_edges": [
            {"tail": e.tail, "head": e.head, "kind": e.kind}
            for e in sorted(spec.deleted_edges)
        ],
        "target": spec.target,
    }


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def write_csv(path, header, rows) -> None:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def write_data_csv(path, table: DataTable, *, include_latent: bool = False) -> None:
    shown = table if include_latent else table.observed_only()
    write_csv(path, shown.ids,
              ([float(x) for x in row] for row in shown.values))


def read_data_csv(path) -> DataTable:
    header, rows = read_csv(path)
    try:
        values = np.array([[float(x) for x in row] for row in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric cell ({exc})") from exc
    if values.size == 0:
        raise ParseError(f"{path}: no data rows")
    return DataTable(tuple(header), values, frozenset(header))


SWEEP_HEADER = ["lambda", "oracle_mse", "stable_mse", "unstable_fixed_mse"]


def write_sweep_csv(path, result) -> None:
    write_csv(path, SWEEP_HEADER,
              ([r.value, r.oracle_mse, r.stable_mse, r.unstable_fixed_mse]
               for r in result.rows))


def read_sweep_csv(path) -> list[dict[str, float]]:
    header, rows = read_csv(path)
    if header != SWEEP_HEADER:
        raise ParseError(f"{path}: unexpected header {header}")
    return [dict(zip(header, map(float, row))) for row in rows]


TRADEOFF_HEADER = ["sigma", "predictor", "avg_mse", "avg_regret", "max_mse",
                   "n_envs", "seed"]


def write_tradeoff_csv(path, rows) -> None:
    write_csv(path, TRADEOFF_HEADER,
              ([r.sigma, r.predictor, r.avg_mse, r.avg_regret, r.max_mse,
                r.n_envs, r.seed] for r in rows))


def read_tradeoff_csv(path) -> list[dict]:
    header, rows = read_csv(path)
    if header != TRADEOFF_HEADER:
        raise ParseError(f"{path}: unexpected header {header}")
    out = []
    for row in rows:
        rec = dict(zip(header, row))
        for key in ("sigma", "avg_mse", "avg_regret", "max_mse"):
            rec[key] = float(rec[key])
        rec["n_envs"] = int(rec["n_envs"])
        rec["seed"] = int(rec["seed"])
        out.append(rec)
    return out


TRACE_HEADER = ["sigma", "step", "candidate", "expected_mse", "chosen"]


def write_trace_csv(path, traces) -> None:
    def rows():
        for sigma, trace in traces:
            for rec in trace:
                if rec.step == 0:
                    yield [sigma, 0, "", rec.expected_mse, ""]
                    continue
                for candidate, score in rec.scores:
                    yield [sigma, rec.step, candidate, score,
                           "yes" if candidate == rec.chosen else "no"]

    write_csv(path, TRACE_HEADER, rows())


def read_trace_csv(path) -> list[dict]:
    header, rows = read_csv(path)
    if header != TRACE_HEADER:
        raise ParseError(f"{path}: unexpected header {header}")
    out = []
    for row in rows:
        rec = dict(zip(header, row))
        rec["sigma"] = float(rec["sigma"])
        rec["step"] = int(rec["step"])
        rec["expected_mse"] = float(rec["expected_mse"])
        out.append(rec)
    return out


HIERARCHY_HEADER = ["level", "kind", "conditioning", "interventions",
                    "deleted_edges", "n_retained_stable_paths",
                    "n_missing_vs_optimal"]


def _join(items) -> str:
    return "|".join(items)


def write_hierarchy_csv(path, report) -> None:
    def spec_row(spec, kind, retained, missing):
        return [
            spec.level,
            kind,
            _join(sorted(spec.conditioning)),
            _join(sorted(spec.interventions)),
            _join(str(e) for e in sorted(spec.deleted_edges)),
            len(retained),
            len(missing),
        ]

    def rows():
        for spec, retained in report.retained:
            yield spec_row(spec, "enumerated", retained,
                           report.missing_vs_optimal(spec))
        yield spec_row(report.optimal, "optimal", report.optimal_retained, ())

    write_csv(path, HIERARCHY_HEADER, rows())


def read_hierarchy_csv(path) -> list[dict]:
    header, rows = read_csv(path)
    if header != HIERARCHY_HEADER:
        raise ParseError(f"{path}: unexpected header {header}")
    out = []
    for row in rows:
        rec = dict(zip(header, row))
        rec["level"] = int(rec["level"])
        rec["n_retained_stable_paths"] = int(rec["n_retained_stable_paths"])
        rec["n_missing_vs_optimal"] = int(rec["n_missing_vs_optimal"])
        out.append(rec)
    return out
