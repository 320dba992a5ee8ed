"""Small named graphs and models used by the docs, demos and tests.

Each one illustrates a different failure or repair mode:

* ``icu_admission_graph`` — the classic triage story: admission policy makes
  the asthma -> ICU mechanism unstable, so a mortality model that cannot see
  ICU status learns a dangerously inverted asthma effect.
* ``latent_style_graph`` — a latent department variable styles the input
  images; conditioning on anything downstream opens the unstable path, but
  intervening on the style feature closes it.
* ``confounded_child_graph`` — the target's child is both caused by the
  target (unstably) and confounded with it; deleting the single directed
  edge keeps the confounder information that an intervention would throw
  away.
* ``triangle_graph`` / ``triangle_scm`` — the three-node family used by all
  the risk experiments: the target drives one feature through an unstable
  edge and another through a stable one.
"""

from __future__ import annotations

import numpy as np

from .graphs import CausalGraph
from .scm import DEFAULT_NOISE_VAR, LinearGaussianSCM, linear_scm


def icu_admission_graph(icu_observed: bool = True) -> CausalGraph:
    edges = [
        ("Asthma", "ICU"),
        ("Asthma", "Pneumonia"),
        ("Asthma", "Mortality"),
        ("ICU", "Mortality"),
        ("Pneumonia", "Mortality"),
    ]
    return CausalGraph.build(
        nodes=("Asthma", "ICU", "Pneumonia", "Mortality"),
        edges=edges,
        target="Mortality",
        latent=() if icu_observed else ("ICU",),
        unstable=[("Asthma", "ICU")],
    )


def latent_style_graph() -> CausalGraph:
    return CausalGraph.build(
        nodes=("W", "X", "Y", "Z"),
        edges=[("W", "X"), ("W", "Y"), ("Y", "Z"), ("X", "Z")],
        target="Y",
        latent=("W",),
        unstable=[("W", "X")],
    )


def confounded_child_graph() -> CausalGraph:
    return CausalGraph.build(
        nodes=("X", "Y", "Z"),
        edges=[("X", "Y"), ("Y", "Z"), ("Y", "Z", "<->")],
        target="Y",
        unstable=[("Y", "Z")],
    )


def triangle_graph() -> CausalGraph:
    return CausalGraph.build(
        nodes=("Y", "X", "Z"),
        edges=[("Y", "X"), ("Y", "Z"), ("X", "Z")],
        target="Y",
        unstable=[("Y", "X")],
    )


def triangle_scm(unstable_coeff: float = 5.0, target_side: float = 1.0,
                 cross: float = 1.0, noise_var: float = DEFAULT_NOISE_VAR) -> LinearGaussianSCM:
    g = triangle_graph()
    return linear_scm(
        g,
        coeffs={("Y", "X"): unstable_coeff, ("Y", "Z"): target_side,
                ("X", "Z"): cross},
        noise={v: noise_var for v in g.nodes},
    )


def random_triangle_scm(seed) -> LinearGaussianSCM:
    """Random instance of the triangle family: the unstable coefficient's
    magnitude is uniform on [2, 4] and the stable ones on [0.1, 2], each with
    a random sign; noise variance 0.01."""
    rng = np.random.default_rng(seed)

    def signed(lo, hi):
        return float(rng.uniform(lo, hi)) * (1.0 if rng.random() < 0.5 else -1.0)

    return triangle_scm(signed(2.0, 4.0), signed(0.1, 2.0), signed(0.1, 2.0))


GRAPH_PRESETS = {
    "icu-admission": icu_admission_graph,
    "latent-style": latent_style_graph,
    "confounded-child": confounded_child_graph,
    "triangle": triangle_graph,
}
