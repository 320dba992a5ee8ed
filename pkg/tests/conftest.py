import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shiftstable import linear_scm
from shiftstable.presets import (
    confounded_child_graph,
    icu_admission_graph,
    latent_style_graph,
    triangle_graph,
    triangle_scm,
)


@pytest.fixture
def icu_graph():
    return icu_admission_graph()


@pytest.fixture
def style_graph():
    return latent_style_graph()


@pytest.fixture
def child_graph():
    return confounded_child_graph()


@pytest.fixture
def triangle():
    return triangle_scm()


@pytest.fixture
def style_scm(style_graph):
    return linear_scm(
        style_graph,
        {("W", "X"): 1.5, ("W", "Y"): 1.0, ("Y", "Z"): 1.0, ("X", "Z"): 0.8},
        noise={v: 1.0 for v in style_graph.nodes},
    )


@pytest.fixture
def child_scm(child_graph):
    return linear_scm(
        child_graph,
        {("X", "Y"): 1.0, ("Y", "Z"): 2.0},
        noise={v: 1.0 for v in child_graph.nodes},
        confound={("Y", "Z", "<->"): 0.5},
    )
