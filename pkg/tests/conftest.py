import numpy as np
import pytest

from optim.netgraph import complete_graph, erdos_renyi, metropolis_weights, mixing_matrix
from optim.problems import gen_regression_instance


def mix_for(graph, c=1.0 / 3.0):
    return mixing_matrix(metropolis_weights(graph), c)


def random_start(prob, seed=1):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((prob.m, prob.dim)), rng.standard_normal((prob.m, prob.dim))


@pytest.fixture
def lasso():
    """m=5, d=10 least squares with ridge terms and an l1 weight of 0.1."""
    return gen_regression_instance(5, 20, 10, lam=0.1, seed=0)


@pytest.fixture
def er_graph():
    return erdos_renyi(5, 0.6, 0)


@pytest.fixture
def er_mix(er_graph):
    return mix_for(er_graph)


@pytest.fixture
def complete5():
    return complete_graph(5)


@pytest.fixture
def lasso_cfg(tmp_path):
    path = tmp_path / "lasso.cfg"
    path.write_text(
        "[graph]\nm = 5\np = 0.6\nseed = 0\n\n"
        "[problem]\nkind = elastic_net\nn = 20\nd = 10\nlam = 0.1\nseed = 0\n\n"
        "[solver]\nname = global_datos\niters = 50\nseed = 1\n\n"
        f"[output]\nout = {tmp_path / 'out'}\n",
        encoding="utf-8",
    )
    return path
