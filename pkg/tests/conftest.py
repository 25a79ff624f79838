import itertools

import numpy as np
import pytest

from pathmon.data_io import SyntheticConfig, estimate_diag_covariance, generate_synthetic
from pathmon.topology import Link, Topology, abilene, build_routing_matrix


def make_topology(edges, name="", weights=None):
    nodes = []
    for s, t in edges:
        for n in (s, t):
            if n not in nodes:
                nodes.append(n)
    weights = weights or [1.0] * len(edges)
    links = tuple(Link(i, s, t, w) for i, ((s, t), w) in enumerate(zip(edges, weights)))
    return Topology(tuple(nodes), links, name=name)


def line3():
    # columns A->B, B->A, B->C, C->B
    return make_topology([("A", "B"), ("B", "A"), ("B", "C"), ("C", "B")], name="line3")


def two_node():
    return make_topology([("A", "B"), ("B", "A")], name="pair")


def random_strongly_connected(n_nodes, seed, extra=3, weighted=False):
    """A directed ring plus random chords; always strongly connected."""
    rng = np.random.default_rng(seed)
    names = [f"n{i}" for i in range(n_nodes)]
    edges = [(names[i], names[(i + 1) % n_nodes]) for i in range(n_nodes)]
    candidates = [(a, b) for a, b in itertools.permutations(names, 2) if (a, b) not in edges]
    for j in rng.choice(len(candidates), size=extra, replace=False):
        edges.append(candidates[j])
    weights = list(rng.integers(1, 4, size=len(edges)).astype(float)) if weighted else None
    return make_topology(edges, name=f"rand{n_nodes}-{seed}", weights=weights)


SMALL_TOPOLOGIES = {
    "line3": line3,
    "rand5a": lambda: random_strongly_connected(5, seed=11, extra=3),
    "rand5b": lambda: random_strongly_connected(5, seed=29, extra=5, weighted=True),
}


@pytest.fixture(scope="session")
def abilene_topology():
    return abilene()


@pytest.fixture(scope="session")
def abilene_G(abilene_topology):
    return build_routing_matrix(abilene_topology)


@pytest.fixture(scope="session")
def synthetic_series(abilene_topology):
    return generate_synthetic(SyntheticConfig(seed=0), abilene_topology)


@pytest.fixture(scope="session")
def abilene_cov(synthetic_series):
    return estimate_diag_covariance(synthetic_series)


# one line per acceptance criterion, printed at the end of the run
_CRITERIA = []


@pytest.fixture
def criterion(request):
    def record(label, passed, detail=""):
        _CRITERIA.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_CRITERIA, key=lambda c: int(c[0].split()[0])):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {label}  {detail}")
