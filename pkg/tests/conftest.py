import pathlib

import pytest

from trihess.mesh import generate_uniform, load_mesh

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "trihess" / "data"
FIXTURE_PREFIX = str(DATA / "delaunay139")


@pytest.fixture(scope="session")
def regular10():
    return generate_uniform("regular", 10)


@pytest.fixture(scope="session")
def chevron10():
    return generate_uniform("chevron", 10)


@pytest.fixture(scope="session")
def unstructured139():
    return load_mesh(FIXTURE_PREFIX)


def center_vertex(mesh):
    """Vertex nearest the domain center."""
    import numpy as np

    return int(np.argmin(((mesh.nodes - 0.5) ** 2).sum(axis=1)))
