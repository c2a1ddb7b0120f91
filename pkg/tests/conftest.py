import numpy as np
import pytest

from rhdg.mesh import Mesh, generate_unit_square, refine_uniform


@pytest.fixture
def square2():
    """The unit square split into two triangles along the diagonal."""
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def small_mesh():
    return generate_unit_square(4, 0.15, seed=3)


@pytest.fixture(scope="session")
def level_meshes():
    base = generate_unit_square(14, 0.15, seed=42)
    return [base, refine_uniform(base), refine_uniform(refine_uniform(base))]
