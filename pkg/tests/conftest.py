import numpy as np
import pytest

from convexify.basis import WavenumberGrid, build_basis
from convexify.forward import SpatialGrid, generate_data, incident_field
from convexify.phantoms import get_phantom

X0 = (0.0, 0.0, -4.0)


@pytest.fixture(scope="session")
def small_case():
    """Noise-free ellipsoid data on an 11^3 lattice with 21 wavenumbers."""
    grid, kg = SpatialGrid(1.0, 11), WavenumberGrid(np.pi, 2 * np.pi, 21)
    data, u = generate_data(get_phantom("ellipsoid5"), kg, X0, grid)
    return dict(grid=grid, kgrid=kg, data=data, u=u, u0=incident_field(X0, grid, kg),
                basis=build_basis(kg, 3))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
