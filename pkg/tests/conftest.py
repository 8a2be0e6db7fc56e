import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from manifold_fp.fokker_planck import assemble_generator, equilibrium_weights
from manifold_fp.manifolds import PointCloud, sample_manifold
from manifold_fp.voronoi import Tessellation, build_tessellation

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_cell_tessellation():
    return Tessellation.from_faces([1.0, 1.0], [(0, 1, 1.0, 1.0)], d=1)


@pytest.fixture
def two_cell():
    tess = two_cell_tessellation()
    pi = equilibrium_weights(tess.volumes, values=[1.0, 1.0])
    return assemble_generator(tess, pi=pi)


def torus_grid(m, jitter=0.0, seed=0):
    """``m x m`` lattice on the unit flat torus, optionally jittered."""
    h = 1.0 / m
    g = (np.arange(m) + 0.5) * h
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if jitter:
        pts = pts + jitter * h * np.random.default_rng(seed).uniform(-1, 1, pts.shape)
    return PointCloud(np.mod(pts, 1.0), 2, label="flat_torus")


def chain_generator(pi_values, volumes=None, areas=None):
    """Generator of a path graph with unit spacing."""
    n = len(pi_values)
    volumes = np.ones(n) if volumes is None else np.asarray(volumes, float)
    areas = np.ones(n - 1) if areas is None else np.asarray(areas, float)
    faces = [(i, i + 1, areas[i], 1.0) for i in range(n - 1)]
    tess = Tessellation.from_faces(volumes, faces, d=1)
    pi = equilibrium_weights(tess.volumes, values=pi_values)
    return assemble_generator(tess, pi=pi)


@pytest.fixture(scope="session")
def sphere1000():
    """Unit-sphere instance shared by the property and acceptance suites."""
    cloud = sample_manifold("sphere", 1000, seed=0)
    tess = build_tessellation(cloud, 0.3 * np.sqrt(2.0))
    z = cloud.points[:, 2]
    pi = equilibrium_weights(tess.volumes, potential=z)
    gen = assemble_generator(tess, cloud, pi)
    rho0 = np.exp(-1.5 * cloud.points[:, 0])
    return cloud, tess, gen, rho0


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, after the test report."""
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (int(k.split(".")[0]), k)):
        status, seconds, note = results[key]
        line = f"{status} criterion {key} ({seconds:.1f} s)"
        terminalreporter.write_line(line + (f": {note}" if note else ""))
