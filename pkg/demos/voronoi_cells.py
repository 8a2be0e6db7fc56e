"""How good are tangent-plane Voronoi cells?

Three checks, from the exact to the statistical:

* a square lattice on the flat torus gives squares of side h;
* on the unit sphere the cell areas add up to nearly 4 pi, and the gap
  shrinks as the sample is refined with r ~ n^(-1/2);
* a single cell can be compared against a Monte-Carlo estimate.
"""

import math

import numpy as np

from manifold_fp import PointCloud, build_tessellation, sample_manifold
from manifold_fp.voronoi import cell_polytope


def lattice():
    m = 16
    g = (np.arange(m) + 0.5) / m
    X, Y = np.meshgrid(g, g, indexing="ij")
    tess = build_tessellation(PointCloud(np.column_stack([X.ravel(), Y.ravel()]), 2),
                              3.0 / m, period=1.0)
    h = 1.0 / m
    print(f"flat torus lattice h = {h}: area error {np.max(np.abs(tess.volumes - h * h)):.1e},"
          f" face error {np.max(np.abs(tess.face_area - h)):.1e}, {tess.n_faces} faces")


def sphere_refinement():
    print("\n     n      r   sum|C| / 4pi - 1   faces per cell")
    for n in (500, 2000, 8000):
        r = 0.3 * math.sqrt(2000 / n)
        tess = build_tessellation(sample_manifold("sphere", n, seed=0), r)
        print(f"{n:6d} {r:6.3f} {tess.volumes.sum() / (4 * math.pi) - 1:+17.4f} "
              f"{2 * tess.n_faces / n:16.2f}")


def monte_carlo():
    rng = np.random.default_rng(3)
    V = rng.uniform(-0.4, 0.4, (7, 2))
    r = 0.3
    vol, faces, clipped = cell_polytope(V, r)
    samples = 2_000_000
    rad = r * np.sqrt(rng.random(samples))
    ang = 2 * np.pi * rng.random(samples)
    X = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    p = np.all(X @ V.T <= 0.5 * np.sum(V * V, axis=1), axis=1).mean()
    est = math.pi * r * r * p
    se = math.pi * r * r * math.sqrt(p * (1 - p) / samples)
    print(f"\nsingle cell: clipped polygon area {vol:.5f}, Monte Carlo {est:.5f} +- {se:.5f}"
          f" ({abs(vol - est) / se:.1f} standard errors), clipped by the disk: {clipped}")


if __name__ == "__main__":
    lattice()
    sphere_refinement()
    monte_carlo()
