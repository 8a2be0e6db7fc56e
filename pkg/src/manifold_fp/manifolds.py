"""Benchmark point clouds: dumbbell, Klein bottle, unit sphere and flat torus.

Clouds are drawn in parameter space and pushed through a closed-form
parametrization, optionally padded into a high-dimensional ambient space by
:func:`embed_ambient`.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointCloud",
    "KINDS",
    "INTRINSIC_DIM",
    "dumbbell",
    "klein_bottle",
    "sphere",
    "flat_torus",
    "sample_parameters",
    "sample_manifold",
    "random_orthogonal",
    "embed_ambient",
    "eigenfunction_density",
]

KINDS = ("dumbbell", "klein_bottle", "sphere", "flat_torus")
INTRINSIC_DIM = {"dumbbell": 2, "klein_bottle": 2, "sphere": 2, "flat_torus": 2}
# only the flat torus lives in a periodic box; its coordinates wrap at 1
PERIOD = {"flat_torus": 1.0}
SAMPLERS = ("uniform_param", "stratified_param")

NECK = 0.95
TUBE = 0.3


@dataclass(frozen=True)
class PointCloud:
    """``n`` points in R^p sampled from a ``d``-dimensional manifold."""

    points: np.ndarray
    intrinsic_dim: int
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {pts.shape}")
        n, p = pts.shape
        d = int(self.intrinsic_dim)
        if d < 1:
            raise ValueError("intrinsic_dim must be a positive integer")
        if n < d + 2:
            raise ValueError(f"need at least d+2 = {d + 2} points, got {n}")
        if p < d:
            raise ValueError(f"ambient dimension {p} is smaller than d = {d}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intrinsic_dim", d)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def p(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n


def dumbbell(theta, phi):
    """Dumbbell surface in R^3; ``theta`` in [0, 2pi), ``phi`` in [0, pi)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    c2 = np.cos(2.0 * phi)
    inner = 1.0 + NECK**4 * (c2**2 - 1.0)
    r = np.sqrt(np.sqrt(inner) + NECK**2 * c2)
    return np.stack([r * np.sin(phi) * np.cos(theta),
                     r * np.sin(phi) * np.sin(theta),
                     r * np.cos(phi)], axis=-1)


def klein_bottle(theta, phi):
    """Flat-ish Klein bottle in R^4 with tube radius 0.3."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ring = 1.0 + TUBE * np.cos(theta)
    return np.stack([ring * np.cos(phi),
                     ring * np.sin(phi),
                     TUBE * np.sin(theta) * np.cos(phi / 2.0),
                     TUBE * np.sin(theta) * np.sin(phi / 2.0)], axis=-1)


def sphere(theta, height):
    """Unit sphere via the cylindrical (area-preserving) chart.

    ``theta`` in [0, 2pi), ``height`` in [-1, 1]; uniform parameters give a
    uniform sample on the surface.
    """
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(height, dtype=float)
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=-1)


def flat_torus(u, v):
    """Unit flat torus [0, 1)^2; coordinates are the parameters themselves."""
    return np.stack([np.mod(u, 1.0), np.mod(v, 1.0)], axis=-1)


_PARAM_BOX = {
    "dumbbell": ((0.0, 2 * np.pi), (0.0, np.pi)),
    "klein_bottle": ((0.0, 2 * np.pi), (0.0, 2 * np.pi)),
    "sphere": ((0.0, 2 * np.pi), (-1.0, 1.0)),
    "flat_torus": ((0.0, 1.0), (0.0, 1.0)),
}
_MAPS = {"dumbbell": dumbbell, "klein_bottle": klein_bottle, "sphere": sphere,
         "flat_torus": flat_torus}


def sample_parameters(kind, n, seed, sampler="uniform_param"):
    """Draw ``n`` parameter pairs in the chart box of ``kind``.

    ``stratified_param`` jitters one point inside each cell of a near-square
    grid over the box, then fills any remainder uniformly.
    """
    if kind not in _PARAM_BOX:
        raise ValueError(f"unknown manifold kind {kind!r}; choose from {KINDS}")
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    rng = np.random.default_rng(seed)
    (a0, a1), (b0, b1) = _PARAM_BOX[kind]
    if sampler == "uniform_param":
        u = rng.random((n, 2))
    else:
        # grid aspect follows the box aspect so cells are roughly square
        aspect = (a1 - a0) / (b1 - b0)
        na = max(1, int(np.floor(np.sqrt(n * aspect))))
        nb = max(1, n // na)
        ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        cells = np.stack([ia.ravel(), ib.ravel()], axis=1).astype(float)
        jitter = rng.random(cells.shape)
        u = (cells + jitter) / np.array([na, nb], dtype=float)
        extra = n - u.shape[0]
        if extra > 0:
            u = np.vstack([u, rng.random((extra, 2))])
    return a0 + (a1 - a0) * u[:, 0], b0 + (b1 - b0) * u[:, 1]


def sample_manifold(kind, n, seed=0, sampler="uniform_param"):
    """Sample ``n`` points on a benchmark manifold.

    >>> cloud = sample_manifold("sphere", 100, seed=7)
    >>> cloud.points.shape
    (100, 3)
    """
    if kind not in _MAPS:
        raise ValueError(f"unknown manifold kind {kind!r}; choose from {KINDS}")
    if n < 10:
        raise ValueError(f"n must be at least 10, got {n}")
    a, b = sample_parameters(kind, n, seed, sampler)
    pts = _MAPS[kind](a, b)
    meta = {"kind": kind, "n": int(n), "d": INTRINSIC_DIM[kind],
            "p": int(pts.shape[1]), "seed": int(seed), "sampler": sampler,
            "scale": 1.0, "period": PERIOD.get(kind)}
    return PointCloud(pts, INTRINSIC_DIM[kind], label=kind, meta=meta)


def random_orthogonal(p, seed):
    """Seeded orthogonal p x p matrix from a QR-orthonormalised Gaussian frame."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((p, p))
    Q, R = np.linalg.qr(G)
    # makes the frame a deterministic function of G (Haar distributed)
    Q = Q * np.sign(np.diag(R))
    return Q


def embed_ambient(cloud, p, scale=1.0, seed=None):
    """Zero-pad to dimension ``p``, dilate by ``scale``, then rotate.

    ``seed=None`` is the identity-rotation convention; any integer seed draws
    the rotation from :func:`random_orthogonal`.
    """
    src = cloud.p
    if p < src:
        raise ValueError(f"target dimension {p} is smaller than source dimension {src}")
    if not scale > 0:
        raise ValueError("scale must be positive")
    padded = np.zeros((cloud.n, p))
    padded[:, :src] = cloud.points
    padded *= scale
    if seed is not None:
        padded = padded @ random_orthogonal(p, seed).T
    meta = dict(cloud.meta)
    meta.update(p=int(p), scale=float(scale), rotation_seed=seed)
    return PointCloud(padded, cloud.intrinsic_dim, label=cloud.label, meta=meta)


def eigenfunction_density(embedding, j, floor=0.1):
    """Positive density built from the ``j``-th renormalised eigenvector.

    Returns ``V_j + c`` with ``c = max(0, -min V_j) + floor``.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    vectors = embedding.vectors
    if not 1 <= j <= vectors.shape[1]:
        raise IndexError(
            f"eigen index {j} outside 1..{vectors.shape[1]} of the embedding")
    psi = vectors[:, j - 1]
    c = max(0.0, -float(psi.min())) + floor
    return psi + c
