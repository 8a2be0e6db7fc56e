"""Diffusion maps with alpha-normalisation and 1/rho-hat renormalisation.

The symmetric conjugate ``D^{-1/2} W D^{-1/2}`` of the row-stochastic
operator ``L = D^{-1} W`` is diagonalised; eigenvectors of ``(I - L)/eps^2``
follow by multiplying with ``D^{-1/2}``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import gamma

from .linalg import fix_signs, sym_eig
from .manifolds import PointCloud

__all__ = [
    "KernelMatrices",
    "DiffusionOperator",
    "SpectralEmbedding",
    "default_bandwidth",
    "unit_sphere_measure",
    "build_kernel",
    "diffusion_operator",
    "apply_laplacian",
    "ball_counts",
    "inverse_density_norm",
    "spectral_embed",
]


@dataclass(frozen=True)
class KernelMatrices:
    K: np.ndarray
    q: np.ndarray
    W: np.ndarray
    D: np.ndarray
    eps: float
    alpha: float


@dataclass(frozen=True)
class DiffusionOperator:
    """``L = D^{-1} W`` together with its symmetric conjugate ``L_sym``."""

    L: np.ndarray
    L_sym: np.ndarray
    d_inv_sqrt: np.ndarray
    eps: float

    def to_L_eigenvectors(self, sym_vectors):
        """Map eigenvectors of ``L_sym`` to (unnormalised) eigenvectors of ``L``."""
        return self.d_inv_sqrt[:, None] * sym_vectors

    def generator_matrix(self):
        """``(I - L) / eps^2`` as a dense matrix."""
        n = self.L.shape[0]
        return (np.eye(n) - self.L) / self.eps**2


@dataclass(frozen=True)
class SpectralEmbedding:
    """Nontrivial diffusion-map eigenpairs and the derived reaction coordinates.

    ``eigenvalues[0]`` is the discarded trivial eigenvalue; ``vectors`` and
    ``norm_factors`` hold entries ``j = 1 .. n_eigs``; ``coords`` uses the
    first ``ell`` of them.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    raw_vectors: np.ndarray
    norm_factors: np.ndarray
    signs: np.ndarray
    coords: np.ndarray
    counts: np.ndarray
    eps: float
    alpha: float
    ell: int
    intrinsic_dim: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_eigs(self):
        return self.vectors.shape[1]

    def cloud(self, label="reaction_coordinates"):
        return PointCloud(self.coords, self.intrinsic_dim, label=label,
                          meta={"eps": self.eps, "ell": self.ell})


def default_bandwidth(points, k=8):
    """Median distance to the ``k``-th nearest neighbour (self excluded)."""
    points = np.asarray(points, dtype=float)
    k = min(k, points.shape[0] - 1)
    dist, _ = cKDTree(points).query(points, k=k + 1)
    return float(np.median(dist[:, k]))


def unit_sphere_measure(d):
    """Surface measure ``|S^{d-1}|`` of the unit sphere in R^d (2pi for d=2)."""
    return 2.0 * np.pi ** (d / 2.0) / gamma(d / 2.0)


def _points(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


def build_kernel(cloud, eps, alpha=1.0, cutoff=None):
    """Gaussian kernel ``exp(-|x_i - x_j|^2 / (4 eps^2))`` and its alpha-normalisation.

    ``cutoff`` (in units of ``eps``) zeroes kernel entries beyond
    ``cutoff * eps``; the default keeps the full dense kernel.
    """
    if not eps > 0:
        raise ValueError(f"bandwidth eps must be positive, got {eps}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    X = _points(cloud)
    if not np.all(np.isfinite(X)):
        raise ValueError("coordinates must be finite")
    sq = cdist(X, X, "sqeuclidean")
    K = np.exp(-sq / (4.0 * eps * eps))
    if cutoff is not None:
        K[sq > (cutoff * eps) ** 2] = 0.0
    np.fill_diagonal(K, 1.0)
    q = K.sum(axis=1)
    qa = q**alpha
    W = K / np.outer(qa, qa)
    D = W.sum(axis=1)
    return KernelMatrices(K=K, q=q, W=W, D=D, eps=float(eps), alpha=float(alpha))


def diffusion_operator(km):
    """Row-stochastic ``L`` and the symmetric ``D^{-1/2} W D^{-1/2}``."""
    D = km.D
    if np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise ValueError("degree vector has non-positive entries; input is corrupted")
    L = km.W / D[:, None]
    s = 1.0 / np.sqrt(D)
    L_sym = s[:, None] * km.W * s[None, :]
    L_sym = 0.5 * (L_sym + L_sym.T)
    return DiffusionOperator(L=L, L_sym=L_sym, d_inv_sqrt=s, eps=km.eps)


def apply_laplacian(op, f):
    """``((I - L) f) / eps^2`` for per-point values ``f``."""
    f = np.asarray(f, dtype=float)
    return (f - op.L @ f) / op.eps**2


def ball_counts(points, radius):
    """Number of sample points within ``radius`` of each point, itself included."""
    tree = cKDTree(points)
    return np.asarray(tree.query_ball_point(points, radius, return_length=True), dtype=float)


def inverse_density_norm(v, counts, eps, d):
    """l^2 norm of ``v`` weighted by the inverse kernel density estimate."""
    v = np.asarray(v, dtype=float)
    ball = unit_sphere_measure(d) * eps**d / d
    if v.ndim == 1:
        return float(np.sqrt(ball * np.sum(v * v / counts)))
    return np.sqrt(ball * np.sum(v * v / counts[:, None], axis=0))


def spectral_embed(cloud, eps=None, ell=3, n_eigs=None, alpha=1.0, d=None,
                   cutoff=None, method="lapack"):
    """Reaction coordinates from the first ``ell`` nontrivial eigenvectors.

    Parameters
    ----------
    cloud : PointCloud
    eps : float, optional
        Kernel bandwidth; defaults to :func:`default_bandwidth`.
    ell : int
        Embedding dimension, ``1 <= ell <= n-1``.
    n_eigs : int, optional
        Nontrivial eigenpairs retained (``>= ell``), e.g. for eigenfunction
        densities beyond the embedding dimension. Defaults to ``ell``.
    d : int, optional
        Intrinsic dimension for the 1/rho-hat norm; defaults to the cloud's.
    """
    X = _points(cloud)
    n = X.shape[0]
    if d is None:
        d = cloud.intrinsic_dim if isinstance(cloud, PointCloud) else X.shape[1]
    if n_eigs is None:
        n_eigs = ell
    if not 1 <= ell <= n - 1:
        raise ValueError(f"ell must lie in [1, {n - 1}], got {ell}")
    if not ell <= n_eigs <= n - 1:
        raise ValueError(f"n_eigs must lie in [{ell}, {n - 1}], got {n_eigs}")
    eps_given = eps is not None
    if eps is None:
        eps = default_bandwidth(X)

    km = build_kernel(X, eps, alpha, cutoff=cutoff)
    op = diffusion_operator(km)
    # smallest eigenvalues of (I - L_sym)/eps^2 are the largest of L_sym
    M = (np.eye(n) - op.L_sym) / eps**2
    M = 0.5 * (M + M.T)
    eig = sym_eig(M, n_eigs + 1, method=method)

    v = op.to_L_eigenvectors(eig.eigenvectors)
    v /= np.linalg.norm(v, axis=0)
    v = fix_signs(v)
    raw = v[:, 1:]
    counts = ball_counts(X, eps)
    norms = inverse_density_norm(raw, counts, eps, d)
    vectors = raw / norms
    signs = np.ones(n_eigs)
    # raw eigenvectors are already sign-fixed, so a_j = +1 for every j
    norm_factors = signs * norms
    coords = vectors[:, :ell].copy()
    meta = {"eps": float(eps), "eps_source": "given" if eps_given else "median_8nn",
            "alpha": float(alpha), "ell": int(ell), "n_eigs": int(n_eigs),
            "cutoff": cutoff}
    return SpectralEmbedding(eigenvalues=eig.eigenvalues, vectors=vectors,
                             raw_vectors=raw, norm_factors=norm_factors,
                             signs=signs, coords=coords, counts=counts,
                             eps=float(eps), alpha=float(alpha), ell=int(ell),
                             intrinsic_dim=int(d), meta=meta)
