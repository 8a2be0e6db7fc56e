"""Approximate Voronoi tessellation of a point cloud on a d-manifold.

Each site is handled in its own estimated tangent plane: a local covariance
over the sqrt(r)-ball gives a d-dimensional frame, the r-ball neighbours are
projected into it, and the Voronoi cell of the origin among those projections
is intersected with the radius-r disk (d=2) or the [-r, r]^3 cube (d=3).
Cell d-volumes and symmetrised (d-1)-face measures feed the finite-volume
scheme.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .linalg import sym_eig

__all__ = [
    "TessellationError",
    "TangentFrame",
    "Tessellation",
    "tangent_frame",
    "cell_polytope",
    "polygon_cell",
    "polyhedron_cell",
    "build_tessellation",
    "minimum_image",
    "theory_threshold",
]

DEGENERACY_TOL = 1e-12
_GEOM_TOL = 1e-12


class TessellationError(ValueError):
    """Raised when a cell cannot be built; ``index`` names the offending site."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"point {index}: {message}"
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class TangentFrame:
    center: int
    basis: np.ndarray
    eigenvalues: np.ndarray
    neighbor_ids: np.ndarray
    projected_ids: np.ndarray
    projected: np.ndarray


def minimum_image(offsets, period):
    if period is None:
        return offsets
    return offsets - period * np.round(offsets / period)


def _tree(points, period):
    if period is None:
        return cKDTree(points)
    return cKDTree(np.mod(points, period), boxsize=period)


def _frame_from_ids(points, k, big_ids, small_ids, d, n, period):
    y = points[k]
    big_ids = np.asarray([i for i in big_ids if i != k], dtype=int)
    small_ids = np.asarray([i for i in small_ids if i != k], dtype=int)
    if big_ids.size < d + 1:
        raise TessellationError(
            f"only {big_ids.size} neighbours in the sqrt(r)-ball; need at least {d + 1}",
            index=k)
    off = minimum_image(points[big_ids] - y, period)
    C = off.T @ off / n
    ell = C.shape[0]
    eig = sym_eig(C, method="jacobi" if ell <= 8 else "lapack")
    order = np.argsort(eig.eigenvalues, kind="stable")[::-1]
    vals = eig.eigenvalues[order]
    basis = eig.eigenvectors[:, order[:d]]
    if ell > d:
        top = max(abs(vals[d - 1]), 1e-300)
        if vals[d - 1] - vals[d] <= DEGENERACY_TOL * top:
            raise TessellationError(
                f"degenerate local covariance: eigenvalues {d} and {d + 1} are "
                f"{vals[d - 1]:.3e} and {vals[d]:.3e}; check d or r", index=k)
    proj = minimum_image(points[small_ids] - y, period) @ basis
    return TangentFrame(center=k, basis=basis, eigenvalues=vals,
                        neighbor_ids=big_ids, projected_ids=small_ids,
                        projected=proj)


def tangent_frame(cloud, k, r, d=None, period=None):
    """Local PCA frame at site ``k`` and the projected r-ball neighbours.

    ``cloud`` is a :class:`PointCloud` or an (n, l) array. ``period``, when
    given, treats coordinates as living on the flat torus [0, period)^l.
    """
    points = getattr(cloud, "points", cloud)
    points = np.asarray(points, dtype=float)
    if d is None:
        d = cloud.intrinsic_dim
    if not r > 0:
        raise ValueError("r must be positive")
    tree = _tree(points, period)
    q = np.mod(points[k], period) if period is not None else points[k]
    big = tree.query_ball_point(q, np.sqrt(r))
    small = tree.query_ball_point(q, r)
    return _frame_from_ids(points, k, sorted(big), sorted(small), d,
                           points.shape[0], period)


# ---------------------------------------------------------------- d = 2

def _clip_polygon(verts, labels, a, b, label, tol):
    """Clip a convex polygon by ``a . x <= b``; edge ``i`` runs verts[i] -> verts[i+1]."""
    s = verts @ a - b
    inside = s <= tol
    if inside.all():
        return verts, labels
    if not inside.any():
        return verts[:0], labels[:0]
    out_v, out_l = [], []
    m = len(verts)
    for i in range(m):
        j = (i + 1) % m
        P, Q = verts[i], verts[j]
        if inside[i]:
            out_v.append(P)
            out_l.append(labels[i])
            if not inside[j]:
                t = s[i] / (s[i] - s[j])
                out_v.append(P + t * (Q - P))
                out_l.append(label)
        elif inside[j]:
            t = s[i] / (s[i] - s[j])
            out_v.append(P + t * (Q - P))
            out_l.append(labels[i])
    verts = np.array(out_v)
    labels = np.array(out_l, dtype=int)
    return _drop_short_edges(verts, labels, tol)


def _drop_short_edges(verts, labels, tol):
    if len(verts) < 2:
        return verts, labels
    keep_v, keep_l = [verts[0]], [labels[0]]
    for i in range(1, len(verts)):
        if np.linalg.norm(verts[i] - keep_v[-1]) <= tol:
            keep_l[-1] = labels[i]
        else:
            keep_v.append(verts[i])
            keep_l.append(labels[i])
    if len(keep_v) > 1 and np.linalg.norm(keep_v[0] - keep_v[-1]) <= tol:
        keep_v.pop()
        keep_l.pop()
    return np.array(keep_v), np.array(keep_l, dtype=int)


def _segment_disk(A, B, R):
    """Parameters ``0 <= t0 <= t1 <= 1`` of the part of A->B inside the disk, or None."""
    D = B - A
    a = D @ D
    if a == 0.0:
        return None
    bq = A @ D
    c = A @ A - R * R
    disc = bq * bq - a * c
    if disc <= 0.0:
        return None
    sq = np.sqrt(disc)
    t0 = max((-bq - sq) / a, 0.0)
    t1 = min((-bq + sq) / a, 1.0)
    if t1 <= t0:
        return None
    return t0, t1


def _triangle_disk_area(A, B, R):
    """Signed area of triangle (0, A, B) intersected with the radius-R disk."""

    def sector(P, Q):
        ang = np.arctan2(P[0] * Q[1] - P[1] * Q[0], P @ Q)
        return 0.5 * R * R * ang

    def tri(P, Q):
        return 0.5 * (P[0] * Q[1] - P[1] * Q[0])

    span = _segment_disk(A, B, R)
    if span is None:
        return sector(A, B)
    t0, t1 = span
    P0 = A + t0 * (B - A)
    P1 = A + t1 * (B - A)
    return sector(A, P0) + tri(P0, P1) + sector(P1, B)


def polygon_cell(projected, r, tol=None):
    """Voronoi cell of the origin among planar sites, clipped to the radius-r disk.

    Returns ``(area, faces, clipped)`` where ``faces[i]`` is the length of the
    edge shared with ``projected[i]`` and ``clipped`` says whether the disk
    boundary forms part of the cell.
    """
    V = np.asarray(projected, dtype=float)
    m = V.shape[0]
    if tol is None:
        tol = _GEOM_TOL * r
    verts = np.array([[-r, -r], [r, -r], [r, r], [-r, r]], dtype=float)
    labels = np.full(4, -1, dtype=int)
    dist = np.linalg.norm(V, axis=1)
    if np.any(dist <= tol):
        raise ValueError("a neighbour coincides with the origin")
    for i in np.argsort(dist, kind="stable"):
        half = 0.5 * dist[i]
        if half >= r:
            break
        if half >= np.max(np.linalg.norm(verts, axis=1)):
            break
        verts, labels = _clip_polygon(verts, labels, V[i], 0.5 * dist[i] ** 2,
                                      int(i), tol * dist[i])
    faces = np.zeros(m)
    area = 0.0
    clipped = False
    nv = len(verts)
    for e in range(nv):
        A, B = verts[e], verts[(e + 1) % nv]
        area += _triangle_disk_area(A, B, r)
        span = _segment_disk(A, B, r)
        inside_len = 0.0 if span is None else (span[1] - span[0]) * np.linalg.norm(B - A)
        if labels[e] >= 0:
            if inside_len > tol:
                faces[labels[e]] += inside_len
        if span is None or span[0] > 0.0 or span[1] < 1.0:
            clipped = True
    return float(area), faces, clipped


# ---------------------------------------------------------------- d = 3

def _clip_face(poly, a, b, tol):
    s = poly @ a - b
    inside = s <= tol
    if inside.all():
        return poly, []
    if not inside.any():
        return poly[:0], []
    out, cut = [], []
    m = len(poly)
    for i in range(m):
        j = (i + 1) % m
        P, Q = poly[i], poly[j]
        if inside[i]:
            out.append(P)
            if not inside[j]:
                I = P + s[i] / (s[i] - s[j]) * (Q - P)
                out.append(I)
                cut.append(I)
        elif inside[j]:
            I = P + s[i] / (s[i] - s[j]) * (Q - P)
            out.append(I)
            cut.append(I)
    for i in np.flatnonzero(np.abs(s) <= tol):
        cut.append(poly[i])
    return np.array(out), cut


def _order_on_plane(pts, normal, tol):
    pts = np.asarray(pts)
    uniq = []
    for p in pts:
        if not any(np.linalg.norm(p - u) <= tol for u in uniq):
            uniq.append(p)
    if len(uniq) < 3:
        return None
    uniq = np.array(uniq)
    c = uniq.mean(axis=0)
    e1 = uniq[0] - c
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    ang = np.arctan2((uniq - c) @ e2, (uniq - c) @ e1)
    return uniq[np.argsort(ang)]


def _vector_area(poly):
    return 0.5 * np.sum(np.cross(poly, np.roll(poly, -1, axis=0)), axis=0)


def polyhedron_cell(projected, r, tol=None):
    """Voronoi cell of the origin among sites in R^3, clipped to [-r, r]^3.

    Returns ``(volume, faces, clipped)`` like :func:`polygon_cell`.
    """
    V = np.asarray(projected, dtype=float)
    m = V.shape[0]
    if tol is None:
        tol = _GEOM_TOL * r
    cube = []
    for axis in range(3):
        for sgn in (-1.0, 1.0):
            n_ = np.zeros(3)
            n_[axis] = sgn
            u = np.zeros(3)
            u[(axis + 1) % 3] = 1.0
            w = np.cross(n_, u)
            c = sgn * r * n_ * sgn
            poly = np.array([c + r * (s1 * u + s2 * w)
                             for s1, s2 in ((-1, -1), (1, -1), (1, 1), (-1, 1))])
            cube.append((-1, poly))
    faces_list = cube
    dist = np.linalg.norm(V, axis=1)
    if np.any(dist <= tol):
        raise ValueError("a neighbour coincides with the origin")
    for i in np.argsort(dist, kind="stable"):
        a = V[i]
        b = 0.5 * dist[i] ** 2
        allv = np.vstack([p for _, p in faces_list])
        if 0.5 * dist[i] >= np.max(np.linalg.norm(allv, axis=1)):
            break
        if np.max(allv @ a - b) <= tol * dist[i]:
            continue
        new_faces, cut_pts = [], []
        for lab, poly in faces_list:
            clipped_poly, cut = _clip_face(poly, a, b, tol * dist[i])
            cut_pts.extend(cut)
            if len(clipped_poly) >= 3 and np.linalg.norm(_vector_area(clipped_poly)) > tol * tol:
                new_faces.append((lab, clipped_poly))
        cap = _order_on_plane(cut_pts, a / dist[i], tol)
        if cap is not None:
            new_faces.append((int(i), cap))
        faces_list = new_faces
    volume = 0.0
    faces = np.zeros(m)
    clipped = False
    for lab, poly in faces_list:
        va = _vector_area(poly)
        volume += poly[0] @ va / 3.0
        if lab >= 0:
            faces[lab] += np.linalg.norm(va)
        else:
            clipped = True
    return float(volume), faces, clipped


def cell_polytope(projected, r):
    """Clipped Voronoi cell of the origin; returns ``(volume, faces, clipped)``."""
    V = np.asarray(projected, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("cell_polytope needs at least one neighbour")
    if not np.all(np.isfinite(V)):
        raise ValueError("projected neighbours must be finite")
    d = V.shape[1]
    if d == 2:
        return polygon_cell(V, r)
    if d == 3:
        return polyhedron_cell(V, r)
    raise ValueError(f"cell construction supports d in {{2, 3}}, got d={d}")


@dataclass(frozen=True)
class Tessellation:
    """Cell volumes and symmetric face areas; faces stored once with ``i < j``."""

    volumes: np.ndarray
    face_i: np.ndarray
    face_j: np.ndarray
    face_area: np.ndarray
    face_dist: np.ndarray
    r: float
    s: float
    d: int
    period: float = None
    clipped: np.ndarray = None
    counts_r: np.ndarray = None
    counts_sqrt_r: np.ndarray = None
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_faces(cls, volumes, faces, d, r=1.0, s=0.0, period=None):
        """Hand-built tessellation from ``(i, j, area, distance)`` tuples."""
        volumes = np.asarray(volumes, dtype=float)
        if np.any(volumes <= 0):
            raise ValueError("cell volumes must be positive")
        rows = sorted((min(i, j), max(i, j), float(a), float(dist)) for i, j, a, dist in faces)
        if any(i == j for i, j, _, _ in rows):
            raise ValueError("a face needs two distinct cells")
        if len({(i, j) for i, j, _, _ in rows}) < len(rows):
            raise ValueError("duplicate face between the same pair of cells")
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(volumes=volumes, face_i=arr[:, 0].astype(int), face_j=arr[:, 1].astype(int),
                   face_area=arr[:, 2], face_dist=arr[:, 3], r=float(r), s=float(s),
                   d=int(d), period=period, clipped=np.zeros(volumes.shape[0], dtype=bool),
                   meta={"r": float(r), "s": float(s), "d": int(d), "period": period,
                         "source": "faces"})

    @property
    def n(self):
        return self.volumes.shape[0]

    @property
    def n_faces(self):
        return self.face_i.shape[0]

    def area_matrix(self):
        """Symmetric sparse matrix of face areas."""
        n = self.n
        M = sparse.coo_matrix((self.face_area, (self.face_i, self.face_j)), shape=(n, n))
        return (M + M.T).tocsr()

    def distance_matrix(self):
        n = self.n
        M = sparse.coo_matrix((self.face_dist, (self.face_i, self.face_j)), shape=(n, n))
        return (M + M.T).tocsr()

    def neighbors(self, i):
        M = self.area_matrix()
        return M.indices[M.indptr[i]:M.indptr[i + 1]].copy()

    def neighbor_lists(self):
        M = self.area_matrix()
        return [M.indices[M.indptr[i]:M.indptr[i + 1]].copy() for i in range(self.n)]

    def area(self, i, j):
        if i == j:
            return 0.0
        a, b = (i, j) if i < j else (j, i)
        hit = np.flatnonzero((self.face_i == a) & (self.face_j == b))
        return float(self.face_area[hit[0]]) if hit.size else 0.0

    def diagnostics(self):
        """Neighbour-count statistics and points whose r-ball count is anomalous."""
        out = {"n_cells": int(self.n), "n_faces": int(self.n_faces),
               "total_volume": float(self.volumes.sum()),
               "clipped_cells": int(np.sum(self.clipped)) if self.clipped is not None else None}
        if self.counts_r is not None:
            c = self.counts_r
            med = float(np.median(c))
            out.update(counts_r_min=int(c.min()), counts_r_median=med,
                       counts_r_max=int(c.max()),
                       anomalous=np.flatnonzero((c < self.d + 1) | (c > 3 * med)).tolist())
        return out


def theory_threshold(r, d, a1=0.1):
    """Face-area floor ``s = a1 r^d`` of the convergence analysis."""
    if not a1 > 0:
        raise ValueError("a1 must be positive")
    return a1 * r**d


def build_tessellation(cloud, r, s=0.0, d=None, period=None):
    """Approximate Voronoi volumes and face areas for every site.

    Parameters
    ----------
    cloud : PointCloud or (n, l) array
        Reaction coordinates.
    r : float
        Bandwidth; tangent frames use the sqrt(r)-ball, cells the r-ball.
    s : float
        Face-area floor applied to pairs with a positive symmetrised area.
    period : float, optional
        Coordinates live on the flat torus [0, period)^l.
    """
    points = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    if d is None:
        d = cloud.intrinsic_dim
    if not r > 0:
        raise ValueError("r must be positive")
    if not s >= 0:
        raise ValueError("threshold s must be non-negative")
    if not 0 < r < 1:
        warnings.warn(f"r={r} lies outside (0, 1); the sqrt(r)-ball is then smaller "
                      "than the r-ball", stacklevel=2)
    n = points.shape[0]
    if period is not None:
        points = np.mod(points, period)
    tree = _tree(points, period)
    big = tree.query_ball_point(points, np.sqrt(r))
    small = tree.query_ball_point(points, r)

    volumes = np.zeros(n)
    clipped = np.zeros(n, dtype=bool)
    rows, cols, vals = [], [], []
    for k in range(n):
        frame = _frame_from_ids(points, k, sorted(big[k]), sorted(small[k]), d, n, period)
        if frame.projected.shape[0] == 0:
            raise TessellationError("no neighbours in the r-ball", index=k)
        try:
            vol, faces, clip = cell_polytope(frame.projected, r)
        except ValueError as exc:
            raise TessellationError(str(exc), index=k) from exc
        volumes[k] = vol
        clipped[k] = clip
        hit = faces > 0
        rows.append(np.full(int(hit.sum()), k))
        cols.append(frame.projected_ids[hit])
        vals.append(faces[hit])
        if vol <= 0:
            raise TessellationError("cell has zero volume", index=k)

    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    At = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A = ((At + At.T) * 0.5).tocoo()
    upper = A.row < A.col
    fi, fj, fa = A.row[upper], A.col[upper], A.data[upper]
    order = np.lexsort((fj, fi))
    fi, fj, fa = fi[order].astype(int), fj[order].astype(int), fa[order]
    pos = fa > 0
    fi, fj, fa = fi[pos], fj[pos], np.maximum(fa[pos], s)
    fd = np.linalg.norm(minimum_image(points[fi] - points[fj], period), axis=1)

    counts_r = np.array([len(x) - 1 for x in small])
    counts_big = np.array([len(x) - 1 for x in big])
    meta = {"r": float(r), "s": float(s), "d": int(d), "period": period}
    return Tessellation(volumes=volumes, face_i=fi, face_j=fj, face_area=fa,
                        face_dist=fd, r=float(r), s=float(s), d=int(d),
                        period=period, clipped=clipped, counts_r=counts_r,
                        counts_sqrt_r=counts_big, meta=meta)
