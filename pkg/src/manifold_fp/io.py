"""Plain-text artefacts: CSV tables with JSON sidecars.

Floats are written with 17 significant digits so every round trip is exact
and repeated runs produce byte-identical files.
"""

import json
from pathlib import Path

import numpy as np

from .manifolds import PointCloud
from .voronoi import Tessellation

__all__ = [
    "sidecar_path",
    "write_json",
    "read_json",
    "write_matrix",
    "read_matrix",
    "save_cloud",
    "load_cloud",
    "save_vector",
    "load_vector",
    "save_embedding",
    "save_tessellation",
    "load_tessellation",
    "save_generator",
    "save_trajectory",
    "save_snapshots",
]

FLOAT_FMT = "%.17g"


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_matrix(path, array, header=None):
    array = np.asarray(array, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        np.savetxt(fh, array, fmt=FLOAT_FMT, delimiter=",")


def _has_header(path):
    with open(path) as fh:
        first = fh.readline().strip()
    if not first:
        return False
    try:
        [float(t) for t in first.split(",")]
    except ValueError:
        return True
    return False


def read_matrix(path):
    """Read a numeric CSV, skipping a header row if one is present."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    skip = 1 if _has_header(path) else 0
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return data


def save_cloud(path, cloud, header=False):
    """One row per point, ``p`` columns; metadata in ``<stem>.json``."""
    cols = [f"x{k}" for k in range(cloud.p)] if header else None
    write_matrix(path, cloud.points, header=cols)
    meta = dict(cloud.meta)
    meta.update(n=cloud.n, p=cloud.p, d=cloud.intrinsic_dim, label=cloud.label)
    write_json(sidecar_path(path), meta)


def load_cloud(path, d=None):
    """Load a cloud CSV; ``d`` falls back to the sidecar, then to 2."""
    pts = read_matrix(path)
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    if d is None:
        d = int(meta.get("d", 2))
    meta.setdefault("source", str(path))
    return PointCloud(pts, d, label=meta.get("label", Path(path).stem), meta=meta)


def save_vector(path, values, name="value"):
    write_matrix(path, values, header=[name])


def load_vector(path, column=-1):
    """Per-point values from a CSV (last column by default)."""
    data = read_matrix(path)
    return np.ascontiguousarray(data[:, column])


def save_embedding(path, embedding):
    cols = [f"y{k + 1}" for k in range(embedding.ell)]
    write_matrix(path, embedding.coords, header=cols)
    side = {
        "eigenvalues": embedding.eigenvalues,
        "norm_factors": embedding.norm_factors,
        "signs": embedding.signs,
        "eps": embedding.eps,
        "alpha": embedding.alpha,
        "ell": embedding.ell,
        "n_eigs": embedding.n_eigs,
        "intrinsic_dim": embedding.intrinsic_dim,
        "meta": embedding.meta,
    }
    write_json(sidecar_path(path), side)


def save_tessellation(path, tess):
    obj = {
        "n": tess.n, "d": tess.d, "r": tess.r, "s": tess.s, "period": tess.period,
        "volumes": tess.volumes,
        "faces": {"i": tess.face_i, "j": tess.face_j, "area": tess.face_area,
                  "dist": tess.face_dist},
        "clipped": tess.clipped if tess.clipped is not None else None,
        "counts_r": tess.counts_r if tess.counts_r is not None else None,
        "counts_sqrt_r": tess.counts_sqrt_r if tess.counts_sqrt_r is not None else None,
        "meta": tess.meta,
    }
    write_json(path, obj)


def load_tessellation(path):
    obj = read_json(path)
    f = obj["faces"]

    def arr(key, dtype):
        v = obj.get(key)
        return None if v is None else np.asarray(v, dtype=dtype)

    return Tessellation(volumes=np.asarray(obj["volumes"], dtype=float),
                        face_i=np.asarray(f["i"], dtype=int).reshape(-1),
                        face_j=np.asarray(f["j"], dtype=int).reshape(-1),
                        face_area=np.asarray(f["area"], dtype=float).reshape(-1),
                        face_dist=np.asarray(f["dist"], dtype=float).reshape(-1),
                        r=float(obj["r"]), s=float(obj["s"]), d=int(obj["d"]),
                        period=obj.get("period"), clipped=arr("clipped", bool),
                        counts_r=arr("counts_r", int),
                        counts_sqrt_r=arr("counts_sqrt_r", int),
                        meta=obj.get("meta", {}))


def save_generator(path, gen):
    """Rates, equilibrium and per-face jump weights ``lambda_i P_ij``."""
    fi, fj = gen.face_i, gen.face_j
    obj = {
        "n": gen.n, "kT": gen.kT, "n_components": gen.n_components,
        "lambda": gen.lam, "pi": gen.pi, "volumes": gen.volumes,
        "faces": {"i": fi, "j": fj, "flux": gen.flux,
                  "rate_ij": np.asarray(gen.rates[fi, fj]).ravel(),
                  "rate_ji": np.asarray(gen.rates[fj, fi]).ravel()},
        "cfl_limit": gen.cfl_limit(),
        "detailed_balance_residual": gen.detailed_balance_residual(),
    }
    write_json(path, obj)


def save_trajectory(path, traj):
    cols = traj.columns()
    names = list(cols)
    table = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in table:
            # step is an integer column; keep it free of exponent notation
            fh.write(f"{int(row[0])}," + ",".join(FLOAT_FMT % v for v in row[1:]) + "\n")


def save_snapshots(path, traj):
    """Density snapshots as columns ``rho_<step>``, one row per cell."""
    if not traj.snapshots:
        return False
    keys = sorted(traj.snapshots)
    table = np.column_stack([traj.snapshots[k] for k in keys])
    write_matrix(path, table, header=[f"rho_{k}" for k in keys])
    return True
