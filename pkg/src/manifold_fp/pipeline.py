"""Sample, embed, tessellate, assemble and solve, writing every artefact.

Stages can be run one at a time through :class:`Pipeline` or end to end
with :func:`run_experiment`. Any failure inside a stage is re-raised as
:class:`StageError` naming the stage and, when known, the point index.
"""

import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy.spatial import cKDTree

from . import __version__
from . import io as fio
from .config import ConfigError, ExperimentConfig, to_dict
from .diffusion_map import spectral_embed
from .fokker_planck import (assemble_generator, decay_spectrum, diagnostics,
                            equilibrium_weights, measured_decay_slope, solve)
from .manifolds import PERIOD, PointCloud, embed_ambient, eigenfunction_density, sample_manifold
from .voronoi import build_tessellation, theory_threshold

__all__ = ["StageError", "Pipeline", "RunResult", "run_experiment",
           "convergence_study", "ConvergenceTable"]

STAGES = ("sample", "embed", "tessellate", "assemble", "solve", "gap")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        index = getattr(cause, "index", None)
        # TessellationError messages already lead with the point index
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.index = index
        self.cause = cause


@dataclass
class RunResult:
    config: ExperimentConfig
    out: Path
    files: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    cloud: PointCloud = None
    coords: PointCloud = None
    embedding: object = None
    tessellation: object = None
    generator: object = None
    trajectory: object = None
    spectrum: object = None


class Pipeline:
    """Lazily evaluated stages over one validated config."""

    def __init__(self, config, write=True):
        self.cfg = config.validate()
        self.out = Path(config.out)
        self.write = write
        self.files = {}
        self.derived = {}
        self._cache = {}

    def _run(self, stage, fn):
        if stage in self._cache:
            return self._cache[stage]
        try:
            value = fn()
        except (ConfigError, FileNotFoundError):
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        self._cache[stage] = value
        return value

    def _path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        self.files[name] = str(path)
        return path

    @property
    def period(self):
        t = self.cfg.tessellation
        if t.period is not None:
            return t.period
        if self.cfg.manifold.input is None:
            return PERIOD.get(self.cfg.manifold.kind)
        return None

    # stages

    def cloud(self):
        def build():
            m = self.cfg.manifold
            if m.input is not None:
                cloud = fio.load_cloud(m.input, d=self.cfg.tessellation.d)
            else:
                cloud = sample_manifold(m.kind, m.n, seed=m.seed, sampler=m.sampler)
            if m.p is not None and m.p > cloud.p or m.scale != 1.0 or m.rotation_seed is not None:
                cloud = embed_ambient(cloud, max(m.p or cloud.p, cloud.p), scale=m.scale,
                                      seed=m.rotation_seed)
            if self.write:
                fio.save_cloud(self._path("cloud.csv"), cloud)
            return cloud
        return self._run("sample", build)

    def embedding(self):
        def build():
            cloud = self.cloud()
            e = self.cfg.embedding
            if e.method == "identity":
                coords = PointCloud(cloud.points, cloud.intrinsic_dim, label="reaction_coordinates",
                                    meta={"method": "identity"})
                emb = None
                self.derived["eps"] = None
            else:
                emb = spectral_embed(cloud, eps=e.eps, ell=e.ell, alpha=e.alpha,
                                     cutoff=e.cutoff)
                coords = emb.cloud()
                self.derived["eps"] = emb.eps
                self.derived["embedding_eigenvalues"] = emb.eigenvalues
            if self.write:
                if emb is not None:
                    fio.save_embedding(self._path("coords.csv"), emb)
                else:
                    cols = [f"y{k + 1}" for k in range(coords.p)]
                    fio.write_matrix(self._path("coords.csv"), coords.points, header=cols)
            return coords, emb
        return self._run("embed", build)

    def coords(self):
        return self.embedding()[0]

    def tessellation(self):
        def build():
            t = self.cfg.tessellation
            coords = self.coords()
            d = t.d if t.d is not None else coords.intrinsic_dim
            s = theory_threshold(t.r, d, t.a1) if t.threshold == "theory" else t.s
            self.derived["s"] = s
            tess = build_tessellation(coords, t.r, s=s, d=d, period=self.period)
            self.derived["total_volume"] = float(tess.volumes.sum())
            self.derived["n_faces"] = tess.n_faces
            self.derived["clipped_cells"] = int(np.sum(tess.clipped))
            if self.write:
                fio.save_tessellation(self._path("tessellation.json"), tess)
            return tess
        return self._run("tessellate", build)

    def density_embedding(self, index):
        """Diffusion map on the reaction coordinates, for eigenfunction densities."""
        key = "density_embedding"
        cached = self._cache.get(key)
        if cached is not None and cached.n_eigs >= index:
            return cached
        coords = self.coords()
        need = max(index, self._max_eigen_index())
        emb = spectral_embed(coords, eps=self.cfg.embedding.density_eps, ell=need,
                             n_eigs=need, alpha=self.cfg.embedding.alpha)
        self.derived["density_eps"] = emb.eps
        self._cache[key] = emb
        return emb

    def _max_eigen_index(self):
        idx = [src.index for src in (self.cfg.equilibrium, self.cfg.initial)
               if src.source == "eigenfunction"]
        return max(idx) if idx else 1

    def _density_values(self, src, role):
        y = self.coords().points
        n = y.shape[0]
        info = {"source": src.source}
        if src.source == "uniform":
            vals = np.ones(n)
        elif src.source == "eigenfunction":
            vals = eigenfunction_density(self.density_embedding(src.index), src.index,
                                         floor=src.floor)
        elif src.source in ("potential_csv", "direct_csv"):
            vals = fio.load_vector(src.path)
            if vals.shape[0] != n:
                raise ValueError(f"{role} file {src.path} has {vals.shape[0]} rows, "
                                 f"expected {n}")
            if src.source == "potential_csv":
                info["potential"] = True
                return vals, info
            shift = 0.0
            if vals.min() <= 0:
                shift = -float(vals.min()) + src.floor
                vals = vals + shift
            info["shift"] = shift
        elif src.source == "coordinate":
            vals = np.exp(-src.coef * y[:, src.axis])
        elif src.source == "cosine":
            vals = 1.0 + src.coef * np.cos(2.0 * np.pi * y[:, src.axis] / src.wavelength)
            if vals.min() <= 0:
                raise ValueError(f"{role} cosine profile is not positive; need |coef| < 1")
        else:
            raise ConfigError(f"unknown density source {src.source!r}")
        return vals, info

    def equilibrium(self):
        def build():
            tess = self.tessellation()
            vals, info = self._density_values(self.cfg.equilibrium, "equilibrium")
            kT = self.cfg.solver.kT
            if info.get("potential"):
                pi = equilibrium_weights(tess.volumes, potential=vals, kT=kT)
            else:
                pi = equilibrium_weights(tess.volumes, values=vals)
            self.derived["pi_source"] = info
            if self.write:
                fio.save_vector(self._path("pi.csv"), pi, "pi")
            return pi
        return self._run("equilibrium", build)

    def initial(self):
        def build():
            vals, info = self._density_values(self.cfg.initial, "initial")
            if info.get("potential"):
                vals = np.exp(-(vals - vals.min()) / self.cfg.solver.kT)
            self.derived["rho0_source"] = info
            return vals
        return self._run("initial", build)

    def generator(self):
        def build():
            gen = assemble_generator(self.tessellation(), self.coords(), self.equilibrium(),
                                     kT=self.cfg.solver.kT)
            self.derived["lambda_max"] = float(gen.lam.max())
            self.derived["lambda_min"] = float(gen.lam.min())
            self.derived["cfl_limit"] = gen.cfl_limit()
            self.derived["detailed_balance_residual"] = gen.detailed_balance_residual()
            if self.write:
                fio.save_generator(self._path("generator.json"), gen)
            return gen
        return self._run("assemble", build)

    def spectrum(self):
        def build():
            s = self.cfg.solver
            sp = decay_spectrum(self.generator(), s.dt, s.scheme)
            self.derived["mu2"] = sp.mu2
            if self.write:
                fio.write_json(self._path("decay.json"), {
                    "mu2": sp.mu2, "leading": sp.leading,
                    "second_largest": sp.second_largest,
                    "most_negative": sp.most_negative,
                    "ground_state_deviation": sp.ground_state_deviation,
                    "dt": sp.dt, "scheme": sp.scheme})
            return sp
        return self._run("gap", build)

    def trajectory(self):
        def build():
            s = self.cfg.solver
            gen = self.generator()
            tr = solve(gen, self.initial(), s.dt, s.steps, scheme=s.scheme, adjust=s.adjust,
                       snapshot_every=s.snapshot_every, snapshot_steps=s.snapshot_steps,
                       explicit_substeps=s.explicit_substeps)
            self.derived["adjust_factor"] = tr.adjust_factor
            self.derived["final"] = diagnostics(tr.final, gen)
            try:
                slope, window = measured_decay_slope(tr.linf_err)
                self.derived["measured_log_slope"] = slope
                self.derived["slope_window"] = list(window)
            except ValueError:
                self.derived["measured_log_slope"] = None
            if self.write:
                fio.save_vector(self._path("rho0.csv"), tr.initial, "rho0")
                fio.save_trajectory(self._path("trajectory.csv"), tr)
                fio.save_vector(self._path("final_density.csv"), tr.final.rho, "rho")
                if tr.snapshots:
                    fio.save_snapshots(self._path("snapshots.csv"), tr)
            return tr
        return self._run("solve", build)

    def manifest(self, stages):
        man = {
            "config": to_dict(self.cfg),
            "stages": list(stages),
            "derived": self.derived,
            "period": self.period,
            "files": sorted(Path(p).name for p in self.files),
            "versions": {"manifold_fp": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        }
        if self.write:
            self.cfg.save(self._path("config.ini"))
            fio.write_json(self._path("manifest.json"), man)
        return man


_TARGETS = {
    "sample": ("sample",),
    "embed": ("sample", "embed"),
    "tessellate": ("sample", "embed", "tessellate"),
    "gap": ("sample", "embed", "tessellate", "assemble", "gap"),
    "solve": ("sample", "embed", "tessellate", "assemble", "solve"),
    "all": ("sample", "embed", "tessellate", "assemble", "gap", "solve"),
}


def run_experiment(config, until="all", write=True):
    """Run the pipeline up to ``until`` and write artefacts to ``config.out``."""
    if until not in _TARGETS:
        raise ConfigError(f"unknown stage {until!r}; choose from {sorted(_TARGETS)}")
    pipe = Pipeline(config, write=write)
    stages = _TARGETS[until]
    calls = {"sample": pipe.cloud, "embed": pipe.embedding, "tessellate": pipe.tessellation,
             "assemble": pipe.generator, "gap": pipe.spectrum, "solve": pipe.trajectory}
    for stage in stages:
        calls[stage]()
    man = pipe.manifest(stages)
    c = pipe._cache
    emb = c.get("embed")
    return RunResult(config=pipe.cfg, out=pipe.out, files=dict(pipe.files), manifest=man,
                     cloud=c.get("sample"), coords=emb[0] if emb else None,
                     embedding=emb[1] if emb else None, tessellation=c.get("tessellate"),
                     generator=c.get("assemble"), trajectory=c.get("solve"),
                     spectrum=c.get("gap"))


@dataclass
class ConvergenceTable:
    n: np.ndarray
    r: np.ndarray
    steps: np.ndarray
    error: np.ndarray
    reference: str

    def rows(self):
        return list(zip(self.n.tolist(), self.r.tolist(), self.steps.tolist(),
                        self.error.tolist()))

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("n,r,steps,weighted_l2\n")
            for n, r, k, e in self.rows():
                fh.write(f"{n},{r!r},{k},{e!r}\n")


def convergence_study(base, levels, T=None, r_exponent=None, exact=None, write_csv=True):
    """Solve ``base`` at several sample sizes up to a common time ``T``.

    The bandwidth follows ``r(n) = r_base (n_base / n)^(1/d)`` so that
    ``n r^d`` stays fixed. Each level is compared with the finest level by
    nearest-site lookup in the sampled (ambient) coordinates, using the
    weighted l^2 norm ``sum e_i^2 |C_i| / pi_i`` of that level. With
    ``exact(points, T)`` the comparison is against a closed form instead.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    if base.manifold.input is not None:
        raise ConfigError("convergence studies resample the manifold; input files are not supported")
    dt = base.solver.dt
    if T is None:
        T = dt * base.solver.steps
    steps = max(1, int(round(T / dt)))
    d = base.tessellation.d or 2
    expo = (1.0 / d) if r_exponent is None else r_exponent
    n_base = base.manifold.n
    runs = []
    for n in levels:
        r = base.tessellation.r * (n_base / n) ** expo
        cfg = base.replace(**{"manifold.n": n, "tessellation.r": r, "solver.steps": steps})
        res = run_experiment(cfg, until="solve", write=False)
        runs.append((n, r, res))

    finest = max(range(len(levels)), key=lambda k: (levels[k], k))
    Xf = runs[finest][2].cloud.points
    rho_f = runs[finest][2].trajectory.final.rho
    tree = cKDTree(Xf)
    errs = []
    for n, r, res in runs:
        gen = res.generator
        X = res.cloud.points
        if exact is not None:
            ref = exact(X, steps * dt)
        else:
            ref = rho_f[tree.query(X)[1]]
        e = res.trajectory.final.rho - ref
        errs.append(float(np.sum(e * e * gen.volumes / gen.pi)))
    table = ConvergenceTable(n=np.array(levels), r=np.array([r for _, r, _ in runs]),
                             steps=np.full(len(levels), steps), error=np.array(errs),
                             reference="exact" if exact is not None else "finest")
    if write_csv:
        out = Path(base.out)
        out.mkdir(parents=True, exist_ok=True)
        table.save(out / "convergence.csv")
    return table
