"""Experiment configuration stored as sectioned INI text.

Every field is written back on save, defaults included, so a saved file (or
the copy inside a run manifest) reproduces the run on its own. ``None`` is
spelled ``auto``.
"""

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .fokker_planck import SCHEMES
from .manifolds import KINDS, SAMPLERS

__all__ = [
    "ConfigError",
    "ManifoldConfig",
    "EmbeddingConfig",
    "TessellationConfig",
    "DensitySource",
    "SolverConfig",
    "ExperimentConfig",
    "PRESETS",
    "preset",
]

DENSITY_SOURCES = ("eigenfunction", "potential_csv", "direct_csv", "coordinate",
                   "cosine", "uniform")
EMBED_METHODS = ("diffusion_map", "identity")


class ConfigError(ValueError):
    pass


@dataclass
class ManifoldConfig:
    kind: str = "sphere"
    input: str = None
    n: int = 1000
    p: int = None
    scale: float = 1.0
    seed: int = 0
    sampler: str = "uniform_param"
    rotation_seed: int = None


@dataclass
class EmbeddingConfig:
    method: str = "diffusion_map"
    eps: float = None
    alpha: float = 1.0
    ell: int = 3
    cutoff: float = None
    # bandwidth of the second diffusion map, run on the reaction coordinates,
    # that supplies eigenfunction densities
    density_eps: float = None


@dataclass
class TessellationConfig:
    r: float = 0.3
    s: float = 0.0
    d: int = None
    period: float = None
    # "fixed" uses s as given; "theory" replaces it by a1 * r^d
    threshold: str = "fixed"
    a1: float = 0.1


@dataclass
class DensitySource:
    """Per-point positive values for ``pi`` or ``rho0``.

    ``eigenfunction``: ``V_index`` shifted by ``floor``; ``potential_csv``:
    ``exp(-U / kT)`` with U read from ``path``; ``direct_csv``: values from
    ``path`` (shifted to a minimum of ``floor`` when not positive);
    ``coordinate``: ``exp(-coef * y[:, axis])``; ``cosine``:
    ``1 + coef * cos(2 pi y[:, axis] / wavelength)``; ``uniform``: ones.
    """

    source: str = "uniform"
    index: int = 2
    floor: float = 0.1
    path: str = None
    axis: int = 0
    coef: float = 1.0
    wavelength: float = 1.0


@dataclass
class SolverConfig:
    dt: float = 0.05
    steps: int = 1000
    scheme: str = "unconditional"
    adjust: bool = True
    kT: float = 1.0
    snapshot_every: int = None
    snapshot_steps: tuple = ()
    explicit_substeps: bool = False


_SECTIONS = (("manifold", ManifoldConfig), ("embedding", EmbeddingConfig),
             ("tessellation", TessellationConfig), ("equilibrium", DensitySource),
             ("initial", DensitySource), ("solver", SolverConfig))


@dataclass
class ExperimentConfig:
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    tessellation: TessellationConfig = field(default_factory=TessellationConfig)
    equilibrium: DensitySource = field(default_factory=DensitySource)
    initial: DensitySource = field(default_factory=DensitySource)
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str = "run"

    def validate(self):
        m, e, t, s = self.manifold, self.embedding, self.tessellation, self.solver
        if m.input is None and m.kind not in KINDS:
            raise ConfigError(f"manifold.kind must be one of {KINDS}, got {m.kind!r}")
        if m.sampler not in SAMPLERS:
            raise ConfigError(f"manifold.sampler must be one of {SAMPLERS}")
        if m.input is None and m.n < 10:
            raise ConfigError("manifold.n must be at least 10")
        if m.p is not None and m.p < 1:
            raise ConfigError("manifold.p must be positive")
        _positive("manifold.scale", m.scale)
        if e.method not in EMBED_METHODS:
            raise ConfigError(f"embedding.method must be one of {EMBED_METHODS}")
        for name in ("eps", "cutoff", "density_eps"):
            if getattr(e, name) is not None:
                _positive(f"embedding.{name}", getattr(e, name))
        if not 0.0 <= e.alpha <= 1.0:
            raise ConfigError("embedding.alpha must lie in [0, 1]")
        if e.ell < 1:
            raise ConfigError("embedding.ell must be positive")
        _positive("tessellation.r", t.r)
        if t.s < 0:
            raise ConfigError("tessellation.s must be non-negative")
        if t.d is not None and t.d not in (2, 3):
            raise ConfigError("tessellation.d must be 2 or 3")
        if t.period is not None:
            _positive("tessellation.period", t.period)
        if t.threshold not in ("fixed", "theory"):
            raise ConfigError("tessellation.threshold must be 'fixed' or 'theory'")
        _positive("tessellation.a1", t.a1)
        for name in ("equilibrium", "initial"):
            src = getattr(self, name)
            if src.source not in DENSITY_SOURCES:
                raise ConfigError(f"{name}.source must be one of {DENSITY_SOURCES}")
            if src.source in ("potential_csv", "direct_csv") and not src.path:
                raise ConfigError(f"{name}.path is required for source {src.source}")
            if src.source == "eigenfunction" and src.index < 1:
                raise ConfigError(f"{name}.index must be at least 1")
            _positive(f"{name}.floor", src.floor)
            _positive(f"{name}.wavelength", src.wavelength)
        _positive("solver.dt", s.dt)
        _positive("solver.kT", s.kT)
        if s.steps < 1:
            raise ConfigError("solver.steps must be positive")
        if s.scheme not in SCHEMES:
            raise ConfigError(f"solver.scheme must be one of {SCHEMES}")
        if s.snapshot_every is not None and s.snapshot_every < 1:
            raise ConfigError("solver.snapshot_every must be positive")
        return self

    def replace(self, **overrides):
        """Copy with dotted overrides, e.g. ``replace(**{"solver.dt": 0.1})``."""
        new = from_dict(to_dict(self))
        for key, value in overrides.items():
            section, _, name = key.rpartition(".")
            target = getattr(new, section) if section else new
            if not hasattr(target, name):
                raise ConfigError(f"unknown config field {key!r}")
            setattr(target, name, value)
        return new

    def to_ini(self):
        cp = _parser()
        cp["run"] = {"out": _fmt(self.out)}
        for name, _ in _SECTIONS:
            obj = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = _parser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        known = {"run"} | {name for name, _ in _SECTIONS}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigError(f"unknown config sections {sorted(extra)}")
        kwargs = {}
        for name, klass in _SECTIONS:
            values = dict(cp[name]) if cp.has_section(name) else {}
            kwargs[name] = _build(klass, values, name)
        cfg = cls(**kwargs)
        if cp.has_section("run"):
            run = dict(cp["run"])
            unknown = set(run) - {"out"}
            if unknown:
                raise ConfigError(f"unknown keys in [run]: {sorted(unknown)}")
            if "out" in run:
                cfg.out = _parse(run["out"], str, "run.out")
        return cfg

    def save(self, path):
        Path(path).write_text(self.to_ini())

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_ini(path.read_text())


def _parser():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(str(int(v)) for v in value)
    return str(value)


def _field_type(klass, name):
    hints = {f.name: f for f in dataclasses.fields(klass)}
    default = hints[name].default
    ann = hints[name].type
    if isinstance(ann, str):
        ann = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}[ann]
    return ann, default


def _parse(text, kind, name):
    text = text.strip()
    if text.lower() in ("auto", "none", ""):
        return () if kind is tuple else None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {text!r} as {kind.__name__}") from None
    return text


def _build(klass, values, section):
    names = {f.name for f in dataclasses.fields(klass)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {}
    for key, text in values.items():
        kind, _ = _field_type(klass, key)
        kwargs[key] = _parse(text, kind, f"{section}.{key}")
    return klass(**kwargs)


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def from_dict(d):
    kwargs = {name: klass(**d[name]) for name, klass in _SECTIONS}
    for name, _ in _SECTIONS:
        sec = kwargs[name]
        if isinstance(sec, SolverConfig):
            sec.snapshot_steps = tuple(sec.snapshot_steps)
    return ExperimentConfig(out=d.get("out", "run"), **kwargs)


def _dumbbell(n, steps, r, p):
    return ExperimentConfig(
        manifold=ManifoldConfig(kind="dumbbell", n=n, p=p, scale=1.0, seed=0,
                                rotation_seed=1 if p else None),
        embedding=EmbeddingConfig(method="diffusion_map", ell=3),
        tessellation=TessellationConfig(r=r, s=0.0),
        equilibrium=DensitySource(source="eigenfunction", index=8, floor=0.1),
        initial=DensitySource(source="eigenfunction", index=2, floor=0.1),
        solver=SolverConfig(dt=0.05, steps=steps, scheme="unconditional"),
        out="runs/dumbbell")


def _klein(n, steps, r):
    return ExperimentConfig(
        manifold=ManifoldConfig(kind="klein_bottle", n=n, seed=0),
        embedding=EmbeddingConfig(method="identity", ell=4),
        tessellation=TessellationConfig(r=r, s=0.0),
        equilibrium=DensitySource(source="eigenfunction", index=7, floor=0.1),
        initial=DensitySource(source="eigenfunction", index=2, floor=0.1),
        solver=SolverConfig(dt=0.05, steps=steps, scheme="unconditional"),
        out="runs/klein_bottle")


def _sphere(n, steps, r):
    return ExperimentConfig(
        manifold=ManifoldConfig(kind="sphere", n=n, seed=0),
        embedding=EmbeddingConfig(method="identity", ell=3),
        tessellation=TessellationConfig(r=r, s=0.0),
        equilibrium=DensitySource(source="coordinate", axis=2, coef=1.0),
        initial=DensitySource(source="coordinate", axis=0, coef=1.5),
        solver=SolverConfig(dt=0.05, steps=steps, scheme="unconditional"),
        out="runs/sphere")


PRESETS = {
    "dumbbell-full": lambda: _dumbbell(4000, 20000, 0.16, 200),
    "dumbbell-desk": lambda: _dumbbell(800, 20000, 0.36, 200),
    "klein_bottle-full": lambda: _klein(2000, 10000, 0.23),
    "klein_bottle-desk": lambda: _klein(800, 2000, 0.23),
    "sphere-full": lambda: _sphere(2000, 10000, 0.3),
    "sphere-desk": lambda: _sphere(1000, 2000, 0.3),
}


def preset(name):
    try:
        return PRESETS[name]().validate()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
