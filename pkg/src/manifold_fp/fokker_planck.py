"""Finite-volume Fokker-Planck solver as a reversible Markov jump process.

Given cell volumes ``|C_i|``, face areas ``|G_ij|``, site distances
``d_ij`` and equilibrium weights ``pi_i``, the symmetric face flux

    w_ij = (pi_i + pi_j) |G_ij| / (2 d_ij)

defines jump rates ``lambda_i = sum_j w_ij / (pi_i |C_i|)`` and transition
probabilities ``P_ij = w_ij / (lambda_i pi_i |C_i|)``. The ratio
``u = rho / pi`` then obeys the backward equation ``du/dt = Q u`` with
``Q = diag(lambda) (P - I)``.

Three time steppers act on ``u``:

* ``unconditional``: ``u+ = (u + dt lambda P u) / (1 + lambda dt)``,
  stable for every ``dt``;
* ``explicit``: forward Euler ``u+ = (I + dt Q) u``, needs
  ``dt <= 1 / max(lambda)``;
* ``implicit``: backward Euler ``(I - dt Q) u+ = u``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .linalg import LinearSolver, sym_eig
from .voronoi import Tessellation, minimum_image

__all__ = [
    "SCHEMES",
    "CFLError",
    "DisconnectedGraphError",
    "Generator",
    "DensityState",
    "DecaySpectrum",
    "Trajectory",
    "equilibrium_weights",
    "assemble_generator",
    "adjust_initial",
    "step_unconditional",
    "step_explicit_cfl",
    "step_implicit",
    "step",
    "theoretic_decay_rate",
    "decay_spectrum",
    "diagnostics",
    "solve",
    "measured_decay_slope",
]

SCHEMES = ("unconditional", "explicit", "implicit")


class CFLError(ValueError):
    def __init__(self, dt, limit):
        super().__init__(f"dt={dt:g} violates the CFL bound dt <= min 1/lambda = {limit:g}")
        self.dt = dt
        self.limit = limit


class DisconnectedGraphError(ValueError):
    def __init__(self, sizes):
        sizes = sorted((int(s) for s in sizes), reverse=True)
        super().__init__(f"face graph has {len(sizes)} components of sizes {sizes}")
        self.sizes = sizes


@dataclass(frozen=True)
class Generator:
    """Jump rates, transition probabilities and equilibrium of the scheme.

    ``rates`` is the sparse off-diagonal part of ``Q`` (entries
    ``lambda_i P_ij``); ``flux`` holds ``w_ij`` per stored face.
    """

    lam: np.ndarray
    P: sparse.csr_matrix
    rates: sparse.csr_matrix
    pi: np.ndarray
    volumes: np.ndarray
    face_i: np.ndarray
    face_j: np.ndarray
    face_area: np.ndarray
    face_dist: np.ndarray
    flux: np.ndarray
    kT: float = 1.0
    n_components: int = 1
    _solvers: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return self.lam.shape[0]

    @property
    def connected(self):
        return self.n_components == 1

    def Q(self, dense=True):
        """Backward-equation generator ``Q = rates - diag(lambda)``."""
        Qs = self.rates - sparse.diags(self.lam)
        return Qs.toarray() if dense else Qs.tocsr()

    def cfl_limit(self):
        return float(1.0 / self.lam.max())

    def weighted_mass_weights(self, dt):
        return (1.0 + self.lam * dt) * self.volumes

    def detailed_balance_residual(self):
        """Max relative mismatch between ``lambda_i P_ij pi_i |C_i|``, its
        transpose and the face flux ``w_ij``."""
        fi, fj = self.face_i, self.face_j
        Pij = np.asarray(self.P[fi, fj]).ravel()
        Pji = np.asarray(self.P[fj, fi]).ravel()
        lhs = self.lam[fi] * Pij * self.pi[fi] * self.volumes[fi]
        rhs = self.lam[fj] * Pji * self.pi[fj] * self.volumes[fj]
        scale = np.maximum(np.abs(self.flux), 1e-300)
        return float(max(np.max(np.abs(lhs - rhs) / scale, initial=0.0),
                         np.max(np.abs(lhs - self.flux) / scale, initial=0.0)))

    def implicit_solver(self, dt):
        key = float(dt)
        if key not in self._solvers:
            self._solvers[key] = LinearSolver(np.eye(self.n) - dt * self.Q())
        return self._solvers[key]


@dataclass(frozen=True)
class DensityState:
    rho: np.ndarray
    step: int = 0
    dt: float = 0.0
    scheme: str = "unconditional"

    @property
    def time(self):
        return self.step * self.dt


def equilibrium_weights(volumes, values=None, potential=None, kT=1.0):
    """Normalised equilibrium ``pi`` with ``sum pi_i |C_i| = 1``.

    Either positive per-point ``values`` or a ``potential`` U with
    ``pi ~ exp(-U / kT)``.
    """
    volumes = np.asarray(volumes, dtype=float)
    if (values is None) == (potential is None):
        raise ValueError("give exactly one of values or potential")
    if values is not None:
        z = np.asarray(values, dtype=float)
        if np.any(~np.isfinite(z)) or np.any(z <= 0):
            raise ValueError("equilibrium values must be finite and positive")
    else:
        if not kT > 0:
            raise ValueError(f"kT must be positive, got {kT}")
        U = np.asarray(potential, dtype=float) / kT
        if not np.all(np.isfinite(U)):
            raise ValueError("potential must be finite")
        # shift by min(U) so exp never overflows; the shift cancels on normalising
        z = np.exp(-(U - U.min()))
    if z.shape != volumes.shape:
        raise ValueError(f"got {z.shape[0]} values for {volumes.shape[0]} cells")
    return z / np.sum(z * volumes)


def assemble_generator(tess, coords=None, pi=None, kT=1.0, require_connected=True):
    """Build the Markov generator of the finite-volume scheme.

    Parameters
    ----------
    tess : Tessellation
    coords : array_like or PointCloud, optional
        Site coordinates used for ``d_ij``; minimum-image distances when the
        tessellation is periodic. Defaults to the distances stored in ``tess``.
    pi : array_like
        Positive equilibrium weights (see :func:`equilibrium_weights`).
    require_connected : bool
        Raise :class:`DisconnectedGraphError` unless the face graph is
        connected.
    """
    if pi is None:
        raise ValueError("equilibrium weights pi are required")
    pi = np.asarray(pi, dtype=float)
    n = tess.n
    if pi.shape != (n,):
        raise ValueError(f"pi has shape {pi.shape}, expected ({n},)")
    if np.any(pi <= 0) or not np.all(np.isfinite(pi)):
        raise ValueError("pi must be finite and positive")
    fi, fj, area = tess.face_i, tess.face_j, tess.face_area
    if coords is not None:
        Y = np.asarray(getattr(coords, "points", coords), dtype=float)
        dist = np.linalg.norm(minimum_image(Y[fi] - Y[fj], tess.period), axis=1)
    else:
        dist = tess.face_dist
    if np.any(dist <= 0):
        bad = int(np.flatnonzero(dist <= 0)[0])
        raise ValueError(f"sites {fi[bad]} and {fj[bad]} coincide")

    vol = tess.volumes
    flux = (pi[fi] + pi[fj]) * area / (2.0 * dist)
    W = sparse.coo_matrix((flux, (fi, fj)), shape=(n, n))
    W = (W + W.T).tocsr()
    out = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.flatnonzero(out <= 0)
    if isolated.size:
        raise ValueError(f"isolated points with no faces: {isolated[:10].tolist()}")
    n_comp, labels = connected_components(W, directed=False)
    if n_comp > 1 and require_connected:
        raise DisconnectedGraphError(np.bincount(labels))

    mass = pi * vol
    lam = out / mass
    rates = sparse.diags(1.0 / mass) @ W
    P = sparse.diags(1.0 / (lam * mass)) @ W
    gen = Generator(lam=lam, P=P.tocsr(), rates=rates.tocsr(), pi=pi,
                    volumes=np.asarray(vol, dtype=float), face_i=fi, face_j=fj,
                    face_area=area, face_dist=dist, flux=flux, kT=float(kT),
                    n_components=int(n_comp))
    resid = gen.detailed_balance_residual()
    if resid > 1e-12:
        raise ArithmeticError(f"detailed balance violated at assembly (residual {resid:.3e})")
    return gen


def adjust_initial(rho0, gen, dt, scheme="unconditional"):
    """Rescale ``rho0`` so its conserved mass equals that of ``pi``.

    The unconditional scheme conserves ``sum (1 + lambda dt) rho |C|``; the
    explicit and implicit schemes conserve ``sum rho |C|``.
    """
    rho0 = np.asarray(rho0, dtype=float)
    if np.any(rho0 < 0):
        raise ValueError("initial density must be non-negative")
    w = gen.weighted_mass_weights(dt) if scheme == "unconditional" else gen.volumes
    m0 = float(np.sum(w * rho0))
    if m0 <= 0:
        raise ValueError("initial density has zero mass")
    return rho0 * (float(np.sum(w * gen.pi)) / m0)


def _as_state(state, dt, scheme):
    if isinstance(state, DensityState):
        return state
    return DensityState(np.asarray(state, dtype=float), 0, dt, scheme)


def step_unconditional(state, gen, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = _as_state(state, dt, "unconditional")
    u = st.rho / gen.pi
    u_new = (u + dt * (gen.rates @ u)) / (1.0 + dt * gen.lam)
    return DensityState(u_new * gen.pi, st.step + 1, dt, "unconditional")


def step_explicit_cfl(state, gen, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    limit = gen.cfl_limit()
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(dt, limit)
    st = _as_state(state, dt, "explicit")
    u = st.rho / gen.pi
    u_new = u + dt * (gen.rates @ u - gen.lam * u)
    return DensityState(u_new * gen.pi, st.step + 1, dt, "explicit")


def step_implicit(state, gen, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = _as_state(state, dt, "implicit")
    u = st.rho / gen.pi
    u_new = gen.implicit_solver(dt).solve(u)
    return DensityState(u_new * gen.pi, st.step + 1, dt, "implicit")


_STEPPERS = {"unconditional": step_unconditional,
             "explicit": step_explicit_cfl,
             "implicit": step_implicit}


def step(state, gen, dt, scheme="unconditional"):
    try:
        fn = _STEPPERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}") from None
    return fn(state, gen, dt)


@dataclass(frozen=True)
class DecaySpectrum:
    mu2: float
    leading: float
    second_largest: float
    most_negative: float
    ground_state_deviation: float
    dt: float
    scheme: str


def decay_spectrum(gen, dt, scheme="unconditional"):
    """Leading and subleading eigenvalues of the one-step operator on ``u``.

    Each operator is self-adjoint in a weighted l^2 space and is diagonalised
    through its symmetric conjugate:

    * unconditional: ``I + dt Qhat`` with ``Qhat = diag(1/(1+lambda dt)) Q``,
      weights ``(1 + lambda dt) pi |C|``;
    * explicit: ``I + dt Q``; implicit: ``(I - dt Q)^{-1}``; weights ``pi |C|``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not gen.connected:
        raise DisconnectedGraphError([gen.n_components])
    Q = gen.Q()
    n = gen.n
    if scheme == "unconditional":
        w = (1.0 + gen.lam * dt) * gen.pi * gen.volumes
        M = np.eye(n) + dt * Q / (1.0 + gen.lam * dt)[:, None]
    elif scheme in ("explicit", "implicit"):
        w = gen.pi * gen.volumes
        M = np.eye(n) + dt * Q
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    sw = np.sqrt(w)
    S = sw[:, None] * M / sw[None, :]
    S = 0.5 * (S + S.T)
    top = sym_eig(-S, 2)
    low = sym_eig(S, 1)
    lead, second = -top.eigenvalues[0], -top.eigenvalues[1]
    most_neg = low.eigenvalues[0]
    ground = top.eigenvectors[:, 0] / sw
    ground = ground / ground.mean()
    dev = float(np.max(np.abs(ground - 1.0)))
    if scheme == "implicit":
        # eigenvalues m of I + dt Q map to 1 / (2 - m) for (I - dt Q)^{-1}
        lead, second, most_neg = (1.0 / (2.0 - lead), 1.0 / (2.0 - second),
                                  1.0 / (2.0 - most_neg))
    mu2 = max(abs(second), abs(most_neg))
    return DecaySpectrum(mu2=float(mu2), leading=float(lead), second_largest=float(second),
                         most_negative=float(most_neg), ground_state_deviation=dev,
                         dt=float(dt), scheme=scheme)


def theoretic_decay_rate(gen, dt, scheme="unconditional"):
    """Second-largest eigenvalue magnitude ``mu2`` of the one-step operator."""
    return decay_spectrum(gen, dt, scheme).mu2


def diagnostics(state, gen, reference=None):
    """Mass, weighted mass, chi^2 functional and error norms of a state."""
    st = _as_state(state, 0.0, "unconditional")
    rho = st.rho
    if rho.shape != gen.pi.shape:
        raise ValueError(f"state has {rho.shape[0]} cells, generator has {gen.n}")
    vol = gen.volumes
    out = {
        "step": st.step,
        "time": st.time,
        "mass": float(np.sum(rho * vol)),
        "weighted_mass": float(np.sum((1.0 + gen.lam * st.dt) * rho * vol)),
        "chi2": float(np.sum(rho * rho * vol / gen.pi)),
        "linf_err": float(np.max(np.abs(rho / gen.pi - 1.0))),
    }
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        if ref.shape != rho.shape:
            raise ValueError("reference has mismatched length")
        e = ref - rho
        out["weighted_l2_err"] = float(np.sum(e * e * vol / gen.pi))
    return out


@dataclass
class Trajectory:
    """Per-step diagnostics plus optional density snapshots."""

    scheme: str
    dt: float
    steps: np.ndarray
    mass: np.ndarray
    weighted_mass: np.ndarray
    chi2: np.ndarray
    linf_err: np.ndarray
    u_max: np.ndarray
    u_min: np.ndarray
    final: DensityState
    initial: np.ndarray
    snapshots: dict = field(default_factory=dict)
    adjust_factor: float = 1.0

    @property
    def times(self):
        return self.steps * self.dt

    def columns(self):
        return {"step": self.steps, "time": self.times, "mass": self.mass,
                "weighted_mass": self.weighted_mass, "chi2": self.chi2,
                "linf_err": self.linf_err}


def solve(gen, rho0, dt, steps, scheme="unconditional", adjust=True,
          snapshot_every=None, snapshot_steps=None, explicit_substeps=False):
    """Integrate ``steps`` steps and record diagnostics after every step.

    Row 0 of every record is the (adjusted) initial state. With
    ``explicit_substeps`` the explicit scheme splits each ``dt`` into the
    fewest equal substeps that satisfy the CFL bound.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    rho0 = np.asarray(rho0, dtype=float)
    factor = 1.0
    if adjust:
        adjusted = adjust_initial(rho0, gen, dt, scheme)
        factor = float(adjusted[0] / rho0[0]) if rho0[0] != 0 else float(
            np.sum(adjusted) / np.sum(rho0))
        rho0 = adjusted
    pi, lam, vol, R = gen.pi, gen.lam, gen.volumes, gen.rates
    weights_w = (1.0 + lam * dt) * vol
    m = steps + 1
    mass = np.empty(m)
    wmass = np.empty(m)
    chi2 = np.empty(m)
    linf = np.empty(m)
    umax = np.empty(m)
    umin = np.empty(m)
    snaps = {}
    wanted = set(snapshot_steps or ())

    substeps = 1
    if scheme == "explicit":
        limit = gen.cfl_limit()
        if explicit_substeps:
            substeps = max(1, int(np.ceil(dt / limit * (1.0 - 1e-12))))
        elif dt > limit * (1.0 + 1e-12):
            raise CFLError(dt, limit)
    h = dt / substeps
    if scheme == "implicit":
        solver = gen.implicit_solver(dt)

    u = rho0 / pi
    for k in range(m):
        if k > 0:
            if scheme == "unconditional":
                u = (u + dt * (R @ u)) / (1.0 + dt * lam)
            elif scheme == "explicit":
                for _ in range(substeps):
                    u = u + h * (R @ u - lam * u)
            else:
                u = solver.solve(u)
        rho = u * pi
        mass[k] = np.sum(rho * vol)
        wmass[k] = np.sum(weights_w * rho)
        chi2[k] = np.sum(u * u * pi * vol)
        linf[k] = np.max(np.abs(u - 1.0))
        umax[k] = u.max()
        umin[k] = u.min()
        if (snapshot_every and k % snapshot_every == 0) or k in wanted:
            snaps[k] = rho.copy()
    final = DensityState(u * pi, steps, dt, scheme)
    return Trajectory(scheme=scheme, dt=float(dt), steps=np.arange(m), mass=mass,
                      weighted_mass=wmass, chi2=chi2, linf_err=linf, u_max=umax,
                      u_min=umin, final=final, initial=rho0, snapshots=snaps,
                      adjust_factor=factor)


def measured_decay_slope(linf_err, floor=1e-11, transient=0.2, min_points=20):
    """Least-squares slope of ``log(linf_err)`` against step index.

    The first ``transient`` fraction of the above-``floor`` steps is dropped
    so that the subleading modes have died out.
    """
    e = np.asarray(linf_err, dtype=float)
    ok = np.flatnonzero(e > floor)
    if ok.size == 0:
        raise ValueError("error never exceeds the floor")
    last = ok[-1]
    first = int(transient * last)
    k = np.arange(first, last + 1)
    if k.size < min_points:
        raise ValueError(f"only {k.size} post-transient points above the floor")
    slope = np.polyfit(k, np.log(e[k]), 1)[0]
    return float(slope), (int(first), int(last))
