"""Dense symmetric eigensolver and linear solver with checked contracts.

Two eigen routes are available: a cyclic Jacobi sweep written here
(``method="jacobi"``) and LAPACK's ``syevr`` via :func:`scipy.linalg.eigh`
(``method="lapack"``, the default, used for the n ~ 10^3 matrices of the
diffusion map). Both go through the same post-processing: ascending order,
deterministic signs, and residual / orthonormality verification.
"""

import contextlib
import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from threadpoolctl import ThreadpoolController

__all__ = [
    "EigenSolverError",
    "SingularMatrixError",
    "SymmetricEigenResult",
    "fix_signs",
    "jacobi_eigh",
    "sym_eig",
    "solve_linear",
    "LinearSolver",
    "serial_blas",
]

RESIDUAL_TOL = 1e-10
ORTHO_TOL = 1e-10
SYMMETRY_TOL = 1e-12
DETERMINISTIC_ENV = "MANIFOLD_FP_DETERMINISTIC"

_controller = None


def serial_blas():
    """Context pinning BLAS to one thread so factorisations do not depend on
    the thread count. Disabled by setting ``MANIFOLD_FP_DETERMINISTIC=0``."""
    global _controller
    if os.environ.get(DETERMINISTIC_ENV, "1") == "0":
        return contextlib.nullcontext()
    if _controller is None:
        _controller = ThreadpoolController()
    return _controller.limit(limits=1, user_api="blas")


class EigenSolverError(RuntimeError):
    """Raised when an eigen decomposition misses its residual contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SymmetricEigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def residuals(self, A):
        R = A @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return np.linalg.norm(R, axis=0)


def fix_signs(vectors):
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties in magnitude resolve to the lowest row index (``argmax`` semantics).
    """
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.ndim == 1:
        return fix_signs(vectors[:, None])[:, 0]
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _off_norm(a):
    return np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))


def jacobi_eigh(A, tol=1e-14, max_sweeps=60):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` unsorted. Each rotation updates two
    rows/columns with vector operations, so this is practical up to a few
    hundred rows; :func:`sym_eig` defaults to LAPACK beyond that.
    """
    a = np.array(A, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v
    for sweep in range(max_sweeps + 1):
        off = _off_norm(a)
        if off <= tol * scale:
            return np.diag(a).copy(), v
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # theta^2 would overflow; t -> 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise EigenSolverError(
        f"Jacobi did not converge in {max_sweeps} sweeps "
        f"(off-diagonal norm {off:.3e})", residual=off)


def sym_eig(A, m=None, method="lapack", check=True):
    """The ``m`` algebraically smallest eigenpairs of a symmetric matrix.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric within 1e-12 elementwise.
    m : int, optional
        Number of pairs, ``1 <= m <= n``. Defaults to all of them.
    method : {"lapack", "jacobi"}
    check : bool
        Verify ``||A v - lambda v|| <= 1e-10 ||A||_F`` and orthonormality.

    Returns
    -------
    SymmetricEigenResult
        Eigenvalues ascending; eigenvector columns sign-fixed by
        :func:`fix_signs`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if m is None:
        m = n
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in [1, {n}], got {m}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    asym = np.max(np.abs(A - A.T)) if n > 1 else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(A))):
        raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    A = 0.5 * (A + A.T)

    if method == "lapack":
        with serial_blas():
            if m == n:
                w, V = scipy.linalg.eigh(A)
            else:
                w, V = scipy.linalg.eigh(A, subset_by_index=[0, m - 1], driver="evr")
    elif method == "jacobi":
        w, V = jacobi_eigh(A)
        order = np.argsort(w, kind="stable")[:m]
        w, V = w[order], V[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")

    V = fix_signs(V)
    result = SymmetricEigenResult(np.asarray(w, dtype=float), V)
    if check:
        fro = np.linalg.norm(A)
        res = result.residuals(A)
        worst = float(res.max()) if res.size else 0.0
        if worst > RESIDUAL_TOL * max(fro, 1e-300):
            raise EigenSolverError(
                f"eigen residual {worst:.3e} exceeds {RESIDUAL_TOL:g} * ||A||_F",
                residual=worst)
        gram = V.T @ V
        ortho = np.max(np.abs(gram - np.eye(m)))
        if ortho > ORTHO_TOL:
            raise EigenSolverError(
                f"eigenvectors not orthonormal (max deviation {ortho:.3e})",
                residual=worst)
    return result


class LinearSolver:
    """LU factorisation with partial pivoting, reusable across right-hand sides."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        self.A = A
        self.norm_inf = np.linalg.norm(A, np.inf)
        # singularity is reported below with our own exception
        with serial_blas(), warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
        diag = np.abs(np.diag(lu))
        if diag.size and diag.min() <= np.finfo(float).eps * A.shape[0] * max(self.norm_inf, 1e-300):
            raise SingularMatrixError("matrix is singular to working precision")
        self._lu = (lu, piv)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        with serial_blas():
            x = scipy.linalg.lu_solve(self._lu, b)
        bound = 1e-10 * (self.norm_inf * np.max(np.abs(x)) + np.max(np.abs(b)))
        resid = np.max(np.abs(self.A @ x - b))
        if resid > bound:
            raise SingularMatrixError(
                f"residual {resid:.3e} exceeds bound {bound:.3e}; matrix ill-conditioned")
        return x


def solve_linear(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting."""
    return LinearSolver(A).solve(b)
