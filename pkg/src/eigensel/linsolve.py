"""Inner linear solvers: GMRES, correction equations, and null vectors.

Everything here is desk-scale friendly but keeps the large-scale shape: the
operators may be dense arrays, sparse matrices, or matvec callables, and the
preconditioner is an LU factorization of the problem evaluated at the target.

The three consumers are

* the Jacobi-Davidson correction equation
  (I - P'(theta) v v* / (v* P'(theta) v)) P(theta) t = -r with t orthogonal
  to v, solved by a few steps of right-preconditioned GMRES;
* null vectors of (almost) singular matrices, used to obtain left
  eigenvectors from F(lam)* y = 0 once a right eigenpair has converged;
* plain preconditioned solves.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import homogeneous as hom

__all__ = [
    "LuPreconditioner",
    "lu_preconditioner",
    "gmres",
    "projected_correction_solve",
    "null_vector",
    "left_eigenvector",
    "NullVectorError",
]


class NullVectorError(RuntimeError):
    """null_vector could not reach the requested ||Z y|| tolerance."""


def _as_matvec(A):
    """Return a matvec callable for an array, sparse matrix, or callable."""
    if callable(A) and not hasattr(A, "shape"):
        return A
    return lambda x: A @ x


def _as_psolve(M):
    """Return an apply-inverse callable for a preconditioner argument."""
    if M is None:
        return None
    if hasattr(M, "solve"):
        return M.solve
    return M


class LuPreconditioner:
    """LU factorization of a matrix, used as an (exact) preconditioner.

    Dense matrices go through scipy.linalg.lu_factor, sparse ones through
    scipy.sparse.linalg.splu.  An exactly singular matrix gets a tiny
    diagonal regularization (1e-14 times the 1-norm) so that factorization
    and solves stay finite; for eigenvalue targets this happens only when
    the target is itself an eigenvalue, in which case shifting the target
    slightly is the better fix (mentioned in the raised warning).
    """

    def __init__(self, A):
        self._sparse = sp.issparse(A)
        self.shape = A.shape
        if self._sparse:
            A = A.tocsc()
            try:
                self._lu = spla.splu(A)
            except RuntimeError:
                from .problems import norm1

                self._warn_singular()
                delta = 1e-14 * max(norm1(A), 1e-300)
                self._lu = spla.splu(A + delta * sp.eye_array(A.shape[0], format="csc"))
        else:
            A = np.asarray(A, dtype=complex)
            with warnings.catch_warnings():
                # exact singularity is handled below, scipy need not shout
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(A, check_finite=False)
            d = np.abs(np.diag(lu))
            if d.size and d.min() == 0.0:
                from .problems import norm1

                self._warn_singular()
                delta = 1e-14 * max(norm1(A), 1e-300)
                lu, piv = sla.lu_factor(
                    A + delta * np.eye(A.shape[0]), check_finite=False
                )
            self._lu = (lu, piv)

    @staticmethod
    def _warn_singular():
        warnings.warn(
            "matrix is exactly singular; factoring with a 1e-14 diagonal "
            "regularization (if this is an eigenvalue target, shift it "
            "slightly)",
            stacklevel=3,
        )

    def solve(self, b, adjoint=False):
        if self._sparse:
            return self._lu.solve(np.asarray(b, dtype=complex),
                                  trans="H" if adjoint else "N")
        return sla.lu_solve(self._lu, np.asarray(b, dtype=complex),
                            trans=2 if adjoint else 0, check_finite=False)

    def __call__(self, b):
        return self.solve(b)


def lu_preconditioner(problem, target):
    """LU of the problem evaluated at the target (scalar or projective)."""
    if isinstance(target, hom.ProjectivePoint):
        A = hom.hom_eval(problem, hom.scale_canonical(target))
    else:
        A = problem.eval(complex(target))
    return LuPreconditioner(A)


def gmres(A, b, x0=None, tol=1e-8, maxiter=None, M=None):
    """Right-preconditioned GMRES (single cycle, no restarts).

    Solves A x = b to a relative residual tol, or stops after maxiter Arnoldi
    steps.  M is applied as a right preconditioner: the Krylov space is built
    for A M^{-1} and the returned x is M^{-1} of the inner solution, so
    reported residuals are true residuals of the original system.

    Returns (x, relres, iterations); the residual sequence is monotone
    because each iterate minimizes over a growing Krylov space.
    """
    matvec = _as_matvec(A)
    psolve = _as_psolve(M)
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    if maxiter is None:
        maxiter = n
    maxiter = min(maxiter, n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0

    if x0 is None:
        x0 = np.zeros_like(b)
        r0 = b.copy()
    else:
        x0 = np.asarray(x0, dtype=complex)
        r0 = b - matvec(x0)
    beta = np.linalg.norm(r0)
    if beta <= tol * bnorm:
        return x0, beta / bnorm, 0

    V = np.empty((n, maxiter + 1), dtype=complex)
    H = np.zeros((maxiter + 1, maxiter), dtype=complex)
    V[:, 0] = r0 / beta
    e1 = np.zeros(maxiter + 1, dtype=complex)
    e1[0] = beta

    k_used = 0
    y = None
    relres = beta / bnorm
    for k in range(maxiter):
        z = psolve(V[:, k]) if psolve is not None else V[:, k]
        w = matvec(z)
        # modified Gram-Schmidt with one reorthogonalization pass
        for j in range(k + 1):
            H[j, k] = np.vdot(V[:, j], w)
            w = w - H[j, k] * V[:, j]
        for j in range(k + 1):
            c = np.vdot(V[:, j], w)
            H[j, k] += c
            w = w - c * V[:, j]
        hnext = np.linalg.norm(w)
        H[k + 1, k] = hnext
        k_used = k + 1
        y, res, _, _ = np.linalg.lstsq(H[: k + 2, : k + 1], e1[: k + 2], rcond=None)
        relres = np.linalg.norm(e1[: k + 2] - H[: k + 2, : k + 1] @ y) / bnorm
        if hnext <= 1e-14 * max(1.0, beta):
            break  # happy breakdown: solution is exact in the Krylov space
        V[:, k + 1] = w / hnext
        if relres <= tol:
            break
    u = V[:, :k_used] @ y
    if psolve is not None:
        u = psolve(u)
    return x0 + u, float(relres), k_used


def _theta_matrices(problem, theta):
    """(F(theta), F'(theta)) for a scalar or projective theta."""
    if isinstance(theta, hom.ProjectivePoint):
        p = hom.scale_canonical(theta)
        return hom.hom_eval(problem, p), hom.hom_D(problem, p)
    theta = complex(theta)
    return problem.eval(theta), problem.derivative(theta)


def projected_correction_solve(problem, theta, v, r, steps=10, M=None, tol=1e-6):
    """Jacobi-Davidson correction equation at a Ritz pair (theta, v).

    Solves (I - p v*/(v* p)) F(theta) t = -r for t orthogonal to v, where
    p = F'(theta) v, with at most `steps` GMRES iterations.  The
    preconditioner M (an LU at the target) is wrapped with the standard
    projected form so preconditioned iterates stay in the complement of v.
    In homogeneous mode theta is a ProjectivePoint and the homogeneous
    evaluation/derivative take the roles of F(theta) and F'(theta).

    Degenerate v* F'(theta) v (below 1e-14 of ||p||) falls back to a plain
    preconditioned residual step, projected against v.
    """
    v = np.asarray(v, dtype=complex)
    r = np.asarray(r, dtype=complex)
    Fmat, dF = _theta_matrices(problem, theta)
    p = dF @ v
    vp = np.vdot(v, p)
    psolve = _as_psolve(M)

    def _proj_v(z):
        return z - v * np.vdot(v, z)

    if abs(vp) <= 1e-14 * np.linalg.norm(p):
        t = psolve(-r) if psolve is not None else -r
        return _proj_v(t)

    def op(s):
        w = Fmat @ _proj_v(s)
        return w - p * (np.vdot(v, w) / vp)

    rhs = -(r - p * (np.vdot(v, r) / vp))

    Mproj = None
    if psolve is not None:
        q = psolve(p)
        vq = np.vdot(v, q)
        if abs(vq) > 1e-300:
            def Mproj(z):
                w = psolve(z)
                return w - q * (np.vdot(v, w) / vq)
        else:
            Mproj = psolve

    t, _, _ = gmres(op, rhs, tol=tol, maxiter=steps, M=Mproj)
    return _proj_v(t)


def _direct_solver(Z):
    """Factor Z once and return b -> Z^{-1} b (regularized if singular).

    Exact singularity is the expected case here (null vectors of singular
    matrices are the whole purpose), so the regularization note that
    LuPreconditioner emits for preconditioner use is silenced.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        fac = LuPreconditioner(Z)
    return fac.solve


def null_vector(Z, tol, y0=None, solve=None, M=None, seed=0, gmres_steps=200,
                retries=3):
    """Approximate null vector of an (almost) singular matrix Z.

    First pass: b = Z y0 / ||Z y0||, solve Z x = b approximately, and
    normalize the difference y = (x - y0)/||x - y0||; the inexactness of the
    inner solve surfaces the near-null direction.  When the inner solve is
    (close to) exact, x is parallel to y0 and the difference carries no null
    information, so on failure of the ||Z y|| <= tol check the retries solve
    against fresh seeded random right-hand sides instead (inverse iteration,
    whose solutions are dominated by the null direction).  The best candidate
    over all attempts is kept.

    Z may be an array, sparse matrix, or matvec callable (then an inner
    `solve` callable or preconditioner M for the internal GMRES must make the
    solves possible).  tol is an absolute bound on ||Z y|| for unit y; pick
    it relative to the scale of Z.  Raises NullVectorError if no attempt
    reaches tol.
    """
    matvec = _as_matvec(Z)
    if solve is None:
        if hasattr(Z, "shape"):
            solve = _direct_solver(Z)
        else:
            def solve(b):
                x, _, _ = gmres(matvec, b, tol=min(tol, 1e-8),
                                maxiter=gmres_steps, M=M)
                return x

    if hasattr(Z, "shape"):
        n = Z.shape[0]
    else:
        n = np.asarray(y0).shape[0]
    rng = np.random.default_rng(seed)

    def _random_unit():
        w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return w / np.linalg.norm(w)

    if y0 is None:
        y0 = _random_unit()
    else:
        y0 = np.asarray(y0, dtype=complex)
        y0 = y0 / np.linalg.norm(y0)

    best = None
    best_res = np.inf

    def _consider(y):
        nonlocal best, best_res
        ny = np.linalg.norm(y)
        if ny == 0.0 or not np.isfinite(ny):
            return False
        y = y / ny
        res = np.linalg.norm(matvec(y))
        if res < best_res:
            best, best_res = y, res
        return res <= tol

    # Step 1-3 with the given starting vector.
    b = matvec(y0)
    nb = np.linalg.norm(b)
    if nb <= tol:
        return y0  # y0 is already a null vector at the requested level
    if _consider(solve(b / nb) - y0):
        return best

    # Retries: fresh right-hand sides, null direction amplified by Z^{-1}.
    for _ in range(retries):
        if _consider(solve(_random_unit())):
            return best

    if best_res <= tol:
        return best
    raise NullVectorError(
        f"null vector stagnated: best ||Z y|| = {best_res:.3e} > tol = {tol:.3e}"
    )


def left_eigenvector(problem, theta, rtol=1e-8, M=None, seed=0):
    """Left eigenvector y with F(theta)* y ~ 0 for a converged eigenvalue.

    theta may be a scalar or a ProjectivePoint (for homogeneous solves,
    including the infinite eigenvalue).  The null vector tolerance is rtol
    times the residual scale sum_i |theta|^i ||A_i||_1 (its homogeneous
    analogue for projective theta).  At desk scale the inner solves use one
    LU factorization of F(theta)*; a preconditioner M is only consulted when
    F(theta) is not materializable.
    """
    if isinstance(theta, hom.ProjectivePoint):
        p = hom.scale_canonical(theta)
        F = hom.hom_eval(problem, p)
        scale = hom.hom_tolerance_scale(problem, p)
    else:
        theta = complex(theta)
        F = problem.eval(theta)
        scale = problem.tolerance_scale(abs(theta))
    Z = F.conj().T
    if sp.issparse(Z):
        Z = Z.tocsr()
    return null_vector(Z, tol=rtol * scale, M=M, seed=seed)
