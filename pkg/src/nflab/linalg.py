"""Matrix-free preconditioned conjugate gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NonConvergence


def pcg(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, diag, *,
        x0=None, tol: float = 1e-12, maxiter: int | None = None,
        restarts: int = 3):
    """Jacobi-preconditioned CG for a symmetric positive definite operator.

    Parameters
    ----------
    apply : callable
        Matrix-free product ``x -> A x`` on arrays shaped like ``b``.
    b : ndarray
        Right-hand side.
    diag : ndarray or float
        Diagonal of ``A`` used as preconditioner.
    x0 : ndarray, optional
        Starting guess.
    tol : float
        Stop once ``||b - A x|| <= tol ||b||`` in the Euclidean norm.
    maxiter : int, optional
        Iteration cap, default ``50 * b.size``.
    restarts : int
        On convergence the true residual is recomputed; if it drifted
        above ``tol`` the iteration is restarted from the current iterate
        at most this many times.

    Returns
    -------
    x : ndarray
    iterations : int
    residual : float
        Final relative true residual.
    """
    b = np.asarray(b, dtype=float)
    if maxiter is None:
        maxiter = 50 * b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    # solve for b / ||b|| so tiny right-hand sides do not underflow
    b = b / bnorm
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float) / bnorm
    scale, bnorm = bnorm, 1.0
    r = b - apply(x)
    res = float(np.linalg.norm(r)) / bnorm
    total = 0
    for _ in range(restarts + 1):
        if res <= tol:
            return x * scale, total, res
        z = r / diag
        d = z.copy()
        rz = float(np.vdot(r, z))
        while True:
            if total >= maxiter:
                raise NonConvergence(
                    f"CG did not reach {tol:g} in {maxiter} iterations "
                    f"(residual {res:.3e})", total, res)
            total += 1
            ad = apply(d)
            curv = float(np.vdot(d, ad))
            if not curv > 0:
                # exact solution reached or underflow; fall through to the true residual
                break
            alpha = rz / curv
            x += alpha * d
            r -= alpha * ad
            res = float(np.linalg.norm(r)) / bnorm
            if res <= tol:
                break
            z = r / diag
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
        r = b - apply(x)
        res = float(np.linalg.norm(r)) / bnorm
    if res <= tol:
        return x * scale, total, res
    raise NonConvergence(f"CG residual stagnated at {res:.3e} above {tol:g}", total, res)
