"""Randomized Nystrom approximation, preconditioning and pivoted Cholesky."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gramian import DenseOperator, assemble_dense

__all__ = [
    "NystromFactor",
    "NystromPreconditioner",
    "nystrom_approximate",
    "effective_dimension",
    "pivoted_cholesky",
    "cholesky_factor_to_nystrom",
    "SketchFailure",
]


class SketchFailure(RuntimeError):
    """The shifted sketch was numerically indefinite for all retry seeds."""


@dataclass(frozen=True)
class NystromFactor:
    """Low-rank eigenpair estimate: G ~= U diag(eigenvalues) U^T."""

    basis: np.ndarray  # (p, l), orthonormal columns
    eigenvalues: np.ndarray  # (l,), nonnegative, descending

    def __post_init__(self):
        if np.any(self.eigenvalues < 0):
            raise ValueError("eigenvalue estimates must be nonnegative")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ValueError("eigenvalue estimates must be sorted descending")

    @property
    def rank(self):
        return self.basis.shape[1]

    def dense(self, k=None):
        """Dense reconstruction, optionally truncated to rank k."""
        if k is None:
            k = self.rank
        u = self.basis[:, :k]
        return (u * self.eigenvalues[:k]) @ u.T


def _as_operator(op):
    if isinstance(op, np.ndarray):
        return DenseOperator(op)
    return op


def nystrom_approximate(op, rank, seed, max_retries=3):
    """Stable randomized Nystrom approximation of an SPSD operator.

    Gaussian test matrix, thin QR, a Frobenius-norm shift for stability,
    Cholesky + triangular solve, thin SVD, shift removal.  The ``rank``
    matvecs are issued as one batched request.  A Cholesky failure
    (numerically indefinite shifted sketch) is retried with a fresh
    Gaussian matrix up to ``max_retries`` times.
    """
    op = _as_operator(op)
    p = op.dim
    if not 1 <= rank <= p:
        raise ValueError(f"rank must be in [1, {p}], got {rank}")
    rng = np.random.default_rng(seed)
    last_err = None
    for _ in range(max_retries):
        omega = rng.standard_normal((p, rank))
        omega, _ = np.linalg.qr(omega, mode="reduced")
        y = op.matmat(omega)
        shift = np.finfo(float).eps * np.linalg.norm(y, "fro")
        y_shifted = y + shift * omega
        try:
            chol = scipy.linalg.cholesky(omega.T @ y_shifted, lower=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as err:
            last_err = err
            continue
        b = scipy.linalg.solve_triangular(chol, y_shifted.T, lower=False, trans="T").T
        u, s, _ = np.linalg.svd(b, full_matrices=False)
        eigs = np.maximum(s**2 - shift, 0.0)
        return NystromFactor(u, eigs)
    raise SketchFailure(
        f"sketch Cholesky failed after {max_retries} attempts"
    ) from last_err


class NystromPreconditioner:
    """Inverse preconditioner for (G + mu I) from a Nystrom factor.

    P^{-1} v = (lam_l + mu) U (Lam + mu I)^{-1} U^T v + (v - U U^T v),
    which leaves the orthogonal complement of range(U) untouched and is
    SPD whenever lam_l + mu > 0.
    """

    def __init__(self, factor, mu):
        if factor.eigenvalues[-1] + mu <= 0:
            raise ValueError("need smallest eigenvalue estimate + mu > 0")
        self.factor = factor
        self.mu = float(mu)
        self._scale = factor.eigenvalues[-1] + mu
        self._inv = 1.0 / (factor.eigenvalues + mu)

    def apply(self, v):
        u = self.factor.basis
        utv = u.T @ v
        return self._scale * (u @ (self._inv * utv)) + (v - u @ utv)

    def __call__(self, v):
        return self.apply(v)

    def dense_inverse(self):
        """Dense P^{-1} (test oracle)."""
        u = self.factor.basis
        p = u.shape[0]
        return self._scale * (u * self._inv) @ u.T + (np.eye(p) - u @ u.T)


def effective_dimension(eigs, mu):
    """Smoothed count of eigenvalues above mu: sum lam_i / (lam_i + mu)."""
    eigs = np.asarray(eigs, dtype=float)
    if mu <= 0:
        raise ValueError("mu must be positive")
    if np.any(eigs < 0):
        raise ValueError("eigenvalues must be nonnegative")
    return float(np.sum(eigs / (eigs + mu)))


def pivoted_cholesky(op, rank, strategy, seed=None, tol_factor=1e-12, guard=2000):
    """Rank-``rank`` partial Cholesky factor of an SPSD operator.

    Pivot strategies: ``greedy`` (largest residual diagonal), ``uniform``
    (uniform random among columns with positive residual), ``rp``
    (random, proportional to the residual diagonal).  Returns (F, pivots)
    with F F^T ~= G; equals the column Nystrom approximation on the pivot
    set.  Needs the diagonal of G, obtained via matvecs for matrix-free
    operators (hence the guard on p).
    """
    op = _as_operator(op)
    p = op.dim
    if p > guard:
        raise ValueError(f"pivoted Cholesky needs the diagonal; p={p} exceeds {guard}")
    if strategy not in ("greedy", "uniform", "rp"):
        raise ValueError(f"unknown pivot strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    if isinstance(op, DenseOperator):
        matrix = op.matrix
        diag = matrix.diagonal().copy()
        column = lambda i: matrix[:, i].copy()
    else:
        matrix = assemble_dense(op, guard=guard)
        diag = matrix.diagonal().copy()
        column = lambda i: matrix[:, i].copy()

    tol = tol_factor * max(diag.max(initial=0.0), 1.0)
    factor = np.zeros((p, rank))
    pivots = []
    for t in range(rank):
        if np.any(diag < -tol):
            raise ArithmeticError("residual diagonal went negative beyond tolerance")
        active = diag > tol
        if not np.any(active):
            break  # residual numerically zero: factor is already exact
        if strategy == "greedy":
            i = int(np.argmax(diag))
        elif strategy == "uniform":
            i = int(rng.choice(np.flatnonzero(active)))
        else:  # rp
            probs = np.clip(diag, 0.0, None)
            probs /= probs.sum()
            i = int(rng.choice(p, p=probs))
            if not active[i]:  # numerically exhausted pivot; fall back
                i = int(np.argmax(diag))
        col = column(i) - factor[:, :t] @ factor[i, :t]
        factor[:, t] = col / np.sqrt(diag[i])
        diag -= factor[:, t] ** 2
        diag[i] = 0.0
        pivots.append(i)
    return factor, pivots


def cholesky_factor_to_nystrom(factor):
    """Eigendecompose F F^T so pivoted-Cholesky factors reuse the
    Nystrom preconditioner formula."""
    u, s, _ = np.linalg.svd(factor, full_matrices=False)
    return NystromFactor(u, s**2)
