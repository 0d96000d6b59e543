"""Timestep stability of leap-frog systems and its enforcement above the CFL limit.

For positive definite ``De`` and ``Dm`` the update is stable exactly when
every singular value of ``De^{-1/2} K Dm^{-1/2}`` is below ``2/dt``.  Clipping
the offending singular values to ``gamma * 2/dt`` and mapping back yields a
perturbed curl matrix that satisfies the bound by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .assembly import SystemMatrices
from .errors import InvalidParameterError, InvariantViolation, SingularOperatorError
from .reduction import ReducedModel

DEFAULT_GAMMA = 0.9999
EIG_FLOOR = 1e-14


@dataclass(frozen=True)
class StabilityReport:
    singular_values: np.ndarray
    limit: float
    violating_count: int
    s_factor: float | None = None

    @property
    def stable(self) -> bool:
        return self.violating_count == 0


def _sym_powers(D: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """``D^{1/2}`` and ``D^{-1/2}`` of a symmetric positive definite matrix (or diagonal)."""
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        if not np.all(D > 0):
            raise InvariantViolation(f"{name} is not positive definite")
        return np.diag(np.sqrt(D)), np.diag(1.0 / np.sqrt(D))
    w, Q = np.linalg.eigh(0.5 * (D + D.T))
    if w.size and not w[0] > 0:
        raise InvariantViolation(f"{name} is not positive definite (min eigenvalue {w[0]:.3e})")
    w = np.maximum(w, EIG_FLOOR * (w[-1] if w.size else 1.0))
    root = np.sqrt(w)
    return (Q * root) @ Q.T, (Q / root) @ Q.T


def _dense(K) -> np.ndarray:
    return K.toarray() if hasattr(K, "toarray") else np.asarray(K, dtype=float)


def scaled_singular_values(d_eps, d_mu, K) -> np.ndarray:
    _, ie = _sym_powers(d_eps, "D_eps")
    _, im = _sym_powers(d_mu, "D_mu")
    A = ie @ _dense(K) @ im
    return scipy.linalg.svdvals(A) if A.size else np.zeros(0)


def reduced_stability_check(model: ReducedModel, dt: float | None = None, s_factor: float | None = None) -> StabilityReport:
    """Compare the scaled singular values of ``K`` with ``2/dt``.

    ``D_mu / dt > 0`` holds by congruence and is asserted when the inverse
    square root is formed.
    """
    dt = model.dt if dt is None else dt
    s = scaled_singular_values(model.d_eps, model.d_mu, model.K)
    limit = 2.0 / dt
    return StabilityReport(singular_values=s, limit=limit, violating_count=int(np.sum(s >= limit)), s_factor=s_factor)


def clip_curl(d_eps, d_mu, K, dt: float, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Perturbed ``K`` whose scaled singular values are at most ``gamma * 2/dt``."""
    if not 0 < gamma < 1:
        raise InvalidParameterError(f"gamma must lie in (0, 1), got {gamma}")
    re, ie = _sym_powers(d_eps, "D_eps")
    rm, im = _sym_powers(d_mu, "D_mu")
    K = _dense(K)
    U, s, Wt = scipy.linalg.svd(ie @ K @ im, full_matrices=False)
    cap = gamma * 2.0 / dt
    if np.all(s < cap):
        return K.copy()
    s_new = np.minimum(s, cap)
    return re @ ((U * s_new) @ Wt) @ rm


def enforce_stability(model: ReducedModel, dt: float | None = None, gamma: float = DEFAULT_GAMMA) -> ReducedModel:
    dt = model.dt if dt is None else dt
    return replace(model, K=clip_curl(model.d_eps, model.d_mu, model.K, dt, gamma), dt=dt)


def enforce_stability_full(matrices: SystemMatrices, dt: float, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Dense perturbed curl for a full (small) system; the diagonals are unchanged."""
    return clip_curl(matrices.d_eps, matrices.d_mu, matrices.K, dt, gamma)


def update_eigenvalues(R_like, F_like) -> np.ndarray:
    """Eigenvalues of ``(R + F)^{-1} (R - F)`` by dense factorization."""
    R = _dense(R_like)
    F = _dense(F_like)
    A = R + F
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularOperatorError(str(exc)) from exc
    piv_diag = np.abs(np.diag(lu[0]))
    if A.size and (np.min(piv_diag) == 0 or np.min(piv_diag) < 1e-14 * np.max(piv_diag)):
        raise SingularOperatorError("R + F is singular")
    T = scipy.linalg.lu_solve(lu, R - F)
    return np.linalg.eigvals(T)


def leapfrog_eigenvalues(d_eps, d_mu, K, dt: float) -> np.ndarray:
    """Update eigenvalues of a lossless leap-frog system via one SVD.

    The update decouples along the singular pairs of ``De^{-1/2} K Dm^{-1/2}``
    into 2x2 blocks ``[[1, -a], [a, 1 - a^2]]`` with ``a = dt * sigma``;
    directions outside the singular subspaces have eigenvalue 1.  Equivalent
    to :func:`update_eigenvalues` for ``F`` skew, at SVD instead of
    non-symmetric eigen cost.
    """
    s = scaled_singular_values(d_eps, d_mu, K)
    n1 = np.shape(d_eps)[0]
    n2 = np.shape(d_mu)[0]
    a = dt * s
    half_trace = (2.0 - a**2) / 2.0
    disc = np.sqrt((half_trace**2 - 1.0).astype(complex))
    pairs = np.concatenate([half_trace + disc, half_trace - disc])
    ones = np.ones(n1 + n2 - 2 * len(s), dtype=complex)
    return np.concatenate([pairs, ones])


def write_eigen_csv(path, values, provenance: str | None = None) -> None:
    values = np.asarray(values)
    data = np.column_stack([np.arange(len(values)), values.real, values.imag if np.iscomplexobj(values) else np.zeros(len(values)), np.abs(values)])
    header = "index,real,imaginary,magnitude"
    if provenance:
        header = f"# {provenance}\n{header}"
    np.savetxt(Path(path), data, fmt=["%d", "%.17g", "%.17g", "%.17g"], delimiter=",", header=header, comments="")
