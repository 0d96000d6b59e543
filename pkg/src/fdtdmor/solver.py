"""Shifted systems ``[(R - F) + z (R + F)] x = b`` solved by block elimination.

In 2x2 block form the operator has diagonal ``A11``, ``A22``; eliminating
the H block leaves the sparse Schur complement

    S = A11 - A12 A22^{-1} A21

which is factorized (direct) or iterated on with conjugate gradient squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import UpdatePair
from .errors import SingularOperatorError, SolverFailure

DEFAULT_TOL = 1e-4
DIRECT_LIMIT = 100_000


@dataclass(frozen=True)
class ShiftedOperator:
    a11: np.ndarray
    a12: sp.csr_matrix
    a21: sp.csr_matrix
    a22: np.ndarray
    z: complex

    @property
    def n_e(self) -> int:
        return len(self.a11)

    @property
    def size(self) -> int:
        return len(self.a11) + len(self.a22)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x1, x2 = x[: self.n_e], x[self.n_e:]
        return np.concatenate([self.a11 * x1 + self.a12 @ x2, self.a21 @ x1 + self.a22 * x2])

    def to_sparse(self) -> sp.csr_matrix:
        return sp.bmat([[sp.diags(self.a11), self.a12], [self.a21, sp.diags(self.a22)]], format="csr")


def make_shifted(pair: UpdatePair, z: complex) -> ShiftedOperator:
    m, dt = pair.matrices, pair.dt
    z = complex(z)
    a11 = (1 + z) * m.d_eps / dt + (z - 1) * 0.5 * m.d_sig_e
    a22 = (1 + z) * m.d_mu / dt + (z - 1) * 0.5 * m.d_sig_m
    if np.any(a22 == 0):
        raise SingularOperatorError(f"shift z={z} leaves a zero on the H diagonal")
    a12 = (-m.K).astype(complex).tocsr()
    a21 = (-z * m.K.T).astype(complex).tocsr()
    a21.eliminate_zeros()
    return ShiftedOperator(a11=a11.astype(complex), a12=a12, a21=a21, a22=a22.astype(complex), z=z)


class SchurSolver:
    """Reusable solver for one shifted operator.

    The direct method factorizes the Schur complement once; every
    :meth:`solve` afterwards is a pair of triangular sweeps.
    """

    def __init__(self, op: ShiftedOperator, method: str = "auto", tol: float = DEFAULT_TOL,
                 maxiter: int | None = None):
        if method == "auto":
            method = "direct" if op.size <= DIRECT_LIMIT else "iterative"
        if method not in ("direct", "iterative"):
            raise ValueError(f"unknown solver method {method!r}")
        if np.any(op.a22 == 0):
            raise SingularOperatorError("A22 has a zero diagonal entry")
        self.op = op
        self.method = method
        self.tol = tol
        self.maxiter = maxiter or max(1, int(10 * math.sqrt(op.size)))
        self._inv22 = 1.0 / op.a22
        self.triangular = op.a21.nnz == 0 and np.all(op.a11 != 0)
        self._lu = None
        self._schur = None
        self.iterations: list[int] = []
        if self.triangular:
            return
        S = (sp.diags(op.a11) - op.a12 @ sp.diags(self._inv22) @ op.a21).tocsc()
        self._schur = S
        if method == "direct":
            try:
                self._lu = spla.splu(S)
            except RuntimeError as exc:
                raise SingularOperatorError(f"Schur complement is singular: {exc}") from exc
            if not np.all(np.isfinite(self._lu.U.diagonal())) or np.any(self._lu.U.diagonal() == 0):
                raise SingularOperatorError("Schur complement is singular")

    def solve(self, b: np.ndarray) -> np.ndarray:
        op = self.op
        b = np.asarray(b, dtype=complex)
        if b.shape[0] != op.size:
            raise ValueError(f"right-hand side has length {b.shape[0]}, expected {op.size}")
        b1, b2 = b[: op.n_e], b[op.n_e:]
        if self.triangular:
            # z = 0 style back-substitution: H first, then E
            x2 = self._inv22 * b2
            x1 = (b1 - op.a12 @ x2) / op.a11
            return np.concatenate([x1, x2])
        rhs = b1 - op.a12 @ (self._inv22 * b2)
        if self.method == "direct":
            x1 = self._lu.solve(rhs)
        else:
            x1 = self._iterate(rhs, float(np.linalg.norm(b)))
        x2 = self._inv22 * (b2 - op.a21 @ x1)
        return np.concatenate([x1, x2])

    def _iterate(self, rhs: np.ndarray, bnorm: float) -> np.ndarray:
        if bnorm == 0:
            return np.zeros_like(rhs)
        S = self._schur
        # the full-system residual equals the Schur residual, so stop on ||b||
        atol = self.tol * bnorm
        count = [0]

        def cb(_):
            count[0] += 1

        x1, info = spla.cgs(S, rhs, rtol=0.0, atol=atol, maxiter=self.maxiter, callback=cb)
        self.iterations.append(count[0])
        res = float(np.linalg.norm(S @ x1 - rhs)) / bnorm
        if info != 0 or not np.isfinite(res) or res > self.tol:
            raise SolverFailure(f"CGS did not converge in {self.maxiter} iterations", res)
        return x1


def schur_solve(op: ShiftedOperator, b: np.ndarray, method: str = "direct", tol: float = DEFAULT_TOL) -> np.ndarray:
    return SchurSolver(op, method=method, tol=tol).solve(b)


def triangular_solve(op: ShiftedOperator, b: np.ndarray) -> np.ndarray:
    """Back-substitution valid when ``A21 = 0`` (the ``z = 0`` operator)."""
    if op.a21.nnz != 0:
        raise ValueError("operator is not block triangular")
    b = np.asarray(b, dtype=complex)
    x2 = b[op.n_e:] / op.a22
    x1 = (b[: op.n_e] - op.a12 @ x2) / op.a11
    return np.concatenate([x1, x2])
