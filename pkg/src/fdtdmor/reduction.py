"""Structure-preserving Krylov reduction of the discrete-time FDTD system.

A multi-point block Arnoldi process generates moments of the resolvent

    (z (R + F) - (R - F))^{-1} B

at expansion points on an arc of radius ``M``.  Each Krylov vector is split
into its E and H parts, which are orthonormalized separately into ``V1`` and
``V2``.  Projecting with ``blockdiag(V1, V2)`` keeps the FDTD block pattern,
so the reduced model is again a leap-frog system.
"""

from __future__ import annotations

import math
import struct
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SystemMatrices, build_update_pair
from .errors import AliasingError, DegenerateSourceError, InvalidParameterError
from .solver import DEFAULT_TOL, SchurSolver, make_shifted

DEFLATION_TOL = 1e-8
# parts smaller than this fraction of the largest part seen are round-off
NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class ExpansionPointSet:
    M: float
    L: int
    f_max: float
    dt: float
    points: np.ndarray  # z_l for l = -L..L

    @property
    def representatives(self) -> np.ndarray:
        """``z_0 .. z_L``; the conjugate half adds nothing once vectors are split into real parts."""
        return self.points[self.L:]


def make_expansion_points(M: float, L: int, f_max: float, dt: float) -> ExpansionPointSet:
    if not M > 1:
        raise InvalidParameterError(f"expansion radius M must exceed 1, got {M}")
    if L < 0:
        raise InvalidParameterError("L must be >= 0")
    if not (f_max > 0 and dt > 0):
        raise InvalidParameterError("f_max and dt must be positive")
    if f_max * dt >= 0.5:
        raise AliasingError(f"f_max*dt = {f_max * dt:.3f} >= 1/2: expansion points wrap past Nyquist")
    if L == 0:
        pts = np.array([complex(M)])
    else:
        ls = np.arange(-L, L + 1)
        pts = M * np.exp(1j * 2 * np.pi * (ls / L) * f_max * dt)
        pts[L] = M
    return ExpansionPointSet(M=float(M), L=int(L), f_max=float(f_max), dt=float(dt), points=pts)


@dataclass(frozen=True)
class ProjectionBasis:
    V1: np.ndarray
    V2: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def order(self) -> int:
        """Columns per block (the reduced system has twice this many states)."""
        return self.V1.shape[1]

    @classmethod
    def identity(cls, n_e: int, n_h: int) -> "ProjectionBasis":
        return cls(np.eye(n_e), np.eye(n_h))


class _BlockOrthonormalizer:
    """Modified Gram-Schmidt with one re-orthogonalization pass and deflation."""

    def __init__(self, n: int, capacity: int):
        self.cols = np.zeros((n, capacity))
        self.count = 0
        self.capacity = capacity
        self.largest = 0.0
        self.deflated = 0

    def add(self, v: np.ndarray) -> bool:
        if self.count >= self.capacity:
            return False
        pre = float(np.linalg.norm(v))
        self.largest = max(self.largest, pre)
        if pre == 0.0 or pre < NOISE_FLOOR * self.largest:
            return False
        w = v.copy()
        for _ in range(2):
            for j in range(self.count):
                c = self.cols[:, j]
                w -= (c @ w) * c
        post = float(np.linalg.norm(w))
        if post < DEFLATION_TOL * pre:
            self.deflated += 1
            return False
        self.cols[:, self.count] = w / post
        self.count += 1
        return True


class _ArnoldiStream:
    """Block Arnoldi sequence for one expansion point (complex arithmetic)."""

    def __init__(self, solver: SchurSolver, multiplier, seeds: np.ndarray):
        self.solver = solver
        self.multiplier = multiplier
        self.queue = deque(("seed", seeds[:, j]) for j in range(seeds.shape[1]))
        self.Q: list[np.ndarray] = []
        self.solves = 0
        self.deflated = 0

    def next_vector(self) -> np.ndarray | None:
        while self.queue:
            kind, payload = self.queue.popleft()
            if kind == "seed":
                v = self.solver.solve(payload)
            else:
                v = self.solver.solve(self.multiplier @ payload)
            self.solves += 1
            pre = float(np.linalg.norm(v))
            if pre == 0.0:
                self.deflated += 1
                continue
            w = v.copy()
            for _ in range(2):
                for q in self.Q:
                    w -= (np.vdot(q, w)) * q
            post = float(np.linalg.norm(w))
            if post < DEFLATION_TOL * pre:
                self.deflated += 1
                continue
            q = w / post
            self.Q.append(q)
            self.queue.append(("child", q))
            return q
        return None


def build_basis(matrices: SystemMatrices, points: ExpansionPointSet, order: int, dt: float,
                method: str = "auto", tol: float = DEFAULT_TOL, max_vectors: int | None = None) -> ProjectionBasis:
    """Orthonormal block bases ``V1`` (E) and ``V2`` (H) with ``order`` columns each.

    Krylov vectors are drawn round-robin from the expansion points, one per
    point per sweep, until both blocks are full or every sequence deflates.
    """
    if order < 1:
        raise InvalidParameterError("reduced order must be >= 1")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if matrices.n_inputs == 0:
        raise DegenerateSourceError("system has no inputs to seed the Krylov space")
    t0 = time.perf_counter()
    pair = build_update_pair(matrices, dt)
    multiplier = (pair.R + pair.F).tocsr()
    seeds = matrices.B.toarray().astype(complex)
    n_e, n_h = matrices.n_e, matrices.n_h
    cap1, cap2 = min(order, n_e), min(order, n_h)

    streams = []
    for z in points.representatives:
        # (R - F) - z (R + F) = -(z (R + F) - (R - F)); the sign does not change the span
        solver = SchurSolver(make_shifted(pair, -z), method=method, tol=tol)
        streams.append(_ArnoldiStream(solver, multiplier, seeds))

    V1 = _BlockOrthonormalizer(n_e, cap1)
    V2 = _BlockOrthonormalizer(n_h, cap2)
    limit = max_vectors or 4 * (order + matrices.n_inputs) + 8
    produced = 0
    active = list(streams)
    while active and (V1.count < cap1 or V2.count < cap2) and produced < limit * len(streams):
        for st in list(active):
            if V1.count >= cap1 and V2.count >= cap2:
                break
            q = st.next_vector()
            if q is None:
                active.remove(st)
                continue
            produced += 1
            for part in (q.real, q.imag):
                V1.add(part[:n_e])
                V2.add(part[n_e:])

    n_red = min(V1.count, V2.count)
    if n_red == 0:
        raise DegenerateSourceError("every Krylov vector deflated; the sources do not excite the system")
    info = {
        "vectors": produced,
        "solves": sum(st.solves for st in streams),
        "deflated_arnoldi": sum(st.deflated for st in streams),
        "deflated_e": V1.deflated,
        "deflated_h": V2.deflated,
        "columns_e": V1.count,
        "columns_h": V2.count,
        "seconds": time.perf_counter() - t0,
    }
    return ProjectionBasis(V1.cols[:, :n_red].copy(), V2.cols[:, :n_red].copy(), info)


@dataclass(frozen=True)
class ReducedModel:
    d_eps: np.ndarray
    d_mu: np.ndarray
    d_sig_e: np.ndarray
    d_sig_m: np.ndarray
    K: np.ndarray
    B: np.ndarray
    dt: float

    @property
    def n1(self) -> int:
        return self.d_eps.shape[0]

    @property
    def n2(self) -> int:
        return self.d_mu.shape[0]

    @property
    def order(self) -> int:
        return self.n1

    @property
    def size(self) -> int:
        return self.n1 + self.n2

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    def R(self, dt: float | None = None) -> np.ndarray:
        dt = self.dt if dt is None else dt
        return np.block([[self.d_eps / dt, -0.5 * self.K], [-0.5 * self.K.T, self.d_mu / dt]])

    def F(self) -> np.ndarray:
        return np.block([[0.5 * self.d_sig_e, 0.5 * self.K], [-0.5 * self.K.T, 0.5 * self.d_sig_m]])

    def with_K(self, K: np.ndarray) -> "ReducedModel":
        return replace(self, K=np.asarray(K, dtype=float))

    def transfer_function(self, z: complex, C: np.ndarray | None = None) -> np.ndarray:
        return transfer_function(self.R(), self.F(), self.B, z, C)

    def save(self, path) -> None:
        """Flat little-endian float64 container; see :func:`load_reduced_model`."""
        if self.n1 != self.n2:
            raise ValueError("only square reduced models can be serialized")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qqd", self.n1, self.n_inputs, self.dt))
            for name in ("d_eps", "d_mu", "d_sig_e", "d_sig_m", "K", "B"):
                fh.write(np.ascontiguousarray(getattr(self, name), dtype="<f8").tobytes(order="C"))


def load_reduced_model(path) -> ReducedModel:
    raw = Path(path).read_bytes()
    n, n_in, dt = struct.unpack_from("<qqd", raw, 0)
    offset = struct.calcsize("<qqd")
    shapes = [("d_eps", (n, n)), ("d_mu", (n, n)), ("d_sig_e", (n, n)), ("d_sig_m", (n, n)),
              ("K", (n, n)), ("B", (2 * n, n_in))]
    fields = {}
    for name, shape in shapes:
        count = shape[0] * shape[1]
        fields[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"trailing bytes in reduced model file {path}")
    return ReducedModel(dt=dt, **fields)


def project(matrices: SystemMatrices, basis: ProjectionBasis, dt: float) -> ReducedModel:
    """Congruence-project the block matrices onto ``blockdiag(V1, V2)``."""
    V1, V2 = basis.V1, basis.V2
    if V1.shape[0] != matrices.n_e or V2.shape[0] != matrices.n_h:
        raise ValueError("basis rows do not match the system's E/H block sizes")

    def congruence(d, V):
        M = V.T @ (d[:, None] * V)
        return 0.5 * (M + M.T)

    K = np.asarray(V1.T @ (matrices.K @ V2))
    B = matrices.B.toarray()
    Bt = np.vstack([V1.T @ B[: matrices.n_e], V2.T @ B[matrices.n_e:]])
    return ReducedModel(
        d_eps=congruence(matrices.d_eps, V1),
        d_mu=congruence(matrices.d_mu, V2),
        d_sig_e=congruence(matrices.d_sig_e, V1),
        d_sig_m=congruence(matrices.d_sig_m, V2),
        K=K,
        B=Bt,
        dt=dt,
    )


def transfer_function(R, F, B, z: complex, C=None) -> np.ndarray:
    """``C (z (R + F) - (R - F))^{-1} B`` with ``C = B^T`` by default."""
    if sp.issparse(R):
        G = (z * (R + F) - (R - F)).tocsc().astype(complex)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        X = spla.splu(G).solve(Bd.astype(complex))
        X = X.reshape(Bd.shape)
    else:
        G = z * (R + F) - (R - F)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        X = np.linalg.solve(G, Bd.astype(complex))
    Cm = Bd.T if C is None else (C.toarray() if sp.issparse(C) else np.asarray(C))
    return Cm @ X
