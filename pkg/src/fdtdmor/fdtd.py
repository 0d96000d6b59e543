"""Reference leap-frog stepping of the full FDTD system."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import SystemMatrices, UpdatePair
from .errors import DivergenceError
from .grid import ProbeSpec, SourceSpec

DIVERGENCE_LIMIT = 1e100
CHECK_EVERY = 100


@dataclass
class StateVector:
    """``E^n`` and ``H^{n+1/2}`` stacked as in the matrix form."""

    e: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, matrices: SystemMatrices) -> "StateVector":
        return cls(np.zeros(matrices.n_e), np.zeros(matrices.n_h))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.e, self.h])

    def energy(self, pair: UpdatePair) -> float:
        x = self.x
        return float(x @ (pair.R @ x))


@dataclass
class TimeSeries:
    """Probe samples; row ``n`` holds the state after step ``n + 1``."""

    names: list[str]
    values: np.ndarray  # (steps, n_probes)
    dt: float
    phases: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.steps + 1)

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def write_csv(self, path, provenance: str | None = None) -> None:
        path = Path(path)
        data = np.column_stack([np.arange(1, self.steps + 1), self.times, self.values])
        header = ",".join(["step", "time"] + list(self.names))
        if provenance:
            header = f"# {provenance}\n{header}"
        fmt = ["%d", "%.17g"] + ["%.17g"] * len(self.names)
        np.savetxt(path, data, fmt=fmt, delimiter=",", header=header, comments="")

    @classmethod
    def read_csv(cls, path) -> "TimeSeries":
        lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
        names = lines[0].split(",")[2:]
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        dt = float(data[0, 1] / data[0, 0]) if len(data) else 0.0
        return cls(names=names, values=data[:, 2:], dt=dt)


class Leapfrog:
    """Explicit two-sweep update for the full system.

    ``(R + F)`` is block lower-triangular with diagonal blocks, so each step
    is an E sweep followed by an H sweep with no linear solve.
    """

    def __init__(self, matrices: SystemMatrices, dt: float, state: StateVector | None = None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        m = matrices
        self.matrices = m
        self.dt = dt
        ae = m.d_eps / dt + 0.5 * m.d_sig_e
        ah = m.d_mu / dt + 0.5 * m.d_sig_m
        self._ce = (m.d_eps / dt - 0.5 * m.d_sig_e) / ae
        self._ch = (m.d_mu / dt - 0.5 * m.d_sig_m) / ah
        self._ie = 1.0 / ae
        self._ih = 1.0 / ah
        self._K = m.K.tocsr()
        self._Kt = m.K.T.tocsr()
        B = m.B.tocsr()
        self._be = B[: m.n_e]
        self._bh = B[m.n_e:]
        state = state or StateVector.zeros(m)
        self.e = np.array(state.e, dtype=float)
        self.h = np.array(state.h, dtype=float)

    @property
    def state(self) -> StateVector:
        return StateVector(self.e.copy(), self.h.copy())

    def step(self, u) -> None:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        rhs_e = self._K @ self.h
        if self._be.nnz:
            rhs_e = rhs_e - self._be @ u
        self.e = self._ce * self.e - self._ie * rhs_e
        rhs_h = self._Kt @ self.e
        if self._bh.nnz:
            rhs_h = rhs_h + self._bh @ u
        self.h = self._ch * self.h + self._ih * rhs_h

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.e), initial=0.0), np.max(np.abs(self.h), initial=0.0)))


def step_full(state: StateVector, matrices: SystemMatrices, u, dt: float, step_index: int = 0) -> StateVector:
    """Advance one step; raises :class:`DivergenceError` on non-finite output."""
    lf = Leapfrog(matrices, dt, state)
    u = np.zeros(matrices.n_inputs) if u is None else u
    lf.step(u)
    if not (np.all(np.isfinite(lf.e)) and np.all(np.isfinite(lf.h))):
        raise DivergenceError(step_index + 1, "full", float("nan"))
    return lf.state


def input_matrix(sources: Sequence[SourceSpec], dt: float, steps: int) -> np.ndarray:
    """``(steps, n_inputs)`` samples of every source waveform."""
    if not sources:
        return np.zeros((steps, 0))
    return np.column_stack([src.waveform.series(dt, steps) for src in sources])


def run_full(matrices: SystemMatrices, sources: Sequence[SourceSpec], probes: Sequence[ProbeSpec],
             dt: float, steps: int, inputs: np.ndarray | None = None) -> TimeSeries:
    """Step the full system from rest and record probe samples."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t0 = time.perf_counter()
    lf = Leapfrog(matrices, dt)
    u = input_matrix(sources, dt, steps) if inputs is None else np.asarray(inputs, dtype=float)
    if u.shape[1] != matrices.n_inputs:
        raise ValueError(f"input has {u.shape[1]} channels, system expects {matrices.n_inputs}")
    rows = matrices.probe_rows(probes)
    e_rows = rows < matrices.n_e
    e_idx = rows[e_rows]
    h_idx = rows[~e_rows] - matrices.n_e
    out = np.zeros((steps, len(rows)))
    setup = time.perf_counter() - t0

    t1 = time.perf_counter()
    for n in range(steps):
        lf.step(u[n])
        out[n, e_rows] = lf.e[e_idx]
        out[n, ~e_rows] = lf.h[h_idx]
        if (n + 1) % CHECK_EVERY == 0 or n == steps - 1:
            peak = lf.max_abs()
            if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
                raise DivergenceError(n + 1, "full", peak)
    run = time.perf_counter() - t1
    return TimeSeries(names=[p.name for p in probes], values=out, dt=dt,
                      phases={"setup": setup, "run": run})
