"""Leap-frog time stepping of a reduced model and probe reconstruction."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .assembly import SystemMatrices
from .errors import DivergenceError
from .fdtd import CHECK_EVERY, DIVERGENCE_LIMIT, TimeSeries
from .grid import ProbeSpec
from .reduction import ProjectionBasis, ReducedModel


@dataclass
class ReducedState:
    e: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, model: ReducedModel) -> "ReducedState":
        return cls(np.zeros(model.n1), np.zeros(model.n2))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.e, self.h])


class ReducedLeapfrog:
    """Two dense half-updates per step.

    ``De/dt + Dse/2`` and ``Dm/dt + Dsm/2`` are Cholesky-factorized once and
    folded into the update operators, so a step costs a few ``O(n^2)``
    matrix-vector products independent of the full system size.
    """

    def __init__(self, model: ReducedModel, dt: float | None = None, state: ReducedState | None = None):
        dt = model.dt if dt is None else dt
        self.model = model
        self.dt = dt
        ae = scipy.linalg.cho_factor(model.d_eps / dt + 0.5 * model.d_sig_e)
        ah = scipy.linalg.cho_factor(model.d_mu / dt + 0.5 * model.d_sig_m)
        n1 = model.n1
        self._pe = scipy.linalg.cho_solve(ae, model.d_eps / dt - 0.5 * model.d_sig_e)
        self._qe = scipy.linalg.cho_solve(ae, model.K)
        self._be = scipy.linalg.cho_solve(ae, model.B[:n1])
        self._ph = scipy.linalg.cho_solve(ah, model.d_mu / dt - 0.5 * model.d_sig_m)
        self._qh = scipy.linalg.cho_solve(ah, model.K.T)
        self._bh = scipy.linalg.cho_solve(ah, model.B[n1:])
        state = state or ReducedState.zeros(model)
        self.e = np.array(state.e, dtype=float)
        self.h = np.array(state.h, dtype=float)

    @property
    def state(self) -> ReducedState:
        return ReducedState(self.e.copy(), self.h.copy())

    def step(self, u) -> None:
        u = np.atleast_1d(u)
        self.e = self._pe @ self.e - self._qe @ self.h + self._be @ u
        self.h = self._ph @ self.h + self._qh @ self.e + self._bh @ u


def step_reduced(state: ReducedState, model: ReducedModel, u, dt: float | None = None, step_index: int = 0) -> ReducedState:
    lf = ReducedLeapfrog(model, dt, state)
    lf.step(np.zeros(model.n_inputs) if u is None else u)
    if not (np.all(np.isfinite(lf.e)) and np.all(np.isfinite(lf.h))):
        raise DivergenceError(step_index + 1, "reduced", float("nan"))
    return lf.state


def probe_rows(basis: ProjectionBasis, matrices_or_rows, probes: Sequence[ProbeSpec] | None = None) -> np.ndarray:
    """Rows of ``blockdiag(V1, V2)`` for the probed unknowns, shape ``(n_probes, n1 + n2)``."""
    if isinstance(matrices_or_rows, SystemMatrices):
        rows = matrices_or_rows.probe_rows(probes)
        n_e = matrices_or_rows.n_e
    else:
        rows, n_e = matrices_or_rows
        rows = np.asarray(rows, dtype=int)
    n1, n2 = basis.V1.shape[1], basis.V2.shape[1]
    C = np.zeros((len(rows), n1 + n2))
    for i, r in enumerate(rows):
        if r < n_e:
            C[i, :n1] = basis.V1[r]
        else:
            C[i, n1:] = basis.V2[r - n_e]
    return C


def reconstruct_probes(basis: ProjectionBasis, trajectory, matrices: SystemMatrices,
                       probes: Sequence[ProbeSpec], dt: float) -> TimeSeries:
    """Probe values ``(row of V) @ x_reduced`` for each stored reduced state."""
    C = probe_rows(basis, matrices, probes)
    X = np.array([s.x if isinstance(s, ReducedState) else np.asarray(s) for s in trajectory])
    return TimeSeries(names=[p.name for p in probes], values=X @ C.T, dt=dt)


def run_reduced(model: ReducedModel, inputs: np.ndarray, output_rows: np.ndarray,
                names: Sequence[str], dt: float | None = None, engine: str = "reduced",
                track_peak: bool = False) -> TimeSeries:
    """Step from rest with ``inputs[n]`` driving step ``n + 1``; record ``output_rows @ x``.

    With ``track_peak`` the largest reduced-state magnitude over every step
    is kept in ``series.peak``; otherwise it is sampled at divergence checks.
    """
    dt = model.dt if dt is None else dt
    t0 = time.perf_counter()
    lf = ReducedLeapfrog(model, dt)
    u = np.asarray(inputs, dtype=float)
    steps = u.shape[0]
    if steps < 1:
        raise ValueError("need at least one step")
    n1 = model.n1
    Ce = np.ascontiguousarray(output_rows[:, :n1])
    Ch = np.ascontiguousarray(output_rows[:, n1:])
    out = np.zeros((steps, output_rows.shape[0]))
    pe, qe, be, ph, qh, bh = lf._pe, lf._qe, lf._be, lf._ph, lf._qh, lf._bh
    lossless = not (np.any(model.d_sig_e) or np.any(model.d_sig_m))
    e, h = lf.e, lf.h
    overall = 0.0
    setup = time.perf_counter() - t0

    t1 = time.perf_counter()
    for n in range(steps):
        un = u[n]
        if lossless:
            e = e - qe @ h + be @ un
            h = h + qh @ e + bh @ un
        else:
            e = pe @ e - qe @ h + be @ un
            h = ph @ h + qh @ e + bh @ un
        out[n] = Ce @ e + Ch @ h
        if track_peak:
            overall = max(overall, np.abs(e).max(initial=0.0), np.abs(h).max(initial=0.0))
        if (n + 1) % CHECK_EVERY == 0 or n == steps - 1:
            peak = max(np.max(np.abs(e), initial=0.0), np.max(np.abs(h), initial=0.0))
            overall = max(overall, peak)
            if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
                raise DivergenceError(n + 1, engine, float(peak))
    run = time.perf_counter() - t1
    lf.e, lf.h = e, h
    ts = TimeSeries(names=list(names), values=out, dt=dt, phases={"setup": setup, "run": run})
    ts.final_state = lf.state
    ts.peak = float(overall)
    return ts
