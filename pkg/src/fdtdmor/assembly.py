"""Matrix form of the Yee update: curl matrix, material diagonals, source map.

The discrete system is

    (R + F) x^{n+1} = (R - F) x^n + B u^{n+1}

with ``x = [E^n; H^{n+1/2}]`` and

    R = [[De/dt, -K/2], [-K^T/2, Dm/dt]]
    F = [[Dse/2,  K/2], [-K^T/2, Dsm/2]]

``K`` maps H unknowns to E rows and equals minus the discrete curl of H.
Tangential E on the outer (perfectly conducting) walls and on PEC cells is
removed from the unknown set, as are H unknowns left with no coupling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import StampError
from .grid import BoundarySpec, GridSpec, MaterialMap, ProbeSpec, SourceSpec, absorber_conductivity

# sign and H component of each term of (curl H) along an E component
_CURL_TERMS = {
    "Ex": ((+1.0, "Hz", "y"), (-1.0, "Hy", "z")),
    "Ey": ((+1.0, "Hx", "z"), (-1.0, "Hz", "x")),
    "Ez": ((+1.0, "Hy", "x"), (-1.0, "Hx", "y")),
}

# dense eigen/SVD work is only attempted below this many unknowns per block
DENSE_LIMIT = 2000


@dataclass(frozen=True)
class IndexMap:
    """Bijection between (component, multi-index) positions and unknown numbers."""

    grid: GridSpec
    components: tuple[str, ...]
    offsets: tuple[int, ...]
    positions: tuple[np.ndarray, ...]  # (count, dims) per component
    lookup: tuple[np.ndarray, ...]  # full component shape, -1 where eliminated
    n_e: int
    n_h: int

    @property
    def size(self) -> int:
        return self.n_e + self.n_h

    def row(self, component: str, index: Sequence[int]) -> int:
        if component not in self.components:
            raise StampError(f"component {component!r} not present on a {self.grid.dims}-D grid")
        c = self.components.index(component)
        table = self.lookup[c]
        idx = tuple(int(i) for i in index)
        if len(idx) != table.ndim or any(i < 0 or i >= n for i, n in zip(idx, table.shape)):
            raise StampError(f"{component}{list(idx)} lies outside the grid (shape {table.shape})")
        r = int(table[idx])
        if r < 0:
            raise StampError(f"{component}{list(idx)} is eliminated by a conducting boundary")
        return r

    def disassemble(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Scatter a state vector into full component arrays (zeros where eliminated)."""
        x = np.asarray(x)
        out = {}
        for comp, table in zip(self.components, self.lookup):
            arr = np.zeros(table.shape, dtype=x.dtype)
            mask = table >= 0
            arr[mask] = x[table[mask]]
            out[comp] = arr
        return out

    def assemble_vector(self, fields: dict[str, np.ndarray]) -> np.ndarray:
        dtype = np.result_type(*[np.asarray(v).dtype for v in fields.values()], float)
        x = np.zeros(self.size, dtype=dtype)
        for comp, table in zip(self.components, self.lookup):
            if comp not in fields:
                continue
            mask = table >= 0
            x[table[mask]] = np.asarray(fields[comp])[mask]
        return x


@dataclass(frozen=True)
class SystemMatrices:
    K: sp.csr_matrix
    d_eps: np.ndarray
    d_mu: np.ndarray
    d_sig_e: np.ndarray
    d_sig_m: np.ndarray
    B: sp.csr_matrix
    n_e: int
    n_h: int
    index_map: IndexMap | None = None

    @property
    def size(self) -> int:
        return self.n_e + self.n_h

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def lossless(self) -> bool:
        return not (np.any(self.d_sig_e) or np.any(self.d_sig_m))

    def probe_rows(self, probes: Sequence[ProbeSpec]) -> np.ndarray:
        if self.index_map is None:
            raise StampError("matrices carry no index map; probes cannot be resolved")
        return np.array([self.index_map.row(p.component, p.index) for p in probes], dtype=int)

    def dump_coo(self, directory: str | os.PathLike) -> None:
        """Write K, the diagonals and B as ``row,col,value`` text files."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        def write(name, mat):
            coo = sp.coo_matrix(mat)
            data = np.column_stack([coo.row, coo.col, coo.data])
            np.savetxt(directory / name, data, fmt=["%d", "%d", "%.17g"], delimiter=",",
                       header="row,col,value", comments="")

        write("K.coo", self.K)
        write("B.coo", self.B)
        for name in ("d_eps", "d_mu", "d_sig_e", "d_sig_m"):
            write(f"{name}.coo", sp.diags(getattr(self, name)))


@dataclass(frozen=True)
class UpdatePair:
    R: sp.csr_matrix
    F: sp.csr_matrix
    matrices: SystemMatrices
    dt: float


@dataclass(frozen=True)
class FullStabilityReport:
    condition7: bool
    condition8: bool
    witness: dict


def _keep_mask_e(grid: GridSpec, component: str, pec: np.ndarray) -> np.ndarray:
    shape = grid.component_shape(component)
    direction = component[1]
    keep = np.ones(shape, dtype=bool)
    blocked = pec
    for ax, axis in enumerate(grid.axes):
        if axis == direction:
            continue
        # node-type along this axis: drop wall positions, and grow the PEC mask
        sl = [slice(None)] * grid.dims
        sl[ax] = 0
        keep[tuple(sl)] = False
        sl[ax] = -1
        keep[tuple(sl)] = False
        pad = [(0, 0)] * grid.dims
        pad[ax] = (1, 1)
        padded = np.pad(blocked, pad, constant_values=False)
        lo = [slice(None)] * grid.dims
        hi = [slice(None)] * grid.dims
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        blocked = padded[tuple(lo)] | padded[tuple(hi)]
    return keep & ~blocked


def curl_matrix_1d(n_e: int, n_h: int, dz: float) -> sp.csr_matrix:
    """1-D stencil ``K[k] = (H_{k+1/2} - H_{k-1/2}) / dz``.

    ``n_e = n_h + 1`` puts E at both ends; ``n_e = n_h - 1`` puts H at both
    ends (conducting walls).
    """
    if n_e == n_h + 1:
        first_h = -1  # E_k neighbours H indices k-1 and k
    elif n_e == n_h - 1:
        first_h = 0  # E_k neighbours H indices k and k+1
    else:
        raise ValueError("1-D stencil needs |n_e - n_h| == 1")
    rows, cols, vals = [], [], []
    for k in range(n_e):
        left, right = k + first_h, k + first_h + 1
        if 0 <= left < n_h:
            rows.append(k), cols.append(left), vals.append(-1.0 / dz)
        if 0 <= right < n_h:
            rows.append(k), cols.append(right), vals.append(1.0 / dz)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_e, n_h))


def assemble(grid: GridSpec, materials: MaterialMap, boundaries: BoundarySpec | None = None,
             sources: Sequence[SourceSpec] = ()) -> SystemMatrices:
    """Build the sparse system for a grid, its materials, boundaries and sources."""
    if materials.shape != grid.cells:
        raise StampError(f"material shape {materials.shape} does not match grid {grid.cells}")
    boundaries = boundaries or BoundarySpec()
    boundaries.validate(grid)
    mats = materials

    # E unknowns
    e_positions, e_lookup, e_offsets = [], [], []
    count = 0
    for comp in grid.e_components:
        keep = _keep_mask_e(grid, comp, mats.pec)
        table = np.full(keep.shape, -1, dtype=np.int64)
        pos = np.argwhere(keep)
        table[tuple(pos.T)] = count + np.arange(len(pos))
        e_offsets.append(count)
        e_positions.append(pos)
        e_lookup.append(table)
        count += len(pos)
    n_e = count

    # curl of H over the full H arrays
    h_shapes = {h: grid.component_shape(h) for h in grid.h_components}
    h_start, total = {}, 0
    for h in grid.h_components:
        h_start[h] = total
        total += int(np.prod(h_shapes[h]))
    rows, cols, vals = [], [], []
    for comp, pos, table in zip(grid.e_components, e_positions, e_lookup):
        r = table[tuple(pos.T)]
        for sign, h, axis in _CURL_TERMS[comp]:
            if h not in h_shapes or axis not in grid.axes:
                continue
            ax = grid.axes.index(axis)
            w = sign / grid.sizes[ax]
            shifted = pos.copy()
            shifted[:, ax] -= 1
            for idx, val in ((pos, w), (shifted, -w)):
                flat = h_start[h] + np.ravel_multi_index(tuple(idx.T), h_shapes[h])
                rows.append(r), cols.append(flat), vals.append(np.full(len(r), val))
    curl_h = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_e, total)
    ) if rows else sp.csr_matrix((n_e, total))

    used = np.flatnonzero(np.diff(curl_h.tocsc().indptr) > 0)
    n_h = len(used)
    K = (-curl_h[:, used]).tocsr()
    K.eliminate_zeros()

    h_positions, h_lookup, h_offsets = [], [], []
    for h in grid.h_components:
        lo, hi = h_start[h], h_start[h] + int(np.prod(h_shapes[h]))
        sel = used[(used >= lo) & (used < hi)]
        local = sel - lo
        table = np.full(h_shapes[h], -1, dtype=np.int64)
        pos = np.column_stack(np.unravel_index(local, h_shapes[h])) if len(local) else np.zeros((0, grid.dims), int)
        numbers = n_e + np.searchsorted(used, sel)
        if len(local):
            table[tuple(pos.T)] = numbers
        h_offsets.append(int(numbers[0]) if len(numbers) else n_e)
        h_positions.append(pos)
        h_lookup.append(table)

    index_map = IndexMap(
        grid=grid,
        components=grid.e_components + grid.h_components,
        offsets=tuple(e_offsets + h_offsets),
        positions=tuple(e_positions + h_positions),
        lookup=tuple(e_lookup + h_lookup),
        n_e=n_e,
        n_h=n_h,
    )

    def block(components, positions, names):
        parts = {k: [] for k in names}
        for comp, pos in zip(components, positions):
            if not len(pos):
                continue
            vals = mats.owner_values(pos)
            eta = np.sqrt(vals["mu"] / vals["eps"])
            sigma = names[1]
            vals[sigma] = np.maximum(vals[sigma], absorber_conductivity(grid, boundaries, comp, pos, eta))
            for k in names:
                parts[k].append(vals[k])
        return [np.concatenate(parts[k]) if parts[k] else np.zeros(0) for k in names]

    d_eps, d_sig_e = block(grid.e_components, e_positions, ("eps", "sigma_e"))
    d_mu, d_sig_m = block(grid.h_components, h_positions, ("mu", "sigma_m"))

    B = _stamp_sources(index_map, sources)
    return SystemMatrices(K=K, d_eps=d_eps, d_mu=d_mu, d_sig_e=d_sig_e, d_sig_m=d_sig_m,
                          B=B, n_e=n_e, n_h=n_h, index_map=index_map)


def _stamp_sources(index_map: IndexMap, sources: Sequence[SourceSpec]) -> sp.csr_matrix:
    rows, cols = [], []
    for j, src in enumerate(sources):
        seen = set()
        for loc in src.locations:
            r = index_map.row(src.component, loc)
            if r in seen:
                raise StampError(f"source {j} stamps {src.component}{list(loc)} twice")
            seen.add(r)
            rows.append(r)
            cols.append(j)
    # currents enter the update with a minus sign
    return sp.csr_matrix((-np.ones(len(rows)), (rows, cols)), shape=(index_map.size, len(sources)))


def build_update_pair(matrices: SystemMatrices, dt: float) -> UpdatePair:
    if not dt > 0:
        raise ValueError("dt must be positive")
    K = matrices.K
    Kt = K.T
    R = sp.bmat([[sp.diags(matrices.d_eps / dt), -0.5 * K],
                 [-0.5 * Kt, sp.diags(matrices.d_mu / dt)]], format="csr")
    F = sp.bmat([[sp.diags(0.5 * matrices.d_sig_e), 0.5 * K],
                 [-0.5 * Kt, sp.diags(0.5 * matrices.d_sig_m)]], format="csr")
    return UpdatePair(R=R, F=F, matrices=matrices, dt=dt)


def scaled_curl(matrices: SystemMatrices) -> sp.csr_matrix:
    """``De^{-1/2} K Dm^{-1/2}`` for diagonal material matrices."""
    return (sp.diags(1.0 / np.sqrt(matrices.d_eps)) @ matrices.K @ sp.diags(1.0 / np.sqrt(matrices.d_mu))).tocsr()


def max_scaled_singular_value(matrices: SystemMatrices) -> float:
    A = scaled_curl(matrices)
    if min(A.shape) == 0 or A.nnz == 0:
        return 0.0
    if min(A.shape) <= DENSE_LIMIT:
        return float(scipy.linalg.svdvals(A.toarray())[0])
    s = spla.svds(A, k=1, which="LM", return_singular_vectors=False, random_state=0)
    return float(s[0])


def full_stability_check(pair: UpdatePair) -> FullStabilityReport:
    """Test ``F + F^T >= 0`` and ``R > 0`` on the full system.

    ``R > 0`` is decided with the Schur-complement form: the material
    diagonals are positive and every singular value of
    ``De^{-1/2} K Dm^{-1/2}`` stays below ``2/dt``.
    """
    m = pair.matrices
    min_sigma = float(min(np.min(m.d_sig_e, initial=0.0), np.min(m.d_sig_m, initial=0.0)))
    cond7 = min_sigma >= 0.0
    positive = bool(np.all(m.d_eps > 0) and np.all(m.d_mu > 0))
    smax = max_scaled_singular_value(m) if positive else float("nan")
    limit = 2.0 / pair.dt
    cond8 = positive and smax < limit
    witness = {
        "min_conductivity": min_sigma,
        "max_singular_value": smax,
        "limit": limit,
        "ratio": smax / limit,
    }
    return FullStabilityReport(condition7=cond7, condition8=cond8, witness=witness)
