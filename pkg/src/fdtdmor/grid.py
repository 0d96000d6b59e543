"""Problem description on a Cartesian Yee grid.

Fields live on a staggered lattice.  For a grid with ``n`` cells along an
axis, node-type positions run ``0..n`` and half-type positions ``0..n-1``
(standing for ``i + 1/2``).  An electric component along axis ``a`` sits at
half positions along ``a`` and node positions along the other axes; magnetic
components are the dual.

Supported layouts:

* 1-D: ``Ex`` / ``Hy``, propagation along ``z``
* 2-D: ``Ez`` / ``Hx``, ``Hy`` (``polarization="TM"``, the default) or
  ``Ex``, ``Ey`` / ``Hz`` (``polarization="TE"``) in the ``x-y`` plane
* 3-D: all six components
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InvalidGridError, InvalidParameterError

C0 = 299792458.0
EPS0 = 8.8541878128e-12
MU0 = 4e-7 * math.pi
ETA0 = math.sqrt(MU0 / EPS0)

_AXES = {1: ("z",), 2: ("x", "y"), 3: ("x", "y", "z")}
_E_COMPONENTS = {1: ("Ex",), 2: ("Ez",), 3: ("Ex", "Ey", "Ez")}
_H_COMPONENTS = {1: ("Hy",), 2: ("Hx", "Hy"), 3: ("Hx", "Hy", "Hz")}
_TE_2D = (("Ex", "Ey"), ("Hz",))
POLARIZATIONS = ("TM", "TE")

Index = tuple[int, ...]


@dataclass(frozen=True)
class GridSpec:
    """Uniform-per-axis Cartesian grid.

    ``cells`` and ``sizes`` list the active axes only, in the order returned
    by :attr:`axes`.
    """

    dims: int
    cells: tuple[int, ...]
    sizes: tuple[float, ...]
    polarization: str = "TM"  # 2-D only

    def __post_init__(self):
        if self.dims not in (1, 2, 3):
            raise InvalidGridError(f"dims must be 1, 2 or 3, got {self.dims}")
        if self.polarization not in POLARIZATIONS:
            raise InvalidGridError(f"polarization must be TM or TE, got {self.polarization!r}")
        if self.polarization == "TE" and self.dims != 2:
            raise InvalidGridError("TE polarization is only defined for 2-D grids")
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        object.__setattr__(self, "sizes", tuple(float(s) for s in self.sizes))
        if len(self.cells) != self.dims or len(self.sizes) != self.dims:
            raise InvalidGridError(f"expected {self.dims} cell counts and sizes")
        if any(c < 1 for c in self.cells):
            raise InvalidGridError(f"cell counts must be >= 1: {self.cells}")
        if any(not (s > 0) or not math.isfinite(s) for s in self.sizes):
            raise InvalidGridError(f"cell sizes must be positive: {self.sizes}")

    @property
    def axes(self) -> tuple[str, ...]:
        return _AXES[self.dims]

    @property
    def e_components(self) -> tuple[str, ...]:
        if self.polarization == "TE":
            return _TE_2D[0]
        return _E_COMPONENTS[self.dims]

    @property
    def h_components(self) -> tuple[str, ...]:
        if self.polarization == "TE":
            return _TE_2D[1]
        return _H_COMPONENTS[self.dims]

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * d for n, d in zip(self.cells, self.sizes))

    def spacing(self, axis: str) -> float:
        return self.sizes[self.axes.index(axis)]

    def component_shape(self, component: str) -> tuple[int, ...]:
        """Array shape of all positions (boundary included) of a field component."""
        if component not in self.e_components + self.h_components:
            raise InvalidGridError(f"component {component!r} not defined for {self.dims}-D grids")
        is_e = component[0] == "E"
        direction = component[1]
        shape = []
        for axis, n in zip(self.axes, self.cells):
            along = axis == direction
            shape.append(n if along == is_e else n + 1)
        return tuple(shape)


@dataclass(frozen=True)
class MaterialMap:
    """Cell-centred material parameters (SI units) plus a PEC mask."""

    eps: np.ndarray
    mu: np.ndarray
    sigma_e: np.ndarray
    sigma_m: np.ndarray
    pec: np.ndarray = None

    def __post_init__(self):
        shape = np.shape(self.eps)
        arrays = {}
        for name in ("eps", "mu", "sigma_e", "sigma_m"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise InvalidParameterError(f"material array {name} has shape {arr.shape}, expected {shape}")
            arrays[name] = arr
        pec = np.zeros(shape, dtype=bool) if self.pec is None else np.array(self.pec, dtype=bool)
        if pec.shape != shape:
            raise InvalidParameterError("PEC mask shape mismatch")
        arrays["pec"] = pec
        if not np.all(arrays["eps"] > 0) or not np.all(arrays["mu"] > 0):
            raise InvalidParameterError("permittivity and permeability must be positive")
        if np.any(arrays["sigma_e"] < 0) or np.any(arrays["sigma_m"] < 0):
            raise InvalidParameterError("conductivities must be non-negative")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, grid: GridSpec, eps_r: float = 1.0, mu_r: float = 1.0,
                sigma_e: float = 0.0, sigma_m: float = 0.0) -> "MaterialMap":
        shape = grid.cells
        return cls(
            eps=np.full(shape, eps_r * EPS0),
            mu=np.full(shape, mu_r * MU0),
            sigma_e=np.full(shape, float(sigma_e)),
            sigma_m=np.full(shape, float(sigma_m)),
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.eps.shape

    def with_box(self, lo: Sequence[int], hi: Sequence[int], *, eps_r: float | None = None,
                 mu_r: float | None = None, sigma_e: float | None = None,
                 sigma_m: float | None = None, pec: bool | None = None) -> "MaterialMap":
        """Return a copy with the cells ``lo <= idx < hi`` overwritten."""
        if len(lo) != len(self.shape) or len(hi) != len(self.shape):
            raise InvalidParameterError("box corners must match the grid dimensionality")
        sl = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        arrays = {name: getattr(self, name).copy() for name in ("eps", "mu", "sigma_e", "sigma_m", "pec")}
        if eps_r is not None:
            arrays["eps"][sl] = eps_r * EPS0
        if mu_r is not None:
            arrays["mu"][sl] = mu_r * MU0
        if sigma_e is not None:
            arrays["sigma_e"][sl] = sigma_e
        if sigma_m is not None:
            arrays["sigma_m"][sl] = sigma_m
        if pec is not None:
            arrays["pec"][sl] = pec
        return MaterialMap(**arrays)

    def owner_values(self, index: np.ndarray) -> dict[str, np.ndarray]:
        """Material values of the cells owning the staggered positions ``index``.

        ``index`` has shape ``(count, dims)``; the owner of position ``i`` (node
        or half) along an axis is cell ``min(i, n - 1)``.
        """
        cells = np.minimum(index, np.array(self.shape) - 1)
        flat = np.ravel_multi_index(tuple(cells.T), self.shape)
        return {name: getattr(self, name).ravel()[flat] for name in ("eps", "mu", "sigma_e", "sigma_m")}


@dataclass(frozen=True)
class PEC:
    pass


@dataclass(frozen=True)
class MatchedAbsorber:
    thickness: int
    poly_order: int = 4
    target_reflection: float = 1e-6

    def __post_init__(self):
        if self.thickness < 1:
            raise InvalidParameterError("absorber thickness must be >= 1 cell")
        if self.poly_order < 0:
            raise InvalidParameterError("absorber polynomial order must be >= 0")
        if not 0 < self.target_reflection < 1:
            raise InvalidParameterError("target reflection must lie in (0, 1)")


FaceCondition = Union[PEC, MatchedAbsorber]


@dataclass(frozen=True)
class BoundarySpec:
    """Per-face boundary conditions keyed ``"<axis>_lo"`` / ``"<axis>_hi"``.

    Every outer face is a perfect conductor; a :class:`MatchedAbsorber` adds a
    graded lossy layer of ``thickness`` cells in front of it.
    """

    faces: dict = field(default_factory=dict)

    def face(self, axis: str, side: str) -> FaceCondition:
        return self.faces.get(f"{axis}_{side}", PEC())

    def validate(self, grid: GridSpec) -> None:
        valid = {f"{a}_{s}" for a in grid.axes for s in ("lo", "hi")}
        unknown = set(self.faces) - valid
        if unknown:
            raise InvalidParameterError(f"unknown boundary faces {sorted(unknown)} for {grid.dims}-D grid")
        for key, cond in self.faces.items():
            if isinstance(cond, MatchedAbsorber):
                n = grid.cells[grid.axes.index(key.split("_")[0])]
                if cond.thickness > n:
                    raise InvalidParameterError(f"absorber on {key} is thicker than the grid")


def absorber_profile(thickness: int, poly_order: int, target_reflection: float,
                     cell_size: float, wave_impedance: float) -> tuple[np.ndarray, np.ndarray]:
    """Polynomially graded, impedance-matched conductivity profile.

    Returns per-cell ``(sigma_e, sigma_m)`` ordered from the inner edge of the
    layer outwards.  Cell ``i`` is sampled at depth ``x = i * cell_size``.
    """
    if thickness < 1:
        raise InvalidParameterError("absorber thickness must be >= 1 cell")
    if poly_order < 0:
        raise InvalidParameterError("absorber polynomial order must be >= 0")
    if not 0 < target_reflection < 1:
        raise InvalidParameterError(f"target_reflection must lie in (0, 1), got {target_reflection}")
    if cell_size <= 0 or wave_impedance <= 0:
        raise InvalidParameterError("cell size and wave impedance must be positive")
    depth = thickness * cell_size
    sigma_max = -(poly_order + 1) * math.log(target_reflection) / (2.0 * wave_impedance * depth)
    x = np.arange(thickness) * cell_size
    sigma_e = sigma_max * (x / depth) ** poly_order
    sigma_m = sigma_e * wave_impedance**2
    return sigma_e, sigma_m


def absorber_conductivity(grid: GridSpec, boundaries: BoundarySpec, component: str,
                          index: np.ndarray, wave_impedance: np.ndarray) -> np.ndarray:
    """Graded absorber conductivity at the staggered positions of ``component``.

    The profile of :func:`absorber_profile` is evaluated at each field's own
    depth (node or half-node) inside the layer rather than per cell, which
    keeps the E and H grading interleaved the way the fields are.  Returns
    ``sigma_e`` for E components and the matched ``sigma_m`` for H
    components.  Overlapping layers (corners) keep the larger value.
    """
    boundaries.validate(grid)
    index = np.asarray(index, dtype=float).reshape(-1, grid.dims)
    is_e = component[0] == "E"
    unit = np.zeros(len(index))
    for ax, (axis, n, d) in enumerate(zip(grid.axes, grid.cells, grid.sizes)):
        half = (axis == component[1]) == is_e
        p = index[:, ax] + (0.5 if half else 0.0)
        for side in ("lo", "hi"):
            cond = boundaries.face(axis, side)
            if not isinstance(cond, MatchedAbsorber):
                continue
            t = cond.thickness
            depth = (t - p) if side == "lo" else (p - (n - t))
            inside = depth > 0
            if not inside.any():
                continue
            # sigma at unit impedance; rescaled by the local impedance below
            smax = -(cond.poly_order + 1) * math.log(cond.target_reflection) / (2.0 * t * d)
            prof = np.where(inside, smax * (np.clip(depth, 0, t) / t) ** cond.poly_order, 0.0)
            unit = np.maximum(unit, prof)
    eta = np.asarray(wave_impedance, dtype=float)
    return unit / eta if is_e else unit * eta


def cfl_max_timestep(grid: GridSpec, materials: MaterialMap) -> float:
    """Largest stable explicit timestep: the per-cell minimum of the Courant bound."""
    if any(s <= 0 for s in grid.sizes):
        raise InvalidGridError("cell sizes must be positive")
    if materials.shape != grid.cells:
        raise InvalidGridError(f"material shape {materials.shape} does not match grid {grid.cells}")
    inv = math.sqrt(sum(1.0 / d**2 for d in grid.sizes))
    c_max = float(np.max(1.0 / np.sqrt(materials.eps * materials.mu)))
    return 1.0 / (c_max * inv)


# --------------------------------------------------------------------------- sources


@dataclass(frozen=True)
class GaussianPulse:
    """``exp(-(t - t0)^2 / (2 tau^2))`` whose spectrum is 20 dB down at ``f_max``."""

    f_max: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f_max > 0:
            raise InvalidParameterError("f_max must be positive")

    @property
    def tau(self) -> float:
        return math.sqrt(2.0 * math.log(10.0)) / (2.0 * math.pi * self.f_max)

    @property
    def t0(self) -> float:
        return 4.0 * self.tau

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-((t - self.t0) ** 2) / (2.0 * self.tau**2))

    def series(self, dt: float, steps: int) -> np.ndarray:
        return self(dt * np.arange(1, steps + 1))


@dataclass(frozen=True)
class Sinusoid:
    f0: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise InvalidParameterError("f0 must be positive")

    def __call__(self, t):
        return self.amplitude * np.sin(2.0 * math.pi * self.f0 * np.asarray(t, dtype=float))

    def series(self, dt: float, steps: int) -> np.ndarray:
        return self(dt * np.arange(1, steps + 1))


@dataclass(frozen=True)
class UserSamples:
    """Explicit input samples; entry ``n`` drives the step producing ``x^{n+1}``."""

    samples: tuple[float, ...]

    def series(self, dt: float, steps: int) -> np.ndarray:
        out = np.zeros(steps)
        vals = np.asarray(self.samples, dtype=float)[:steps]
        out[: len(vals)] = vals
        return out


Waveform = Union[GaussianPulse, Sinusoid, UserSamples]


@dataclass(frozen=True)
class SourceSpec:
    """One input channel: a current impressed at one or more field positions.

    ``kind`` is ``"J"`` (electric current, on an E component) or ``"M"``
    (magnetic current, on an H component).
    """

    component: str
    locations: tuple[Index, ...]
    waveform: Waveform
    kind: str = "J"

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(tuple(int(i) for i in loc) for loc in self.locations))
        if self.kind not in ("J", "M"):
            raise InvalidParameterError(f"source kind must be J or M, got {self.kind!r}")
        if (self.kind == "J") != (self.component[:1] == "E"):
            raise InvalidParameterError(f"{self.kind} source cannot drive component {self.component}")
        if not self.locations:
            raise InvalidParameterError("source needs at least one location")


@dataclass(frozen=True)
class ProbeSpec:
    name: str
    component: str
    index: Index

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
