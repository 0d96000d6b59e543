"""Scenario files: schema, loading, and built-in generators.

A scenario is a YAML document whose sections mirror :class:`ScenarioConfig`.
Unknown keys are rejected so that a misspelt parameter fails loudly instead
of silently falling back to a default.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .grid import (
    BoundarySpec,
    GaussianPulse,
    GridSpec,
    MatchedAbsorber,
    MaterialMap,
    PEC,
    ProbeSpec,
    Sinusoid,
    SourceSpec,
    UserSamples,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    dims: Literal[1, 2, 3]
    cells: list[int]
    sizes: list[float]
    polarization: Literal["TM", "TE"] = "TM"

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.cells) != self.dims or len(self.sizes) != self.dims:
            raise ValueError(f"cells and sizes need {self.dims} entries")
        if any(c < 1 for c in self.cells):
            raise ValueError("cell counts must be >= 1")
        if any(not (s > 0) for s in self.sizes):
            raise ValueError("cell sizes must be positive")
        return self


class RegionConfig(_Strict):
    """Box of cells ``lo <= index < hi`` with overridden material values."""

    lo: list[int]
    hi: list[int]
    eps_r: Optional[float] = None
    mu_r: Optional[float] = None
    sigma_e: Optional[float] = None
    sigma_m: Optional[float] = None
    pec: Optional[bool] = None


class MaterialsConfig(_Strict):
    eps_r: float = Field(1.0, gt=0)
    mu_r: float = Field(1.0, gt=0)
    sigma_e: float = Field(0.0, ge=0)
    sigma_m: float = Field(0.0, ge=0)
    regions: list[RegionConfig] = []


class PecFace(_Strict):
    type: Literal["pec"]


class AbsorberFace(_Strict):
    type: Literal["absorber"]
    thickness: int = Field(ge=1)
    poly_order: int = Field(4, ge=0)
    target_reflection: float = Field(1e-6, gt=0, lt=1)


Face = Annotated[Union[PecFace, AbsorberFace], Field(discriminator="type")]


class GaussianConfig(_Strict):
    type: Literal["gaussian"]
    f_max: float = Field(gt=0)
    amplitude: float = 1.0


class SinusoidConfig(_Strict):
    type: Literal["sinusoid"]
    f0: float = Field(gt=0)
    amplitude: float = 1.0


class SamplesConfig(_Strict):
    type: Literal["samples"]
    values: list[float]


Waveform = Annotated[Union[GaussianConfig, SinusoidConfig, SamplesConfig], Field(discriminator="type")]


class SourceConfig(_Strict):
    component: str
    locations: list[list[int]]
    kind: Literal["J", "M"] = "J"
    waveform: Waveform


class ProbeConfig(_Strict):
    name: str
    component: str
    index: list[int]


class ReductionConfig(_Strict):
    order: int = 80  # reduced size 2N~ (both blocks together)
    M: float = Field(1.1, gt=1)
    L: int = Field(2, ge=0)
    f_max: float = Field(gt=0)
    gamma: float = Field(0.9999, gt=0, lt=1)
    enforce: Optional[bool] = None  # None: enforce exactly when s_factor >= 1

    @field_validator("order")
    @classmethod
    def _even(cls, v):
        if v < 2 or v % 2:
            raise ValueError("reduced order 2N~ must be even and >= 2")
        return v


class SolverConfig(_Strict):
    method: Literal["auto", "direct", "iterative"] = "auto"
    tol: float = Field(1e-4, gt=0)


class AnalysisConfig(_Strict):
    probe: Optional[str] = None  # channel used for resonances; first probe by default
    prominence: float = Field(0.05, gt=0)
    max_resonances: int = Field(6, ge=1)
    f_min: float = Field(0.0, ge=0)
    f_max: Optional[float] = None
    analytical_modes: bool = False


class SParamConfig(_Strict):
    """Two-run extraction; the reference run drops every material region."""

    port1: str
    port2: str


class ReferenceConfig(_Strict):
    """Paired full-FDTD run used for the speedup column and accuracy checks."""

    s_factor: float = Field(0.99, gt=0)
    steps: Optional[int] = Field(None, ge=1)  # None: same simulated time as the main run


class OutputsConfig(_Strict):
    directory: str = "out"
    time_series: bool = True
    spectra: bool = True
    resonances: bool = True
    eigenvalues: bool = False
    singular_values: bool = False
    model: bool = False
    matrices: bool = False
    plots: bool = True


class ScenarioConfig(_Strict):
    name: str = "scenario"
    grid: GridConfig
    materials: MaterialsConfig = MaterialsConfig()
    boundaries: dict[str, Face] = {}
    sources: list[SourceConfig]
    probes: list[ProbeConfig]
    s_factor: float = Field(gt=0)
    steps: int = Field(ge=1)
    engine: Literal["full", "reduced"] = "full"
    reduction: Optional[ReductionConfig] = None
    solver: SolverConfig = SolverConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    sparams: Optional[SParamConfig] = None
    reference: Optional[ReferenceConfig] = None
    outputs: OutputsConfig = OutputsConfig()

    @model_validator(mode="after")
    def _consistency(self):
        if self.engine == "reduced" and self.reduction is None:
            raise ValueError("engine 'reduced' needs a reduction section")
        names = [p.name for p in self.probes]
        if len(set(names)) != len(names):
            raise ValueError("probe names must be unique")
        if self.sparams is not None:
            for port in (self.sparams.port1, self.sparams.port2):
                if port not in names:
                    raise ValueError(f"S-parameter port {port!r} is not a probe")
        if self.analysis.probe is not None and self.analysis.probe not in names:
            raise ValueError(f"analysis probe {self.analysis.probe!r} is not a probe")
        return self

    # ------------------------------------------------------------------ build

    def grid_spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(g.dims, tuple(g.cells), tuple(g.sizes), g.polarization)

    def material_map(self, with_regions: bool = True) -> MaterialMap:
        m = self.materials
        mats = MaterialMap.uniform(self.grid_spec(), m.eps_r, m.mu_r, m.sigma_e, m.sigma_m)
        if with_regions:
            for r in m.regions:
                mats = mats.with_box(r.lo, r.hi, eps_r=r.eps_r, mu_r=r.mu_r, sigma_e=r.sigma_e,
                                     sigma_m=r.sigma_m, pec=r.pec)
        return mats

    def boundary_spec(self) -> BoundarySpec:
        faces = {}
        for key, face in self.boundaries.items():
            if isinstance(face, AbsorberFace):
                faces[key] = MatchedAbsorber(face.thickness, face.poly_order, face.target_reflection)
            else:
                faces[key] = PEC()
        return BoundarySpec(faces)

    def source_specs(self) -> list[SourceSpec]:
        out = []
        for s in self.sources:
            w = s.waveform
            if isinstance(w, GaussianConfig):
                wave = GaussianPulse(w.f_max, w.amplitude)
            elif isinstance(w, SinusoidConfig):
                wave = Sinusoid(w.f0, w.amplitude)
            else:
                wave = UserSamples(tuple(w.values))
            out.append(SourceSpec(s.component, tuple(tuple(l) for l in s.locations), wave, s.kind))
        return out

    def probe_specs(self) -> list[ProbeSpec]:
        return [ProbeSpec(p.name, p.component, tuple(p.index)) for p in self.probes]

    @property
    def enforce(self) -> bool:
        flag = self.reduction.enforce if self.reduction else None
        return self.s_factor >= 1 if flag is None else flag

    # ----------------------------------------------------------- round trip

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """Hash of the canonical JSON form; independent of file formatting."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_updates(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node.setdefault(key, {})
            node[leaf] = value
        return parse_scenario(data)


def _error_path(exc: ValidationError) -> tuple[str, str]:
    err = exc.errors()[0]
    path = ".".join(str(p) for p in err["loc"]) or "<root>"
    return path, err["msg"]


def parse_scenario(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", "<root>")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        path, msg = _error_path(exc)
        raise ConfigError(f"{path}: {msg}", path) from exc


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}", str(path)) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}", str(path)) from exc
    return parse_scenario(data)


def save_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(config.to_yaml())


# ------------------------------------------------------------------- generators


def _at(fraction: float, n: int) -> int:
    return min(max(int(fraction * n), 1), n - 1)


def cavity2d(n: int = 51, delta: float = 0.02, s_factor: float = 0.99, engine: str = "reduced",
             steps: int = 10_000, f_max: float = 0.75e9, order: int = 80, L: int = 2, M: float = 1.1,
             directory: str | None = None) -> dict:
    """Empty square PEC cavity with one ``Ez`` source and one ``Ez`` probe.

    The source and probe positions couple to each of the first six TM modes
    (including both members of the degenerate pairs).
    """
    return {
        "name": f"cavity2d-{n}",
        "grid": {"dims": 2, "cells": [n, n], "sizes": [delta, delta]},
        "sources": [{"component": "Ez", "locations": [[_at(0.39, n), _at(0.25, n)]],
                     "waveform": {"type": "gaussian", "f_max": f_max}}],
        "probes": [{"name": "probe", "component": "Ez", "index": [_at(0.62, n), _at(0.75, n)]}],
        "s_factor": s_factor,
        "steps": steps,
        "engine": engine,
        "reduction": {"order": order, "M": M, "L": L, "f_max": f_max},
        "analysis": {"max_resonances": 6, "analytical_modes": True},
        "outputs": {"directory": directory or f"out/cavity2d-{n}"},
    }


def cavity3d(n: int = 15, size: float = 1.0, s_factor: float = 0.99, engine: str = "reduced",
             steps: int = 10_000, f_max: float = 0.5e9, order: int = 80, L: int = 2, M: float = 1.1,
             method: str = "auto", directory: str | None = None) -> dict:
    """Empty cubic PEC cavity; an ``Ez`` source and an ``Hx`` probe off the symmetry planes.

    An H probe avoids the static charge left on E by a net current pulse.
    """
    d = size / n
    return {
        "name": f"cavity3d-{n}",
        "grid": {"dims": 3, "cells": [n, n, n], "sizes": [d, d, d]},
        "sources": [{"component": "Ez", "locations": [[_at(0.23, n), _at(0.34, n), _at(0.12, n)]],
                     "waveform": {"type": "gaussian", "f_max": f_max}}],
        "probes": [{"name": "probe", "component": "Hx", "index": [_at(0.67, n), _at(0.56, n), _at(0.67, n)]}],
        "s_factor": s_factor,
        "steps": steps,
        "engine": engine,
        "reduction": {"order": order, "M": M, "L": L, "f_max": f_max},
        "solver": {"method": method},
        "analysis": {"max_resonances": 6, "analytical_modes": True},
        "outputs": {"directory": directory or f"out/cavity3d-{n}"},
    }


def cube_demo(s_factor: float = 0.99, steps: int = 10_000, f_max: float = 0.3e9,
              directory: str | None = None) -> dict:
    """1 m cube with 9 cells per side driven below 0.3 GHz."""
    n, d = 9, 1.0 / 9
    return {
        "name": "cube-demo",
        "grid": {"dims": 3, "cells": [n, n, n], "sizes": [d, d, d]},
        "sources": [{"component": "Ez", "locations": [[2, 3, 1]],
                     "waveform": {"type": "gaussian", "f_max": f_max}}],
        "probes": [{"name": "probe", "component": "Hx", "index": [6, 5, 6]}],
        "s_factor": s_factor,
        "steps": steps,
        "engine": "full",
        "reduction": {"order": 80, "M": 1.1, "L": 2, "f_max": f_max},
        "analysis": {"max_resonances": 2, "f_max": f_max, "analytical_modes": True},
        "outputs": {"directory": directory or "out/cube-demo", "eigenvalues": True},
    }


def iris_waveguide(nx: int = 21, ny: int = 201, delta: float = 2.5e-3, s_factor: float = 4.95,
                   engine: str = "reduced", steps: int = 20_000, f_max: float = 3e9, order: int = 200,
                   L: int = 2, M: float = 1.1, eps_r: float = 2.5, irises: int = 5,
                   iris_length: float = 0.0125, aperture: float = 0.01, separation: float = 0.05,
                   absorber: int = 5, directory: str | None = None) -> dict:
    """Dielectric-filled parallel-plate guide with a row of PEC irises.

    Fields are ``Ex``, ``Ey``, ``Hz`` so the guided wave has its magnetic
    field transverse to the guide axis.  A uniform ``Ex`` line source sits
    behind port 1; ``Hz`` probes on the centre line act as ports.
    """
    ap = max(1, int(round(aperture / delta)))
    il = max(1, int(round(iris_length / delta)))
    sep = int(round(separation / delta))
    x0 = (nx - ap) // 2
    regions = []
    for k in range(irises):
        yc = ny // 2 + (k - (irises - 1) / 2) * sep
        y0 = int(round(yc - il / 2))
        regions.append({"lo": [0, y0], "hi": [x0, y0 + il], "pec": True})
        regions.append({"lo": [x0 + ap, y0], "hi": [nx, y0 + il], "pec": True})
    src_row = absorber + 3
    port = absorber + 11
    return {
        "name": f"iris-waveguide-{nx}x{ny}",
        "grid": {"dims": 2, "cells": [nx, ny], "sizes": [delta, delta], "polarization": "TE"},
        "materials": {"eps_r": eps_r, "regions": regions},
        "boundaries": {"y_lo": {"type": "absorber", "thickness": absorber},
                       "y_hi": {"type": "absorber", "thickness": absorber}},
        "sources": [{"component": "Ex", "locations": [[i, src_row] for i in range(nx)],
                     "waveform": {"type": "gaussian", "f_max": f_max}}],
        "probes": [{"name": "port1", "component": "Hz", "index": [nx // 2, port]},
                   {"name": "port2", "component": "Hz", "index": [nx // 2, ny - port]}],
        "s_factor": s_factor,
        "steps": steps,
        "engine": engine,
        "reduction": {"order": order, "M": M, "L": L, "f_max": f_max},
        "analysis": {"probe": "port2", "max_resonances": 6, "f_max": f_max},
        "sparams": {"port1": "port1", "port2": "port2"},
        "outputs": {"directory": directory or f"out/iris-waveguide-{nx}x{ny}"},
    }


GENERATORS = {
    "cavity2d": cavity2d,
    "cavity3d": cavity3d,
    "cube-demo": cube_demo,
    "iris-waveguide": iris_waveguide,
}


def _coerce(text: str):
    for cast in (int, float):
        try:
            value = cast(text)
        except ValueError:
            continue
        return value if not (isinstance(value, float) and math.isnan(value)) else text
    return text


def generate(template: str, **params) -> ScenarioConfig:
    """Scenario from a built-in template; string parameter values are parsed as numbers when possible."""
    if template not in GENERATORS:
        raise ConfigError(f"unknown template {template!r}; choose from {sorted(GENERATORS)}", "template")
    clean = {k.replace("-", "_"): (_coerce(v) if isinstance(v, str) else v) for k, v in params.items()}
    try:
        data = GENERATORS[template](**clean)
    except TypeError as exc:
        raise ConfigError(f"bad parameter for {template}: {exc}", "template") from exc
    return parse_scenario(data)
