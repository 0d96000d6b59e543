"""End-to-end scenario execution: assemble, reduce, enforce, simulate, post-process, write.

Numeric artifacts depend only on the scenario (no seeds, no clocks); wall
clock times go to the timing table alone.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .assembly import DENSE_LIMIT, SystemMatrices, assemble, build_update_pair
from .errors import (
    ComparisonError,
    ConfigError,
    DivergenceError,
    FdtdMorError,
    InvalidParameterError,
    InvariantViolation,
)
from .fdtd import TimeSeries, input_matrix, run_full
from .grid import cfl_max_timestep
from .post import (
    ResonanceList,
    SParameters,
    Spectrum,
    analytical_cavity_modes,
    extract_s_params,
    find_resonances,
    frequency_response,
)
from .reduced import probe_rows, run_reduced
from .reduction import ProjectionBasis, ReducedModel, build_basis, make_expansion_points, project
from .scenario import ScenarioConfig, load_scenario
from .stability import (
    StabilityReport,
    enforce_stability,
    enforce_stability_full,
    leapfrog_eigenvalues,
    reduced_stability_check,
    scaled_singular_values,
    update_eigenvalues,
    write_eigen_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_THRESHOLD = 0, 1, 2, 3
# enforcement below the CFL limit must leave K~ untouched to this relative accuracy
NOOP_TOL = 1e-10


@dataclass
class PhaseTiming:
    case: str
    size: int
    setup: float
    mor: float | None
    run: float
    speedup: float | None = None

    @property
    def total(self) -> float:
        return self.setup + (self.mor or 0.0) + self.run


def format_timing_table(rows: Sequence[PhaseTiming]) -> str:
    header = ("Case", "Size", "Setup", "MOR", "Run", "Total", "Speedup")
    body = []
    for r in rows:
        body.append((
            r.case, str(r.size), f"{r.setup:.3f}", "-" if r.mor is None else f"{r.mor:.3f}",
            f"{r.run:.3f}", f"{r.total:.3f}", "-" if r.speedup is None else f"{r.speedup:.1f}",
        ))
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in (header, *body)]
    return "\n".join(lines) + "\n"


def write_timing_csv(rows: Sequence[PhaseTiming], path, provenance: str | None = None) -> None:
    lines = [f"# {provenance}"] if provenance else []
    lines.append("case,size,setup,mor,run,total,speedup")
    for r in rows:
        lines.append(",".join([
            r.case, str(r.size), repr(r.setup), "" if r.mor is None else repr(r.mor), repr(r.run),
            repr(r.total), "" if r.speedup is None else repr(r.speedup),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Reduction:
    basis: ProjectionBasis
    raw: ReducedModel
    model: ReducedModel
    report: StabilityReport
    enforced: bool
    seconds: float


@dataclass
class SimulationOutput:
    series: TimeSeries
    matrices: SystemMatrices
    timing: PhaseTiming
    dt: float
    dt_cfl: float
    engine: str
    reduction: Reduction | None = None


def time_step(config: ScenarioConfig, s_factor: float | None = None) -> tuple[float, float]:
    """``(dt, dt_cfl)`` for the scenario's background plus regions."""
    dt_cfl = cfl_max_timestep(config.grid_spec(), config.material_map())
    s = config.s_factor if s_factor is None else s_factor
    return s * dt_cfl, dt_cfl


def reduce_system(matrices: SystemMatrices, config: ScenarioConfig, dt: float,
                  s_factor: float | None = None) -> Reduction:
    """Krylov basis, projection and (when configured) stability enforcement."""
    red = config.reduction
    if red is None:
        raise ConfigError("reduction settings are required", "reduction")
    s = config.s_factor if s_factor is None else s_factor
    t0 = time.perf_counter()
    points = make_expansion_points(red.M, red.L, red.f_max, dt)
    basis = build_basis(matrices, points, red.order // 2, dt, method=config.solver.method, tol=config.solver.tol)
    raw = project(matrices, basis, dt)
    report = reduced_stability_check(raw, dt, s_factor=s)
    enforce = (s >= 1) if red.enforce is None else red.enforce
    model = raw
    if enforce:
        model = enforce_stability(raw, dt, red.gamma)
        if s < 1:
            scale = max(float(np.linalg.norm(raw.K)), 1e-300)
            change = float(np.linalg.norm(model.K - raw.K))
            if change > NOOP_TOL * scale:
                raise InvariantViolation(
                    f"enforcement changed K~ by {change / scale:.3e} (relative) below the CFL limit")
    return Reduction(basis, raw, model, report, enforce, time.perf_counter() - t0)


def simulate(config: ScenarioConfig, engine: str | None = None, s_factor: float | None = None,
             with_regions: bool = True, case: str | None = None, steps: int | None = None) -> SimulationOutput:
    engine = engine or config.engine
    s = config.s_factor if s_factor is None else s_factor
    steps = config.steps if steps is None else steps
    grid = config.grid_spec()
    materials = config.material_map(with_regions)
    dt_cfl = cfl_max_timestep(grid, materials)
    dt = s * dt_cfl
    sources = config.source_specs()
    probes = config.probe_specs()

    t0 = time.perf_counter()
    matrices = assemble(grid, materials, config.boundary_spec(), sources)
    setup = time.perf_counter() - t0

    if engine == "full":
        series = run_full(matrices, sources, probes, dt, steps)
        timing = PhaseTiming(case or "FDTD", matrices.size, setup + series.phases["setup"], None,
                             series.phases["run"])
        return SimulationOutput(series, matrices, timing, dt, dt_cfl, engine)

    reduction = reduce_system(matrices, config, dt, s)
    C = probe_rows(reduction.basis, matrices, probes)
    u = input_matrix(sources, dt, steps)
    series = run_reduced(reduction.model, u, C, [p.name for p in probes], dt)
    timing = PhaseTiming(case or f"s = {s:g}", reduction.model.size, setup + series.phases["setup"],
                         reduction.seconds, series.phases["run"])
    return SimulationOutput(series, matrices, timing, dt, dt_cfl, engine, reduction)


@dataclass
class RunResult:
    config: ScenarioConfig
    directory: Path | None
    main: SimulationOutput
    spectrum: Spectrum
    resonances: ResonanceList
    analytical: np.ndarray | None
    sparams: SParameters | None
    timing: list[PhaseTiming]
    provenance: str
    reference: SimulationOutput | None = None
    reference_sparams: SParameters | None = None
    artifacts: dict = field(default_factory=dict)


def provenance_line(config: ScenarioConfig, dt: float, s_factor: float | None = None) -> str:
    s = config.s_factor if s_factor is None else s_factor
    return f"fdtdmor {__version__} scenario={config.digest()} dt={dt:.12e} s_factor={s:g}"


def reference_steps(config: ScenarioConfig) -> int:
    """Step count of the paired full run; by default it covers the main run's simulated time."""
    ref = config.reference
    if ref.steps is not None:
        return ref.steps
    return math.ceil(config.steps * config.s_factor / ref.s_factor - 1e-9)


def _sparams(config: ScenarioConfig, out: SimulationOutput, engine: str, s: float,
             steps: int | None = None) -> tuple[SParameters, PhaseTiming]:
    inc = simulate(config, engine=engine, s_factor=s, with_regions=False, case="incident", steps=steps)
    sp_cfg = config.sparams
    sp = extract_s_params(inc.series.channel(sp_cfg.port1), out.series.channel(sp_cfg.port1),
                          out.series.channel(sp_cfg.port2), out.dt)
    return sp, inc.timing


def run_scenario(config_or_path, directory=None, write: bool = True) -> RunResult:
    config = config_or_path if isinstance(config_or_path, ScenarioConfig) else load_scenario(config_or_path)
    main = simulate(config)
    rows = [main.timing]
    channel = config.analysis.probe or config.probes[0].name
    spectrum = frequency_response(main.series)
    a = config.analysis
    resonances = find_resonances(spectrum, prominence=a.prominence, max_count=a.max_resonances,
                                 channel=spectrum.names.index(channel), f_min=a.f_min, f_max=a.f_max)
    analytical = None
    if a.analytical_modes:
        analytical = analytical_cavity_modes(config.grid_spec().lengths, config.materials.eps_r, a.max_resonances)

    sparams = None
    if config.sparams is not None:
        sparams, inc_timing = _sparams(config, main, config.engine, config.s_factor)
        rows.append(inc_timing)

    reference = reference_sparams = None
    if config.reference is not None:
        ref_steps = reference_steps(config)
        reference = simulate(config, engine="full", s_factor=config.reference.s_factor, case="FDTD", steps=ref_steps)
        rows.insert(0, reference.timing)
        main.timing.speedup = reference.timing.total / main.timing.total if main.timing.total > 0 else math.inf
        if config.sparams is not None:
            reference_sparams, _ = _sparams(config, reference, "full", config.reference.s_factor, ref_steps)

    result = RunResult(config, None, main, spectrum, resonances, analytical, sparams, rows,
                       provenance_line(config, main.dt), reference, reference_sparams)
    if write:
        out = Path(directory or config.outputs.directory)
        write_artifacts(result, out)
    return result


def _report_text(result: RunResult) -> str:
    cfg, main = result.config, result.main
    lines = [
        f"scenario      {cfg.name} ({cfg.digest()})",
        f"engine        {main.engine}",
        f"s_factor      {cfg.s_factor:g}",
        f"dt            {main.dt:.6e} s (CFL limit {main.dt_cfl:.6e} s)",
        f"steps         {cfg.steps}",
        f"system size   {main.matrices.size} (E {main.matrices.n_e}, H {main.matrices.n_h})",
    ]
    if main.reduction is not None:
        r = main.reduction
        lines += [
            f"reduced size  {r.model.size}",
            f"krylov        {r.basis.info.get('vectors', 0)} vectors, {r.basis.info.get('solves', 0)} solves",
            f"stability     {r.report.violating_count} singular values >= 2/dt before enforcement"
            f" ({'enforced' if r.enforced else 'not enforced'})",
        ]
    lines.append("")
    lines.append("resonances (GHz)")
    for i, f in enumerate(result.resonances.freqs):
        line = f"  {i:2d}  {f / 1e9:.6f}"
        if result.analytical is not None and len(result.analytical):
            ref = result.analytical[np.argmin(np.abs(result.analytical - f))]
            line += f"  analytical {ref / 1e9:.6f}  rel.err {(f - ref) / ref:+.3e}"
        lines.append(line)
    if result.sparams is not None:
        band = result.sparams.band(0.1)
        lines.append("")
        lines.append(f"S-parameters  band {result.sparams.freqs[band].min() / 1e9:.3f}"
                     f"-{result.sparams.freqs[band].max() / 1e9:.3f} GHz (incident >= 10% of peak)")
    return "\n".join(lines) + "\n"


def write_artifacts(result: RunResult, out: Path) -> dict:
    cfg, main = result.config, result.main
    out.mkdir(parents=True, exist_ok=True)
    prov = result.provenance
    outputs = cfg.outputs
    art = {}

    def put(key, name):
        art[key] = out / name
        return art[key]

    (put("scenario", "scenario.yaml")).write_text(f"# {prov}\n" + cfg.to_yaml())
    if outputs.time_series:
        main.series.write_csv(put("series", "series.csv"), prov)
    if outputs.spectra:
        for i, name in enumerate(result.spectrum.names):
            result.spectrum.write_csv(put(f"spectrum_{name}", f"spectrum_{name}.csv"), i, prov)
    if outputs.resonances:
        result.resonances.write_csv(put("resonances", "resonances.csv"), prov)
        if result.analytical is not None:
            ResonanceList(result.analytical, np.zeros(len(result.analytical))).write_csv(
                put("analytical", "analytical_modes.csv"), prov)
    if result.sparams is not None:
        result.sparams.write_csv(put("sparams", "sparams.csv"), prov)
    if result.reference_sparams is not None:
        ref_prov = provenance_line(cfg, result.reference.dt, cfg.reference.s_factor)
        result.reference_sparams.write_csv(put("sparams_reference", "sparams_reference.csv"), ref_prov)
    if result.reference is not None and outputs.time_series:
        ref_prov = provenance_line(cfg, result.reference.dt, cfg.reference.s_factor)
        result.reference.series.write_csv(put("series_reference", "series_reference.csv"), ref_prov)
    if outputs.eigenvalues or outputs.singular_values:
        eig = eigen_analysis(cfg, matrices=main.matrices, reduction=main.reduction)
        if outputs.eigenvalues:
            for label, vals in eig.sets.items():
                write_eigen_csv(put(f"eigenvalues_{label}", f"eigenvalues_{label}.csv"), vals, prov)
        if outputs.singular_values:
            write_eigen_csv(put("singular_values", "singular_values.csv"), eig.singular_values,
                            prov + f" limit={eig.limit:.12e}")
        if outputs.plots:
            from .plotting import plot_eigenvalues
            plot_eigenvalues(eig.sets, put("eigenvalues_plot", "eigenvalues.png"), cfg.name)
    if outputs.model and main.reduction is not None:
        main.reduction.model.save(put("model", "model.bin"))
    if outputs.matrices:
        main.matrices.dump_coo(put("matrices", "matrices"))
    (put("timing", "timing.txt")).write_text(format_timing_table(result.timing))
    write_timing_csv(result.timing, put("timing_csv", "timing.csv"), prov)
    (put("report", "report.txt")).write_text(_report_text(result))
    if outputs.plots:
        from .plotting import plot_series, plot_sparams, plot_spectrum
        plot_series(main.series, put("series_plot", "series.png"), cfg.name)
        channel = cfg.analysis.probe or cfg.probes[0].name
        plot_spectrum(result.spectrum, put("spectrum_plot", "spectrum.png"), result.spectrum.names.index(channel),
                      result.resonances, result.analytical, cfg.analysis.f_max, cfg.name)
        if result.sparams is not None:
            sets = {f"{main.engine} s={cfg.s_factor:g}": result.sparams}
            if result.reference_sparams is not None:
                sets = {f"FDTD s={cfg.reference.s_factor:g}": result.reference_sparams, **sets}
            plot_sparams(sets, put("sparams_plot", "sparams.png"), title=cfg.name)
    result.directory = out
    result.artifacts = art
    return art


# ----------------------------------------------------------------------- eigen


@dataclass
class EigenResult:
    sets: dict
    singular_values: np.ndarray
    limit: float
    violating: int


def eigen_analysis(config: ScenarioConfig, enforce: bool | None = None, s_factor: float | None = None,
                   matrices: SystemMatrices | None = None, reduction: Reduction | None = None) -> EigenResult:
    """Update eigenvalues before and (optionally) after stability enforcement.

    For the full engine the lossless case uses the singular-value route of
    :func:`leapfrog_eigenvalues`; lossy full systems need ``N <= 2000``.
    """
    s = config.s_factor if s_factor is None else s_factor
    dt, _ = time_step(config, s)
    gamma = config.reduction.gamma if config.reduction else 0.9999
    do_enforce = (s >= 1) if enforce is None else enforce
    if matrices is None:
        matrices = assemble(config.grid_spec(), config.material_map(), config.boundary_spec(), config.source_specs())
    sets = {}
    if config.engine == "reduced":
        if reduction is None:
            reduction = reduce_system(matrices, config, dt, s)
        raw = reduction.raw
        sv = scaled_singular_values(raw.d_eps, raw.d_mu, raw.K)
        sets["original"] = update_eigenvalues(raw.R(dt), raw.F())
        if do_enforce:
            fixed = enforce_stability(raw, dt, gamma)
            sets["enforced"] = update_eigenvalues(fixed.R(dt), fixed.F())
    else:
        K = matrices.K.toarray()
        sv = scaled_singular_values(matrices.d_eps, matrices.d_mu, K)
        if matrices.lossless:
            sets["original"] = leapfrog_eigenvalues(matrices.d_eps, matrices.d_mu, K, dt)
            if do_enforce:
                K2 = enforce_stability_full(matrices, dt, gamma)
                sets["enforced"] = leapfrog_eigenvalues(matrices.d_eps, matrices.d_mu, K2, dt)
        else:
            if matrices.size > DENSE_LIMIT:
                raise InvalidParameterError(
                    f"dense eigenvalues of a lossy system need N <= {DENSE_LIMIT}, got {matrices.size}")
            pair = build_update_pair(matrices, dt)
            sets["original"] = update_eigenvalues(pair.R, pair.F)
            if do_enforce:
                K2 = enforce_stability_full(matrices, dt, gamma)
                R = pair.R.toarray()
                F = pair.F.toarray()
                ne = matrices.n_e
                for M, sign in ((R, -0.5), (F, 0.5)):
                    M[:ne, ne:] = sign * K2
                    M[ne:, :ne] = -0.5 * K2.T
                sets["enforced"] = update_eigenvalues(R, F)
    limit = 2.0 / dt
    return EigenResult(sets, np.sort(sv)[::-1], limit, int(np.sum(sv >= limit)))


# --------------------------------------------------------------------- compare


@dataclass
class Artifacts:
    resonances: ResonanceList | None = None
    sparams: SParameters | None = None
    probes: list | None = None


def _header(path: Path) -> str:
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                return line.strip()
    return ""


def load_artifacts(path) -> Artifacts:
    """Collect comparable artifacts from a run directory or a single CSV file."""
    path = Path(path)
    art = Artifacts()
    if path.is_dir():
        if (path / "resonances.csv").exists():
            art.resonances = ResonanceList.read_csv(path / "resonances.csv")
        if (path / "sparams.csv").exists():
            art.sparams = SParameters.read_csv(path / "sparams.csv")
        if (path / "series.csv").exists():
            art.probes = _header(path / "series.csv").split(",")[2:]
        return art
    if not path.exists():
        raise ComparisonError(f"no such artifact: {path}")
    head = _header(path)
    if head.startswith("index,frequency_Hz"):
        art.resonances = ResonanceList.read_csv(path)
    elif head.startswith("frequency,s11_real"):
        art.sparams = SParameters.read_csv(path)
    elif head.startswith("step,time"):
        art.probes = head.split(",")[2:]
    else:
        raise ComparisonError(f"unrecognized artifact format in {path}")
    return art


@dataclass
class ComparisonReport:
    resonance_errors: list = field(default_factory=list)  # (reference Hz, candidate Hz, relative error)
    s21_max_db: float | None = None
    s21_at: float | None = None
    resonance_tol: float = 0.01
    s21_tol_db: float = 1.0

    @property
    def passed(self) -> bool:
        ok = all(np.isfinite(e) and e < self.resonance_tol for _, _, e in self.resonance_errors)
        if self.s21_max_db is not None:
            ok = ok and np.isfinite(self.s21_max_db) and self.s21_max_db <= self.s21_tol_db
        return ok

    def text(self) -> str:
        lines = []
        if self.resonance_errors:
            lines.append("index  reference_GHz  candidate_GHz  rel_error")
            for i, (r, c, e) in enumerate(self.resonance_errors):
                lines.append(f"{i:5d}  {r / 1e9:13.6f}  {c / 1e9:13.6f}  {e:.3e}")
            worst = max(e for _, _, e in self.resonance_errors)
            lines.append(f"max resonance error {worst:.3e} (threshold {self.resonance_tol:g})")
        if self.s21_max_db is not None:
            lines.append(f"max |dS21| {self.s21_max_db:.3f} dB at {self.s21_at / 1e9:.4f} GHz"
                         f" (threshold {self.s21_tol_db:g} dB)")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def resonance_errors(reference: np.ndarray, candidate: np.ndarray) -> list:
    out = []
    for f in reference:
        if len(candidate) == 0:
            out.append((float(f), float("nan"), float("inf")))
            continue
        c = float(candidate[np.argmin(np.abs(candidate - f))])
        out.append((float(f), c, abs(c - f) / f))
    return out


def s21_difference(reference: SParameters, candidate: SParameters, band_fraction: float = 0.1) -> tuple[float, float]:
    """Largest ``| |S21_cand| - |S21_ref| |`` in dB over the reference band."""
    band = reference.band(band_fraction)
    f = reference.freqs[band]
    with np.errstate(divide="ignore", invalid="ignore"):
        ref_db = 20 * np.log10(np.abs(reference.s21[band]))
        valid = candidate.valid & np.isfinite(candidate.s21)
        cand_db = np.interp(f, candidate.freqs[valid], 20 * np.log10(np.abs(candidate.s21[valid])),
                            left=np.nan, right=np.nan)
    diff = np.abs(cand_db - ref_db)
    diff = np.where(np.isfinite(diff), diff, np.inf)
    i = int(np.argmax(diff))
    return float(diff[i]), float(f[i])


def compare_runs(reference, candidate, resonance_tol: float = 0.01, s21_tol_db: float = 1.0,
                 max_count: int | None = None) -> ComparisonReport:
    ref = reference if isinstance(reference, Artifacts) else load_artifacts(reference)
    cand = candidate if isinstance(candidate, Artifacts) else load_artifacts(candidate)
    if ref.probes is not None and cand.probes is not None and ref.probes != cand.probes:
        raise ComparisonError(f"probe sets differ: {ref.probes} vs {cand.probes}")
    report = ComparisonReport(resonance_tol=resonance_tol, s21_tol_db=s21_tol_db)
    compared = False
    if ref.resonances is not None and cand.resonances is not None:
        freqs = ref.resonances.freqs if max_count is None else ref.resonances.freqs[:max_count]
        if len(freqs) == 0:
            raise ComparisonError("reference has no resonances")
        report.resonance_errors = resonance_errors(freqs, cand.resonances.freqs)
        compared = True
    if ref.sparams is not None and cand.sparams is not None:
        report.s21_max_db, report.s21_at = s21_difference(ref.sparams, cand.sparams)
        compared = True
    if not compared:
        raise ComparisonError("reference and candidate share no comparable artifacts")
    return report


# ----------------------------------------------------------------------- batch


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    return EXIT_CONFIG


def _run_one(path: str, directory: str | None) -> tuple[int, str]:
    try:
        result = run_scenario(path, directory)
    except FdtdMorError as exc:
        return exit_code(exc), f"{path}: {exc}"
    return EXIT_OK, f"{path}: wrote {result.directory}"


def run_batch(paths: Sequence[str], jobs: int = 1, root: str | None = None) -> list[tuple[int, str]]:
    """Run scenarios in separate processes; each gets its own output directory."""
    configs = [load_scenario(p) for p in paths]
    if root is not None:
        dirs = [str(Path(root) / c.name) for c in configs]
    else:
        dirs = [c.outputs.directory for c in configs]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("batch scenarios must write to distinct output directories", "outputs.directory")
    if jobs <= 1 or len(paths) == 1:
        return [_run_one(str(p), d) for p, d in zip(paths, dirs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_one, str(p), d) for p, d in zip(paths, dirs)]
        return [f.result() for f in futures]
