"""Frequency-domain post-processing and analytical reference values."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import DegenerateReferenceError
from .fdtd import TimeSeries
from .grid import C0

DEFAULT_PROMINENCE = 0.05
# tolerance on the sidelobe envelope (neighbouring tones add to the leakage)
SIDELOBE_MARGIN = 1.5


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    values: np.ndarray  # (n_freqs, n_channels), complex
    names: list
    record_time: float = 0.0  # duration of the windowed record, seconds

    def channel(self, name_or_index=0) -> np.ndarray:
        idx = self.names.index(name_or_index) if isinstance(name_or_index, str) else name_or_index
        return self.values[:, idx]

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if len(self.freqs) > 1 else 0.0

    def write_csv(self, path, channel=0, provenance: str | None = None) -> None:
        write_complex_csv(path, self.freqs, self.channel(channel), provenance)


@dataclass(frozen=True)
class ResonanceList:
    freqs: np.ndarray
    magnitudes: np.ndarray

    def __len__(self) -> int:
        return len(self.freqs)

    def write_csv(self, path, provenance: str | None = None) -> None:
        data = np.column_stack([np.arange(len(self.freqs)), self.freqs, self.magnitudes])
        header = "index,frequency_Hz,magnitude"
        if provenance:
            header = f"# {provenance}\n{header}"
        np.savetxt(Path(path), data, fmt=["%d", "%.17g", "%.17g"], delimiter=",", header=header, comments="")

    @classmethod
    def read_csv(cls, path) -> "ResonanceList":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
        if len(lines) <= 1:
            return cls(np.zeros(0), np.zeros(0))
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        return cls(data[:, 1], data[:, 2])


def write_complex_csv(path, freqs, values, provenance: str | None = None) -> None:
    values = np.asarray(values, dtype=complex)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(np.abs(values))
    data = np.column_stack([freqs, values.real, values.imag, db])
    header = "frequency,real,imaginary,magnitude_dB"
    if provenance:
        header = f"# {provenance}\n{header}"
    np.savetxt(Path(path), data, delimiter=",", header=header, comments="", fmt="%.17g")


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def frequency_response(series: TimeSeries, pad: bool = True) -> Spectrum:
    """Rectangular-window DFT of every channel.

    With ``pad`` the record is zero-padded to the next power of two at least
    four times its length.
    """
    if series.steps < 2:
        raise ValueError("need at least two samples")
    n = _next_pow2(4 * series.steps) if pad else series.steps
    values = np.fft.rfft(series.values, n=n, axis=0)
    freqs = np.fft.rfftfreq(n, series.dt)
    return Spectrum(freqs=freqs, values=values, names=list(series.names), record_time=series.steps * series.dt)


def find_resonances(spectrum: Spectrum, prominence: float = DEFAULT_PROMINENCE, max_count: int | None = None,
                    channel=0, f_min: float = 0.0, f_max: float | None = None) -> ResonanceList:
    """Prominent local maxima of ``|spectrum|``, refined by a three-bin parabola.

    A peak qualifies when its prominence reaches ``prominence`` times the
    global maximum of the magnitude.
    """
    if not prominence > 0:
        raise ValueError("prominence must be positive")
    mag = np.abs(spectrum.channel(channel))
    top = float(mag.max()) if mag.size else 0.0
    if top == 0.0:
        return ResonanceList(np.zeros(0), np.zeros(0))
    idx, _ = find_peaks(mag, prominence=prominence * top)
    # strict maxima only
    idx = np.array([i for i in idx if mag[i] > mag[i - 1] and mag[i] > mag[i + 1]], dtype=int)
    freqs, mags = [], []
    df = spectrum.bin_width
    for i in idx:
        a, b, c = mag[i - 1], mag[i], mag[i + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        f = spectrum.freqs[i] + shift * df
        if f < f_min or (f_max is not None and f > f_max):
            continue
        freqs.append(f)
        mags.append(b - 0.25 * (a - c) * shift)
    if spectrum.record_time > 0 and freqs:
        freqs, mags = _drop_sidelobes(np.array(freqs), np.array(mags), spectrum.record_time)
    order = np.argsort(freqs)
    freqs = np.asarray(freqs)[order]
    mags = np.asarray(mags)[order]
    if max_count is not None:
        freqs, mags = freqs[:max_count], mags[:max_count]
    return ResonanceList(freqs, mags)


def _drop_sidelobes(freqs: np.ndarray, mags: np.ndarray, record_time: float,
                    margin: float = SIDELOBE_MARGIN) -> tuple[np.ndarray, np.ndarray]:
    """Discard maxima that fit under the rectangular-window sidelobe envelope of a stronger peak.

    A tone of height ``P`` leaks at most ``P / (pi |df T|)`` at offset ``df``
    from its centre for a record of duration ``T``.
    """
    keep = []
    for i in np.argsort(-mags):
        leaked = False
        for j in keep:
            x = abs(freqs[i] - freqs[j]) * record_time
            if x >= 0.5 and mags[i] <= margin * mags[j] / (math.pi * x):
                leaked = True
                break
        if not leaked:
            keep.append(i)
    keep = np.array(sorted(keep, key=lambda k: freqs[k]), dtype=int)
    return freqs[keep], mags[keep]


def analytical_cavity_modes(lengths: Sequence[float], eps_r: float = 1.0, count: int = 6,
                            return_indices: bool = False):
    """Resonances of a rectangular PEC cavity, ascending and de-duplicated.

    Two lengths give 2-D TM modes (both indices >= 1); three lengths give 3-D
    modes with at least two non-zero indices.
    """
    if any(l <= 0 for l in lengths) or count < 1:
        raise ValueError("lengths must be positive and count >= 1")
    dims = len(lengths)
    top = count + 2
    found = []
    for idx in itertools.product(range(top + 1), repeat=dims):
        if dims == 2 and min(idx) < 1:
            continue
        if dims == 3 and sum(1 for i in idx if i) < 2:
            continue
        if dims == 1 and idx[0] < 1:
            continue
        f = C0 / (2 * math.sqrt(eps_r)) * math.sqrt(sum((m / l) ** 2 for m, l in zip(idx, lengths)))
        found.append((f, idx))
    found.sort()
    freqs, modes = [], []
    for f, idx in found:
        if freqs and abs(f - freqs[-1]) <= 1e-12 * f:
            modes[-1].append(idx)
            continue
        freqs.append(f)
        modes.append([idx])
        if len(freqs) == count:
            break
    freqs = np.array(freqs)
    return (freqs, modes) if return_indices else freqs


@dataclass(frozen=True)
class SParameters:
    freqs: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    incident: np.ndarray  # |DFT(incident)| on the same grid
    valid: np.ndarray

    def band(self, fraction: float = 0.1) -> np.ndarray:
        """Mask of bins where the incident spectrum is at least ``fraction`` of its peak."""
        return self.valid & (self.incident >= fraction * self.incident.max())

    def write_csv(self, path, provenance: str | None = None) -> None:
        s11, s21 = self.s11[self.valid], self.s21[self.valid]
        with np.errstate(divide="ignore"):
            data = np.column_stack([
                self.freqs[self.valid], s11.real, s11.imag, 20 * np.log10(np.abs(s11)),
                s21.real, s21.imag, 20 * np.log10(np.abs(s21)), self.incident[self.valid],
            ])
        header = "frequency,s11_real,s11_imaginary,s11_magnitude_dB,s21_real,s21_imaginary,s21_magnitude_dB,incident_magnitude"
        if provenance:
            header = f"# {provenance}\n{header}"
        np.savetxt(Path(path), data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def read_csv(cls, path) -> "SParameters":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        return cls(freqs=data[:, 0], s11=data[:, 1] + 1j * data[:, 2], s21=data[:, 4] + 1j * data[:, 5],
                   incident=data[:, 7], valid=np.ones(len(data), dtype=bool))


def extract_s_params(incident: np.ndarray | TimeSeries, total_port1: np.ndarray | TimeSeries,
                     transmitted_port2: np.ndarray | TimeSeries, dt: float | None = None,
                     pad: bool = True) -> SParameters:
    """Two-run S-parameters from an incident-only reference record.

    ``S11 = DFT(total - incident) / DFT(incident)`` and
    ``S21 = DFT(transmitted) / DFT(incident)``, kept where the incident
    spectrum is at least 1e-3 of its maximum.
    """
    def as_array(x):
        if isinstance(x, TimeSeries):
            return x.values[:, 0], x.dt
        return np.asarray(x, dtype=float), None

    inc, dt_i = as_array(incident)
    tot, dt_t = as_array(total_port1)
    tra, dt_r = as_array(transmitted_port2)
    dts = {d for d in (dt, dt_i, dt_t, dt_r) if d is not None}
    if len(dts) != 1 or not (len(inc) == len(tot) == len(tra)):
        raise ValueError("records must share dt and step count")
    dt = dts.pop()
    n = _next_pow2(4 * len(inc)) if pad else len(inc)
    I = np.fft.rfft(inc, n=n)
    mag = np.abs(I)
    if mag.max() == 0:
        raise DegenerateReferenceError("incident record has an all-zero spectrum")
    valid = mag >= 1e-3 * mag.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        s11 = np.where(valid, np.fft.rfft(tot - inc, n=n) / I, np.nan)
        s21 = np.where(valid, np.fft.rfft(tra, n=n) / I, np.nan)
    return SParameters(freqs=np.fft.rfftfreq(n, dt), s11=s11, s21=s21, incident=mag, valid=valid)
