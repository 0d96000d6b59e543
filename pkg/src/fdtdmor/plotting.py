"""Figures for run artifacts, rendered straight to files with the Agg canvas."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .fdtd import TimeSeries
from .post import ResonanceList, SParameters, Spectrum

COLORS = ("#1f4e79", "#c0392b", "#27ae60", "#8e44ad", "#d35400")


def _figure(width=6.4, height=4.0) -> Figure:
    fig = Figure(figsize=(width, height), layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _style(ax) -> None:
    ax.grid(True, alpha=0.3)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120)
    return path


def plot_series(series: TimeSeries, path, title: str = "") -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    t = series.times * 1e9
    for i, name in enumerate(series.names):
        ax.plot(t, series.values[:, i], lw=0.8, color=COLORS[i % len(COLORS)], label=name)
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("probe value")
    ax.set_title(title)
    if len(series.names) > 1:
        ax.legend(frameon=False)
    _style(ax)
    return _save(fig, path)


def plot_spectrum(spectrum: Spectrum, path, channel=0, resonances: ResonanceList | None = None,
                  analytical: Sequence[float] | None = None, f_max: float | None = None, title: str = "") -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    mag = np.abs(spectrum.channel(channel))
    top = mag.max() if mag.size and mag.max() > 0 else 1.0
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / top)
    f = spectrum.freqs / 1e9
    ax.plot(f, db, lw=0.8, color=COLORS[0])
    if analytical is not None:
        for i, fa in enumerate(analytical):
            ax.axvline(fa / 1e9, color=COLORS[2], lw=0.7, ls="--", label="analytical" if i == 0 else None)
    if resonances is not None and len(resonances):
        with np.errstate(divide="ignore"):
            ax.plot(resonances.freqs / 1e9, 20 * np.log10(resonances.magnitudes / top), "v",
                    color=COLORS[1], ms=5, label="detected")
    if f_max is None:
        marks = [*(analytical if analytical is not None else ()), *(resonances.freqs if resonances is not None else ())]
        f_max = 1.25 * max(marks) if marks else None
    if f_max is not None:
        ax.set_xlim(0, f_max / 1e9)
    ax.set_ylim(max(np.nanmin(db[np.isfinite(db)]) if np.isfinite(db).any() else -100, -100), 5)
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("|X(f)| (dB rel. max)")
    ax.set_title(title)
    if analytical is not None or resonances is not None:
        ax.legend(frameon=False, loc="upper right")
    _style(ax)
    return _save(fig, path)


def plot_eigenvalues(sets: dict, path, title: str = "") -> Path:
    """Update eigenvalues against the unit circle; ``sets`` maps label to values."""
    fig = _figure(5.0, 5.0)
    ax = fig.add_subplot()
    theta = np.linspace(0, 2 * np.pi, 721)
    ax.plot(np.cos(theta), np.sin(theta), color="0.5", lw=0.8)
    for i, (label, vals) in enumerate(sets.items()):
        vals = np.asarray(vals)
        ax.plot(vals.real, vals.imag, ".", ms=3, color=COLORS[i % len(COLORS)], label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("Re(lambda)")
    ax.set_ylabel("Im(lambda)")
    ax.set_title(title)
    if sets:
        ax.legend(frameon=False, loc="upper right")
    _style(ax)
    return _save(fig, path)


def plot_sparams(sets: dict, path, band_fraction: float = 0.1, title: str = "") -> Path:
    """``|S21|`` and ``|S11|`` in dB for each labelled :class:`SParameters`."""
    fig = _figure(6.4, 5.0)
    ax21, ax11 = fig.subplots(2, 1, sharex=True)
    for i, (label, sp) in enumerate(sets.items()):
        band = sp.band(band_fraction)
        f = sp.freqs[band] / 1e9
        with np.errstate(divide="ignore"):
            ax21.plot(f, 20 * np.log10(np.abs(sp.s21[band])), lw=0.9, color=COLORS[i % len(COLORS)], label=label)
            ax11.plot(f, 20 * np.log10(np.abs(sp.s11[band])), lw=0.9, color=COLORS[i % len(COLORS)], label=label)
    ax21.set_ylabel("|S21| (dB)")
    ax11.set_ylabel("|S11| (dB)")
    ax11.set_xlabel("frequency (GHz)")
    ax21.set_title(title)
    ax21.legend(frameon=False)
    _style(ax21)
    _style(ax11)
    return _save(fig, path)
