"""Preset recipes that regenerate the data behind each figure as CSV files."""

from __future__ import annotations

from dataclasses import dataclass, field

from .lattice_model import Variant
from .sweep import grid

__all__ = ["SweepJob", "ProfileJob", "SpectrumGridJob", "recipe", "FIGURES", "SCALES"]

SCALES = ("small", "full")
FIGURES = tuple(f"fig{k}" for k in range(1, 9))

FULL_SIZES = [89, 144, 233, 377, 610]
SMALL_SIZES = [55, 89, 144, 233]


@dataclass
class SweepJob:
    name: str
    variant: Variant
    J_grid: list[float]
    V_grid: list[float]
    L_list: list[int]
    observables: tuple[str, ...] = ("ImE", "IPR", "EE", "g")


@dataclass
class ProfileJob:
    name: str
    variant: Variant
    J: float
    V: float
    L: int
    cut_step: int = 1
    time_stride: int = 1


@dataclass
class SpectrumGridJob:
    """Spectral diagnostics only (no dynamics) on a (J, V) grid at one size."""

    name: str
    variant: Variant
    J_grid: list[float]
    V_grid: list[float]
    L: int
    observables: tuple[str, ...] = field(default=("ImE", "IPR"))


def _pd_grids(scale: str) -> tuple[list[float], list[float]]:
    # V grid offset by half a step so no point sits on |J| = |V|
    if scale == "full":
        return grid(0.0, 2.0, 0.05), grid(0.025, 1.975, 0.05)
    return grid(0.0, 2.0, 0.25), grid(0.125, 1.875, 0.25)


def _line(scale: str) -> list[float]:
    """Cut through the transition that includes the critical value 1 explicitly."""
    return grid(0.0, 2.0, 0.05 if scale == "full" else 0.25)


def recipe(figure: str, scale: str = "small") -> list:
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; choose from {', '.join(SCALES)}")
    sizes = FULL_SIZES if scale == "full" else SMALL_SIZES
    big = sizes[-1]
    H1, H2 = Variant.NHAAH1, Variant.NHAAH2
    Jpd, Vpd = _pd_grids(scale)
    profile_kw = {"cut_step": 1, "time_stride": 1} if scale == "full" else {"cut_step": 4, "time_stride": 10}

    if figure == "fig1":
        L = 610 if scale == "full" else 89
        return [SpectrumGridJob("fig1_nhaah1", H1, Jpd, Vpd, L), SpectrumGridJob("fig1_nhaah2", H2, Jpd, Vpd, L)]
    if figure == "fig2":
        return [
            SweepJob("fig2a_J1", H1, [1.0], [0.5, 2.0], sizes),
            SweepJob("fig2c_V1", H1, [0.5, 2.0], [1.0], sizes),
            ProfileJob("fig2b_J1_V0.5", H1, 1.0, 0.5, big, **profile_kw),
            ProfileJob("fig2b_J1_V2", H1, 1.0, 2.0, big, **profile_kw),
            ProfileJob("fig2d_V1_J2", H1, 2.0, 1.0, big, **profile_kw),
            ProfileJob("fig2d_V1_J0.5", H1, 0.5, 1.0, big, **profile_kw),
        ]
    if figure == "fig3":
        return [SweepJob("fig3ab_J1", H1, [1.0], _line(scale), sizes),
                SweepJob("fig3cd_V1", H1, _line(scale), [1.0], sizes)]
    if figure == "fig4":
        return [SweepJob("fig4_phase_diagram", H1, Jpd, Vpd, sizes, ("EE", "g"))]
    if figure == "fig5":
        return [SweepJob("fig5ab_J1", H2, [1.0], [0.5, 1.0, 2.0], sizes),
                SweepJob("fig5cd_V1", H2, [0.5, 1.0, 2.0], [1.0], sizes)]
    if figure == "fig6":
        return [
            ProfileJob("fig6a_J1_V0.5", H2, 1.0, 0.5, big, **profile_kw),
            ProfileJob("fig6b_J1_V2", H2, 1.0, 2.0, big, **profile_kw),
            ProfileJob("fig6c_V1_J2", H2, 2.0, 1.0, big, **profile_kw),
            ProfileJob("fig6d_J1_V1", H2, 1.0, 1.0, big, **profile_kw),
        ]
    if figure == "fig7":
        return [SweepJob("fig7ab_J1", H2, [1.0], _line(scale), sizes),
                SweepJob("fig7cd_V1", H2, _line(scale), [1.0], sizes)]
    return [SweepJob("fig8_phase_diagram", H2, Jpd, Vpd, sizes, ("EE", "g"))]
