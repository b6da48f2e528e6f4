"""Least-squares scaling fits of steady-state entanglement entropy.

System-size forms (``x = L``)::

    linear    S = g L + s0
    log       S = g ln L + s0
    combined  S = g ln L + g' L + s0

Subsystem-size forms (``u = sin(pi l / L)``)::

    profile_ABC             S = A u + B ln u + C
    profile_central_charge  S = (c / 6) ln u + S0
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ScalingFit",
    "FitError",
    "SIZE_MODES",
    "PROFILE_MODES",
    "fit_scaling",
    "fit_profile",
    "trim_profile",
]

SIZE_MODES = ("linear", "log", "combined")
PROFILE_MODES = ("profile_ABC", "profile_central_charge")

_NAMES = {
    "linear": ("g", "s0"),
    "log": ("g", "s0"),
    "combined": ("g", "g_prime", "s0"),
    "profile_ABC": ("A", "B", "C"),
    "profile_central_charge": ("c", "S0"),
}
_MIN_POINTS = {"linear": 3, "log": 3, "combined": 4, "profile_ABC": 5, "profile_central_charge": 5}


class FitError(ValueError):
    pass


@dataclass
class ScalingFit:
    mode: str
    coefficients: tuple[float, ...]
    residual_rms: float
    data: list[tuple[float, float]]

    @property
    def names(self) -> tuple[str, ...]:
        return _NAMES[self.mode]

    def __getitem__(self, name: str) -> float:
        return self.coefficients[self.names.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.coefficients))

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "coefficients": self.as_dict(),
            "residual_rms": self.residual_rms,
            "n_points": len(self.data),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")


def _lstsq(design: np.ndarray, y: np.ndarray, mode: str) -> tuple[np.ndarray, float]:
    # column scaling keeps L and ln L on comparable footing
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(design / scale, y, rcond=None)
    if rank < design.shape[1]:
        raise FitError(f"{mode} fit is singular (rank {rank} < {design.shape[1]}); are the x values distinct?")
    coef = coef / scale
    resid = y - design @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def _check_points(points, mode: str) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("points must be a sequence of (x, S) pairs")
    if len(arr) < _MIN_POINTS[mode]:
        raise FitError(f"{mode} fit needs at least {_MIN_POINTS[mode]} points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise FitError("points contain non-finite values")
    return arr[:, 0], arr[:, 1]


def fit_scaling(points: Sequence[tuple[float, float]], mode: str = "linear") -> ScalingFit:
    """Fit ``S`` against system size ``L`` in one of :data:`SIZE_MODES`."""
    if mode not in SIZE_MODES:
        raise FitError(f"unknown size-scaling mode {mode!r}; choose from {SIZE_MODES}")
    L, S = _check_points(points, mode)
    if len(np.unique(L)) != len(L):
        raise FitError("system sizes must be distinct")
    if mode != "linear" and np.any(L <= 0):
        raise FitError("logarithmic fits need positive sizes")
    one = np.ones_like(L)
    if mode == "linear":
        design = np.column_stack([L, one])
    elif mode == "log":
        design = np.column_stack([np.log(L), one])
    else:
        design = np.column_stack([np.log(L), L, one])
    coef, rms = _lstsq(design, S, mode)
    return ScalingFit(mode, tuple(float(c) for c in coef), rms, [(float(a), float(b)) for a, b in zip(L, S)])


def trim_profile(points: Sequence[tuple[float, float]], L: int, margin: int = 5) -> list[tuple[float, float]]:
    """Drop cuts with ``l < margin`` or ``l > L - margin``."""
    return [(l, s) for l, s in points if margin <= l <= L - margin]


def fit_profile(points: Sequence[tuple[float, float]], L: int, mode: str = "profile_central_charge") -> ScalingFit:
    """Fit ``S(L, l)`` against ``ln sin(pi l / L)`` (and ``sin(pi l / L)``).

    In ``profile_central_charge`` mode the first coefficient is the central
    charge ``c = 6 * slope``.
    """
    if mode not in PROFILE_MODES:
        raise FitError(f"unknown profile mode {mode!r}; choose from {PROFILE_MODES}")
    l, S = _check_points(points, mode)
    if np.any(l <= 0) or np.any(l >= L):
        raise FitError(f"cuts must satisfy 0 < l < L = {L}")
    u = np.sin(np.pi * l / L)
    one = np.ones_like(u)
    if mode == "profile_ABC":
        coef, rms = _lstsq(np.column_stack([u, np.log(u), one]), S, mode)
    else:
        if np.ptp(u) == 0:
            raise FitError("need at least two distinct values of sin(pi l / L)")
        coef, rms = _lstsq(np.column_stack([np.log(u), one]), S, mode)
        coef = np.array([6.0 * coef[0], coef[1]])
    return ScalingFit(mode, tuple(float(c) for c in coef), rms, [(float(a), float(b)) for a, b in zip(l, S)])
