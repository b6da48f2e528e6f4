"""Spectra, inverse participation ratios and phase labels."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .lattice_model import ModelSpec, Variant, build_hamiltonian

__all__ = [
    "SpectralReport",
    "ConjecturedCurve",
    "PTLabel",
    "LocLabel",
    "PhaseLabel",
    "EigensolverError",
    "eig_right",
    "spectral_summary",
    "spectral_report",
    "conjectured_spectrum",
    "classify_phase",
    "classify_from_diagnostics",
    "distance_to_curve",
    "hausdorff_distance",
    "write_spectrum_csv",
    "write_summary_json",
    "PT_THRESHOLD",
]

PT_THRESHOLD = 1e-6


class EigensolverError(RuntimeError):
    pass


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    mean_abs_im: float = float("nan")
    mean_ipr: float = float("nan")
    max_abs_im: float = float("nan")
    spec: ModelSpec | None = None

    @property
    def L(self) -> int:
        return len(self.eigenvalues)

    @property
    def ipr(self) -> np.ndarray:
        """IPR of every eigenvector, ``sum_n |psi_n|^4``."""
        return np.sum(np.abs(self.right_eigenvectors) ** 4, axis=0)


def eig_right(H: np.ndarray, spec: ModelSpec | None = None) -> SpectralReport:
    """Right eigenpairs of a general complex matrix.

    Eigenvectors are normalized to unit Euclidean norm; pairs are sorted by
    real part, then imaginary part.
    """
    H = np.asarray(H, dtype=complex)
    if not np.all(np.isfinite(H)):
        raise ValueError("Hamiltonian has non-finite entries")
    try:
        w, vr = scipy.linalg.eig(H, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigensolverError(f"eigensolver did not converge for {spec}: {exc}") from exc
    vr = vr / np.linalg.norm(vr, axis=0)
    order = np.lexsort((w.imag, w.real))
    return SpectralReport(eigenvalues=w[order], right_eigenvectors=vr[:, order], spec=spec)


def spectral_summary(report: SpectralReport) -> tuple[float, float, float]:
    """``(<|Im E|>, <IPR>, max |Im E|)``; also stored on ``report``."""
    im = np.abs(report.eigenvalues.imag)
    mean_abs_im = float(np.mean(im))
    max_abs_im = float(np.max(im))
    mean_ipr = float(np.mean(report.ipr))
    report.mean_abs_im, report.mean_ipr, report.max_abs_im = mean_abs_im, mean_ipr, max_abs_im
    return mean_abs_im, mean_ipr, max_abs_im


def spectral_report(spec: ModelSpec) -> SpectralReport:
    report = eig_right(build_hamiltonian(spec), spec=spec)
    spectral_summary(report)
    return report


@dataclass
class ConjecturedCurve:
    k_grid: np.ndarray
    energies: np.ndarray


def conjectured_spectrum(spec: ModelSpec, k_count: int) -> ConjecturedCurve:
    """Closed-form PBC spectrum ``E(k)`` on ``k_count`` uniform points of [-pi, pi)."""
    if k_count < 1:
        raise ValueError("k_count must be >= 1")
    k = -np.pi + 2.0 * np.pi * np.arange(k_count) / k_count
    J, V = spec.J, spec.V
    if spec.variant is Variant.NHAAH1:
        if abs(V) <= abs(J):
            E = 2.0 * J * np.cos(k) + 0j
        else:
            E = (V + J**2 / V) * np.cos(k) + 1j * (V - J**2 / V) * np.sin(k)
    else:
        if abs(V) < abs(J):
            E = (J + V**2 / J) * np.cos(k) + 1j * (J - V**2 / J) * np.sin(k)
        else:
            E = 2.0 * V * np.cos(k) + 0j
    return ConjecturedCurve(k_grid=k, energies=E)


class PTLabel(str, enum.Enum):
    PT_invariant = "PT_invariant"
    PT_broken = "PT_broken"
    critical = "critical"


class LocLabel(str, enum.Enum):
    extended = "extended"
    localized = "localized"
    critical = "critical"


@dataclass(frozen=True)
class PhaseLabel:
    pt: PTLabel
    localization: LocLabel

    def __str__(self) -> str:
        return f"{self.pt.value}/{self.localization.value}"


def classify_phase(spec: ModelSpec, tolerance: float = 1e-9) -> PhaseLabel:
    """Analytic phase from the ``|V|`` versus ``|J|`` case split."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    aJ, aV = abs(spec.J), abs(spec.V)
    if abs(aV - aJ) <= tolerance:
        return PhaseLabel(PTLabel.critical, LocLabel.critical)
    weak = aV < aJ
    if spec.variant is Variant.NHAAH1:
        pt = PTLabel.PT_invariant if weak else PTLabel.PT_broken
    else:
        pt = PTLabel.PT_broken if weak else PTLabel.PT_invariant
    return PhaseLabel(pt, LocLabel.extended if weak else LocLabel.localized)


def classify_from_diagnostics(report: SpectralReport, pt_threshold: float = PT_THRESHOLD,
                              ipr_factor: float = 10.0) -> PhaseLabel:
    """Phase read off the data: ``<|Im E|> > 1e-6`` is PT-broken, ``<IPR> > 10/L`` localized."""
    if np.isnan(report.mean_abs_im):
        spectral_summary(report)
    pt = PTLabel.PT_broken if report.mean_abs_im > pt_threshold else PTLabel.PT_invariant
    loc = LocLabel.localized if report.mean_ipr > ipr_factor / report.L else LocLabel.extended
    return PhaseLabel(pt, loc)


def _segment_distance(z: np.ndarray, a: complex, b: complex) -> np.ndarray:
    d = b - a
    s = np.clip(((z - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(z - (a + s * d))


def distance_to_curve(points: np.ndarray, curve: np.ndarray) -> np.ndarray:
    """Distance of each point to the closed polyline through ``curve``."""
    points = np.asarray(points, dtype=complex)
    curve = np.asarray(curve, dtype=complex)
    if curve.size == 1:
        return np.abs(points - curve[0])
    best = np.full(points.shape, np.inf)
    for a, b in zip(curve, np.roll(curve, -1)):
        if a == b:
            dist = np.abs(points - a)
        else:
            dist = _segment_distance(points, a, b)
        np.minimum(best, dist, out=best)
    return best


def hausdorff_distance(points: np.ndarray, curve: np.ndarray) -> float:
    """Symmetric Hausdorff distance between a point set and a sampled closed curve."""
    points = np.asarray(points, dtype=complex)
    curve = np.asarray(curve, dtype=complex)
    forward = distance_to_curve(points, curve).max()
    backward = np.abs(curve[:, None] - points[None, :]).min(axis=1).max()
    return float(max(forward, backward))


def write_spectrum_csv(report: SpectralReport, path) -> None:
    path = Path(path)
    ipr = report.ipr
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "ReE", "ImE", "IPR_j"])
        for j, (E, p) in enumerate(zip(report.eigenvalues, ipr)):
            writer.writerow([j, repr(float(E.real)), repr(float(E.imag)), repr(float(p))])


def write_summary_json(report: SpectralReport, path, tolerance: float = 1e-9) -> dict:
    if np.isnan(report.mean_abs_im):
        spectral_summary(report)
    summary = {
        "mean_abs_im": report.mean_abs_im,
        "mean_ipr": report.mean_ipr,
        "max_abs_im": report.max_abs_im,
        "phase": str(classify_phase(report.spec, tolerance)) if report.spec is not None else None,
        "phase_from_data": str(classify_from_diagnostics(report)),
    }
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
