"""Resumable (J, V) parameter sweeps producing phase-diagram records.

One work unit is a single ``(variant, J, V, L)`` point.  Units are independent
and may run in a process pool; finished units are appended to a JSON-lines
checkpoint log by the parent process only, and the final records are
assembled in sorted order so the output never depends on completion order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from threadpoolctl import threadpool_limits

from .entanglement import steady_state_bipartite
from .gaussian_dynamics import RenormPolicy
from .lattice_model import ModelSpec, Variant, build_hamiltonian, momentum_dual_hamiltonian
from .scaling_fit import FitError, fit_scaling
from .spectral import eig_right, spectral_summary

__all__ = [
    "OBSERVABLES",
    "CSV_COLUMNS",
    "SweepConfig",
    "SweepRecord",
    "compute_point",
    "run_sweep",
    "write_records",
    "read_records_csv",
    "primary_fit_mode",
    "duality_check",
    "grid",
]

log = logging.getLogger(__name__)

OBSERVABLES = ("ImE", "IPR", "EE", "g")
CSV_COLUMNS = ("variant", "J", "V", "L", "mean_abs_im", "mean_ipr", "ee_steady", "g", "g_prime", "fit_mode", "residual")
NAN = float("nan")


def grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive uniform grid, rounded to 10 decimals so values are reproducible."""
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


@dataclass
class SweepConfig:
    variant: Variant
    J_grid: list[float]
    V_grid: list[float]
    L_list: list[int]
    T: float = 1000.0
    observables: tuple[str, ...] = OBSERVABLES
    output: str | None = None
    checkpoint_interval: int = 1
    window_fraction: float = 0.5
    jobs: int = 1
    blas_threads: int | None = 1
    policy: RenormPolicy = field(default_factory=RenormPolicy)

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.J_grid = [float(x) for x in self.J_grid]
        self.V_grid = [float(x) for x in self.V_grid]
        self.L_list = [int(x) for x in self.L_list]
        if not self.J_grid or not self.V_grid or not self.L_list:
            raise ValueError("J_grid, V_grid and L_list must be nonempty")
        if self.L_list != sorted(set(self.L_list)):
            raise ValueError("L_list must be strictly ascending")
        bad = set(self.observables) - set(OBSERVABLES)
        if bad:
            raise ValueError(f"unknown observables {sorted(bad)}; choose from {OBSERVABLES}")
        self.observables = tuple(o for o in OBSERVABLES if o in self.observables)
        if "g" in self.observables and "EE" not in self.observables:
            self.observables = tuple(o for o in OBSERVABLES if o in self.observables or o == "EE")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint_interval must be >= 1")
        if isinstance(self.policy, dict):
            self.policy = RenormPolicy(**self.policy)
        for L in self.L_list:
            ModelSpec.create(self.variant, 0.0, 0.0, L)  # validates Fibonacci sizes

    def units(self) -> list[tuple[float, float, int]]:
        return [(J, V, L) for J in sorted(set(self.J_grid)) for V in sorted(set(self.V_grid)) for L in self.L_list]

    def physics_dict(self) -> dict:
        """Everything that determines the numbers (not where they are written)."""
        return {
            "variant": self.variant.value,
            "J_grid": sorted(set(self.J_grid)),
            "V_grid": sorted(set(self.V_grid)),
            "L_list": self.L_list,
            "T": self.T,
            "observables": list(self.observables),
            "window_fraction": self.window_fraction,
            "policy": asdict(self.policy),
        }

    def to_dict(self) -> dict:
        d = self.physics_dict()
        d.update(output=self.output, checkpoint_interval=self.checkpoint_interval,
                 jobs=self.jobs, blas_threads=self.blas_threads)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        if "policy" in data and isinstance(data["policy"], dict):
            data["policy"] = RenormPolicy(**data["policy"])
        data["observables"] = tuple(data.get("observables", OBSERVABLES))
        return cls(**data)

    def fingerprint(self) -> str:
        text = json.dumps(self.physics_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class SweepRecord:
    variant: str
    J: float
    V: float
    L: int
    mean_abs_im: float = NAN
    mean_ipr: float = NAN
    ee_steady: float = NAN
    g: float = NAN
    g_prime: float = NAN
    fit_mode: str = "none"
    residual: float = NAN
    error: str | None = None

    def sort_key(self):
        return (self.J, self.V, self.L)

    def csv_row(self) -> list[str]:
        return [self.variant, _fmt(self.J), _fmt(self.V), str(self.L), _fmt(self.mean_abs_im),
                _fmt(self.mean_ipr), _fmt(self.ee_steady), _fmt(self.g), _fmt(self.g_prime),
                self.fit_mode, _fmt(self.residual)]

    def json_dict(self) -> dict:
        d = {k: _json_num(getattr(self, k)) for k in CSV_COLUMNS}
        if self.error:
            d["error"] = self.error
        return d


def _fmt(x: float) -> str:
    return repr(float(x))


def _json_num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _key(J: float, V: float, L: int) -> str:
    return f"{float(J)!r}|{float(V)!r}|{int(L)}"


def compute_point(variant, J: float, V: float, L: int, T: float = 1000.0,
                  observables: Sequence[str] = OBSERVABLES, window_fraction: float = 0.5,
                  policy: RenormPolicy | None = None, blas_threads: int | None = 1) -> dict:
    """Diagnostics for one grid point; failures are returned, not raised."""
    out = {"J": float(J), "V": float(V), "L": int(L),
           "mean_abs_im": NAN, "mean_ipr": NAN, "max_abs_im": NAN, "ee_steady": NAN, "error": None}
    try:
        with threadpool_limits(limits=blas_threads):
            spec = ModelSpec.create(variant, J, V, L)
            if "ImE" in observables or "IPR" in observables:
                report = eig_right(build_hamiltonian(spec), spec)
                mi, mp, mx = spectral_summary(report)
                if "ImE" in observables:
                    out["mean_abs_im"], out["max_abs_im"] = mi, mx
                if "IPR" in observables:
                    out["mean_ipr"] = mp
            if "EE" in observables:
                steady = steady_state_bipartite(spec, T=T, window_start_fraction=window_fraction, policy=policy)
                out["ee_steady"] = steady.value
    except Exception as exc:  # recorded as an error row; the sweep continues
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def primary_fit_mode(variant, J: float, V: float) -> str:
    """Linear everywhere for NHAAH1; for NHAAH2 log when ``|V| < |J|``, else linear."""
    if Variant.parse(variant) is Variant.NHAAH2 and abs(V) < abs(J):
        return "log"
    return "linear"


def _fit_group(records: list[SweepRecord], variant: Variant) -> None:
    J, V = records[0].J, records[0].V
    mode = primary_fit_mode(variant, J, V)
    pts = [(r.L, r.ee_steady) for r in records if r.error is None and math.isfinite(r.ee_steady)]
    g = g_prime = residual = NAN
    fit_mode = mode
    try:
        fit = fit_scaling(pts, mode)
        g, residual = fit["g"], fit.residual_rms
    except FitError:
        fit_mode = "none"
    if len(pts) >= 4:
        try:
            g_prime = fit_scaling(pts, "combined")["g_prime"]
        except FitError:
            pass
    for r in records:
        r.g, r.g_prime, r.fit_mode, r.residual = g, g_prime, fit_mode, residual


def _assemble(config: SweepConfig, results: dict[str, dict]) -> list[SweepRecord]:
    records = []
    for J, V, L in config.units():
        res = results[_key(J, V, L)]
        records.append(SweepRecord(
            variant=config.variant.value, J=J, V=V, L=L,
            mean_abs_im=res["mean_abs_im"], mean_ipr=res["mean_ipr"], ee_steady=res["ee_steady"],
            fit_mode="error" if res.get("error") else "none", error=res.get("error"),
        ))
    if "g" in config.observables:
        groups: dict[tuple[float, float], list[SweepRecord]] = {}
        for r in records:
            groups.setdefault((r.J, r.V), []).append(r)
        for group in groups.values():
            _fit_group(group, config.variant)
            for r in group:
                if r.error:
                    r.fit_mode = "error"
    records.sort(key=SweepRecord.sort_key)
    return records


class _Checkpoint:
    """Append-only result log plus an index of completed keys."""

    def __init__(self, base: str, fingerprint: str, interval: int):
        self.log_path = Path(base + ".ckpt.jsonl")
        self.index_path = Path(base + ".ckpt.index")
        self.fingerprint = fingerprint
        self.interval = interval
        self._pending = 0
        self._log = None
        self._index = None

    def load(self) -> dict[str, dict]:
        done: dict[str, dict] = {}
        if not self.log_path.exists():
            return done
        with self.log_path.open() as fh:
            lines = fh.read().splitlines()
        if not lines:
            return done
        header = json.loads(lines[0])
        if header.get("fingerprint") != self.fingerprint:
            raise ValueError(f"checkpoint {self.log_path} belongs to a different sweep configuration; "
                             "delete it or choose another output path")
        for line in lines[1:]:
            try:
                item = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line after a crash
            done[item["key"]] = item["result"]
        return done

    def open(self):
        fresh = not self.log_path.exists() or self.log_path.stat().st_size == 0
        self._log = self.log_path.open("a")
        self._index = self.index_path.open("a")
        if fresh:
            self._log.write(json.dumps({"fingerprint": self.fingerprint}) + "\n")
            self._log.flush()

    def append(self, key: str, result: dict) -> None:
        self._log.write(json.dumps({"key": key, "result": result}) + "\n")
        self._index.write(key + "\n")
        self._pending += 1
        if self._pending >= self.interval:
            self.flush()

    def flush(self) -> None:
        for fh in (self._log, self._index):
            fh.flush()
            os.fsync(fh.fileno())
        self._pending = 0

    def close(self) -> None:
        if self._log is not None:
            self.flush()
            self._log.close()
            self._index.close()


def _decode(result: dict) -> dict:
    return {k: (NAN if v is None else v) if k != "error" else v for k, v in result.items()}


def _encode(result: dict) -> dict:
    return {k: _json_num(v) for k, v in result.items()}


def run_sweep(config: SweepConfig, checkpoint: str | None = None, resume: bool = True,
              max_units: int | None = None) -> list[SweepRecord]:
    """Run every grid point and return records sorted by ``(J, V, L)``.

    ``checkpoint`` is a path prefix (defaults to ``config.output``); with
    ``resume`` completed points are read back instead of recomputed.
    ``max_units`` stops after that many new points (used to emulate an
    interrupted run) and returns ``[]``.
    """
    base = checkpoint if checkpoint is not None else config.output
    ckpt = _Checkpoint(str(base), config.fingerprint(), config.checkpoint_interval) if base else None
    results: dict[str, dict] = {}
    if ckpt is not None:
        if not resume:
            for p in (ckpt.log_path, ckpt.index_path):
                p.unlink(missing_ok=True)
        results = {k: _decode(v) for k, v in ckpt.load().items()}
        ckpt.open()
    todo = [u for u in config.units() if _key(*u) not in results]
    if max_units is not None:
        todo = todo[:max_units]
    # largest systems first so a pool finishes evenly
    todo.sort(key=lambda u: (-u[2], u[0], u[1]))
    log.info("sweep %s: %d points total, %d to compute", config.variant.value, len(config.units()), len(todo))

    def task(u):
        return compute_point(config.variant, u[0], u[1], u[2], config.T, config.observables,
                             config.window_fraction, config.policy, config.blas_threads)

    try:
        if config.jobs == 1 or len(todo) <= 1:
            stream = (task(u) for u in todo)
        else:
            from joblib import Parallel, delayed

            stream = Parallel(n_jobs=config.jobs, return_as="generator_unordered")(
                delayed(compute_point)(config.variant, u[0], u[1], u[2], config.T, config.observables,
                                       config.window_fraction, config.policy, config.blas_threads)
                for u in todo
            )
        for res in stream:
            key = _key(res["J"], res["V"], res["L"])
            if res.get("error"):
                log.warning("point %s failed: %s", key, res["error"])
            results[key] = res
            if ckpt is not None:
                ckpt.append(key, _encode(res))
    finally:
        if ckpt is not None:
            ckpt.close()
    if max_units is not None and len(results) < len(config.units()):
        return []
    return _assemble(config, results)


def write_records(records: Iterable[SweepRecord], path, fmt: str = "csv") -> Path:
    """Write records as CSV (fixed header) or JSON; output is byte-deterministic."""
    path = Path(path)
    records = list(records)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for r in records:
                    writer.writerow(r.csv_row())
        elif fmt == "json":
            path.write_text(json.dumps([r.json_dict() for r in records], indent=1, sort_keys=False) + "\n")
        else:
            raise ValueError(f"unknown record format {fmt!r}; use csv or json")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc.strerror or exc}") from exc
    return path


def read_records_csv(path) -> list[SweepRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(SweepRecord(
                variant=row["variant"], J=float(row["J"]), V=float(row["V"]), L=int(row["L"]),
                mean_abs_im=float(row["mean_abs_im"]), mean_ipr=float(row["mean_ipr"]),
                ee_steady=float(row["ee_steady"]), g=float(row["g"]), g_prime=float(row["g_prime"]),
                fit_mode=row["fit_mode"], residual=float(row["residual"]),
            ))
    return out


def _multiset_distance(a: np.ndarray, b: np.ndarray) -> float:
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _mp_matrix(spec: ModelSpec, dual: bool):
    """Hamiltonian entries evaluated from the exact rational phase at the current mpmath precision."""
    import mpmath

    L, p, q = spec.L, spec.alpha.numerator, spec.alpha.denominator
    A = mpmath.zeros(L, L)
    for n in range(1, L + 1):
        phase = 2 * mpmath.pi * mpmath.mpf((p * n) % q) / q
        i = n - 1
        if dual:
            A[i, i] = spec.J * mpmath.expj(-phase)
            A[i, n % L] += spec.V
            A[n % L, i] += spec.V
        else:
            A[i, i] = 2 * spec.V * mpmath.cos(phase)
            A[n % L, i] += spec.J
    return A


def _mp_eigvals(A) -> np.ndarray:
    import mpmath

    return np.array([complex(e) for e in mpmath.eig(A, left=False, right=False)])


def duality_check(J: float, V: float, L: int, dps: int | None = None) -> dict:
    """Compare NHAAH2(J, V) with its momentum-space NHAAH1 dual (hopping V, potential J).

    Deep in the localized phase both matrices are strongly non-normal and
    double-precision eigenvalues carry errors of order ``eps * cond``.  With
    ``dps`` set, both matrices are built and diagonalized with mpmath at that
    many decimal digits instead.
    """
    spec2 = ModelSpec.create(Variant.NHAAH2, J, V, L)
    if dps is None:
        e2 = eig_right(build_hamiltonian(spec2), spec2).eigenvalues
        e1 = eig_right(momentum_dual_hamiltonian(spec2)).eigenvalues
    else:
        import mpmath

        with mpmath.workdps(dps):
            e2 = _mp_eigvals(_mp_matrix(spec2, dual=False))
            e1 = _mp_eigvals(_mp_matrix(spec2, dual=True))
    return {
        "J": float(J), "V": float(V), "L": int(L), "dps": dps,
        "eigenvalue_distance": _multiset_distance(e2, e1),
        "mean_abs_im_diff": float(abs(np.mean(np.abs(e2.imag)) - np.mean(np.abs(e1.imag)))),
        "max_abs_im_diff": float(abs(np.max(np.abs(e2.imag)) - np.max(np.abs(e1.imag)))),
    }
