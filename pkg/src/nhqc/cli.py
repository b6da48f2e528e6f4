"""Command-line interface.

Exit codes: 0 success, 2 bad arguments, 3 numerical-integrity failure,
4 I/O failure.  Every command writes ``<output>.manifest.json`` next to its
outputs; ``nhqc replay <manifest>`` reruns it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .entanglement import (
    NumericalIntegrityError,
    entropy_profile,
    entropy_series,
    steady_state_entropy,
    write_profile_csv,
    write_series_csv,
)
from .figures import FIGURES, SCALES, ProfileJob, SpectrumGridJob, SweepJob, recipe
from .gaussian_dynamics import (
    PropagatorOverflowError,
    RankCollapseError,
    RenormPolicy,
    cdw_orbitals,
    default_sample_times,
    iter_trajectory,
    write_density_csv,
)
from .lattice_model import ModelSpec, Variant, build_hamiltonian, fibonacci_approximant
from .scaling_fit import PROFILE_MODES, SIZE_MODES, FitError, fit_profile, fit_scaling, trim_profile
from .spectral import EigensolverError, spectral_report, write_spectrum_csv, write_summary_json
from .sweep import OBSERVABLES, SweepConfig, grid, run_sweep, write_records

log = logging.getLogger("nhqc")

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, choices=["1", "2", "NHAAH1", "NHAAH2"], help="model variant")
    p.add_argument("--J", type=float, required=True, help="hopping amplitude")
    p.add_argument("--V", type=float, required=True, help="potential amplitude")
    p.add_argument("--L", type=int, required=True, help="lattice length (Fibonacci unless alpha is given)")
    p.add_argument("--alpha-p", type=int, help="numerator of alpha (default: Fibonacci approximant)")
    p.add_argument("--alpha-q", type=int, help="denominator of alpha")
    p.add_argument("--alpha-irrational", type=float, help="use this real alpha instead of a fraction")


def _add_dynamics_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", type=float, default=1000.0, help="total evolution time (default 1000)")
    p.add_argument("--window", type=float, default=0.5, help="steady-state window starts at window*T")
    p.add_argument("--method", choices=["auto", "eigen", "step"], default="auto", help="propagation method")
    p.add_argument("--dt", type=float, default=1.0, help="step length of the stepping method")


def _spec_from_args(a) -> ModelSpec:
    if a.alpha_irrational is not None:
        alpha = a.alpha_irrational
    elif a.alpha_p is not None or a.alpha_q is not None:
        if a.alpha_p is None or a.alpha_q is None:
            raise UsageError("--alpha-p and --alpha-q must be given together")
        alpha = (a.alpha_p, a.alpha_q)
    else:
        try:
            alpha = fibonacci_approximant(a.L)
        except ValueError as exc:
            raise UsageError(f"{exc}; pick a Fibonacci L or pass --alpha-p/--alpha-q") from None
    try:
        return ModelSpec(Variant.parse(a.model), a.J, a.V, a.L, alpha)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _policy(a) -> RenormPolicy:
    try:
        return RenormPolicy(method=a.method, dt=a.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_window(a) -> None:
    if not 0 < a.window < 1:
        raise UsageError("--window must lie in (0, 1)")
    if a.T <= 0:
        raise UsageError("--T must be positive")


def _prepare_out(prefix: str) -> Path:
    path = Path(prefix)
    if path.parent and not path.parent.exists():
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {path.parent}: {exc.strerror}") from exc
    return path


def _write_manifest(prefix: Path, command: str, argv: list[str], config: dict, outputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = Path(str(prefix) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_grid(text: str) -> list[float]:
    """``start:stop:step`` or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            return grid(start, stop, step)
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use start:stop:step or a,b,c") from None


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


# --- commands ---------------------------------------------------------------

def cmd_spectrum(a, argv) -> int:
    spec = _spec_from_args(a)
    out = _prepare_out(a.out)
    report = spectral_report(spec)
    csv_path, json_path = Path(f"{out}.csv"), Path(f"{out}.json")
    write_spectrum_csv(report, csv_path)
    summary = write_summary_json(report, json_path)
    _write_manifest(out, "spectrum", argv, {"spec": spec.to_dict()}, [csv_path, json_path])
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_evolve(a, argv) -> int:
    spec = _spec_from_args(a)
    _check_window(a)
    policy = _policy(a)
    l = spec.L // 2 if a.l is None else a.l
    if not 1 <= l <= spec.L:
        raise UsageError(f"--l must lie in [1, {spec.L}]")
    out = _prepare_out(a.out)
    series = entropy_series(spec, T=a.T, l=l, policy=policy)
    steady = steady_state_entropy(series, a.window)
    csv_path, json_path = Path(f"{out}.csv"), Path(f"{out}.json")
    write_series_csv(series, csv_path)
    summary = {"spec": spec.to_dict(), "subsystem_size": l, "steady_state": steady.to_dict()}
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs = [csv_path, json_path]
    if a.density_dump:
        dump = Path(a.density_dump)
        states = iter_trajectory(cdw_orbitals(spec.L), build_hamiltonian(spec), default_sample_times(a.T), policy)
        write_density_csv(states, dump)
        outputs.append(dump)
    config = {"spec": spec.to_dict(), "T": a.T, "window": a.window, "l": l, "method": a.method, "dt": a.dt}
    _write_manifest(out, "evolve", argv, config, outputs)
    print(json.dumps(summary["steady_state"], sort_keys=True))
    return EXIT_OK


def _profile_outputs(spec: ModelSpec, T: float, window: float, cut_step: int, time_stride: int,
                     policy: RenormPolicy, out: Path) -> tuple[list[Path], dict]:
    cuts = range(1, spec.L, cut_step)
    prof = entropy_profile(spec, T=T, window_start_fraction=window, cuts=cuts, time_stride=time_stride, policy=policy)
    csv_path, json_path = Path(f"{out}.csv"), Path(f"{out}.json")
    write_profile_csv(prof, csv_path)
    pts = trim_profile(list(zip(prof.cuts.tolist(), prof.values.tolist())), spec.L)
    fits = {}
    for mode in PROFILE_MODES:
        try:
            fits[mode] = fit_profile(pts, spec.L, mode).to_json_dict()
        except FitError as exc:
            fits[mode] = {"error": str(exc)}
    summary = {"spec": spec.to_dict(), "window": list(prof.window), "sample_count": prof.sample_count,
               "half_cut": prof.half_cut.to_dict(), "fits": fits}
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return [csv_path, json_path], summary


def cmd_profile(a, argv) -> int:
    spec = _spec_from_args(a)
    _check_window(a)
    if a.cut_step < 1 or a.time_stride < 1:
        raise UsageError("--cut-step and --time-stride must be >= 1")
    out = _prepare_out(a.out)
    outputs, summary = _profile_outputs(spec, a.T, a.window, a.cut_step, a.time_stride, _policy(a), out)
    config = {"spec": spec.to_dict(), "T": a.T, "window": a.window, "cut_step": a.cut_step,
              "time_stride": a.time_stride, "method": a.method, "dt": a.dt}
    _write_manifest(out, "profile", argv, config, outputs)
    print(json.dumps(summary["fits"], sort_keys=True))
    return EXIT_OK


def _run_sweep_to(config: SweepConfig, out: Path, fmt: str, resume: bool) -> list[Path]:
    records = run_sweep(config, checkpoint=str(out), resume=resume)
    paths = []
    fmts = ["csv", "json"] if fmt == "both" else [fmt]
    for f in fmts:
        paths.append(write_records(records, Path(f"{out}.{f}"), f))
    return paths


def cmd_sweep(a, argv) -> int:
    if a.config:
        try:
            data = json.loads(Path(a.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {a.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {a.config} is not valid JSON: {exc}") from None
        data.setdefault("jobs", a.jobs)
        try:
            config = SweepConfig.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid sweep config: {exc}") from None
    else:
        if a.model is None or a.J_grid is None or a.V_grid is None or a.L_list is None:
            raise UsageError("sweep needs --model, --J-grid, --V-grid and --L-list (or --config)")
        _check_window(a)
        try:
            config = SweepConfig(
                variant=Variant.parse(a.model), J_grid=a.J_grid, V_grid=a.V_grid, L_list=a.L_list, T=a.T,
                observables=tuple(a.observables.split(",")), window_fraction=a.window, jobs=a.jobs,
                checkpoint_interval=a.checkpoint_interval, policy=_policy(a),
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    out = _prepare_out(a.out)
    config.output = str(out)
    paths = _run_sweep_to(config, out, a.format, not a.no_resume)
    _write_manifest(out, "sweep", argv, config.to_dict(), paths)
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def _read_xy(path: str) -> list[tuple[float, float]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    pts = []
    for row in rows:
        if len(row) < 2:
            continue
        try:
            pts.append((float(row[0]), float(row[1])))
        except ValueError:
            continue  # header
    if not pts:
        raise UsageError(f"{path} holds no numeric (x, S) rows")
    return pts


def cmd_fit(a, argv) -> int:
    pts = _read_xy(a.input)
    try:
        if a.mode in SIZE_MODES:
            fit = fit_scaling(pts, a.mode)
        else:
            if a.L is None:
                raise UsageError("profile fits need --L")
            if a.trim:
                pts = trim_profile(pts, a.L, a.trim)
            fit = fit_profile(pts, a.L, a.mode)
    except FitError as exc:
        raise UsageError(str(exc)) from None
    for name, value in fit.as_dict().items():
        print(f"{name} = {value:.6g}")
    print(f"residual_rms = {fit.residual_rms:.3g}")
    if a.out:
        out = _prepare_out(a.out)
        json_path = Path(f"{out}.json")
        fit.write_json(json_path)
        _write_manifest(out, "fit", argv, {"mode": a.mode, "input": a.input, "L": a.L}, [json_path])
    return EXIT_OK


def cmd_reproduce(a, argv) -> int:
    try:
        jobs = recipe(a.figure, a.scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = _prepare_out(str(Path(a.out_dir) / "x")).parent
    policy = _policy(a)
    written = []
    for job in jobs:
        prefix = out_dir / job.name
        if isinstance(job, (SweepJob, SpectrumGridJob)):
            sizes = job.L_list if isinstance(job, SweepJob) else [job.L]
            config = SweepConfig(variant=job.variant, J_grid=job.J_grid, V_grid=job.V_grid, L_list=sizes,
                                 T=a.T, observables=job.observables, output=str(prefix), jobs=a.jobs,
                                 policy=policy, window_fraction=a.window)
            log.info("%s: %d points", job.name, len(config.units()))
            written += _run_sweep_to(config, prefix, "csv", True)
        elif isinstance(job, ProfileJob):
            spec = ModelSpec.create(job.variant, job.J, job.V, job.L)
            paths, _ = _profile_outputs(spec, a.T, a.window, job.cut_step, job.time_stride, policy, prefix)
            written += paths
    _write_manifest(out_dir / a.figure, "reproduce", argv,
                    {"figure": a.figure, "scale": a.scale, "T": a.T, "window": a.window}, written)
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def cmd_replay(a, argv) -> int:
    try:
        manifest = json.loads(Path(a.manifest).read_text())
    except OSError as exc:
        raise OSError(f"cannot read manifest {a.manifest}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{a.manifest} is not a valid manifest: {exc}") from None
    if "argv" not in manifest:
        raise UsageError(f"{a.manifest} has no recorded argv")
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nhqc", description="Entanglement transitions in non-Hermitian AAH quasicrystals")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="eigenvalues, IPRs and phase summary")
    _add_model_args(p)
    p.add_argument("--out", default="spectrum", help="output prefix (writes .csv, .json, .manifest.json)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("evolve", help="entanglement entropy time series from the CDW state")
    _add_model_args(p)
    _add_dynamics_args(p)
    p.add_argument("--l", type=int, help="subsystem size (default L // 2)")
    p.add_argument("--density-dump", help="also write (t, site, occupation) rows to this CSV")
    p.add_argument("--out", default="evolve", help="output prefix")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("profile", help="steady-state S(L, l) for all cuts, with profile fits")
    _add_model_args(p)
    _add_dynamics_args(p)
    p.add_argument("--cut-step", type=int, default=1, help="evaluate every k-th cut size")
    p.add_argument("--time-stride", type=int, default=1, help="use every k-th window sample for the profile")
    p.add_argument("--out", default="profile", help="output prefix")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("sweep", help="phase-diagram records over (J, V) grids")
    p.add_argument("--model", choices=["1", "2", "NHAAH1", "NHAAH2"])
    p.add_argument("--J-grid", type=_parse_grid, help="start:stop:step or comma list")
    p.add_argument("--V-grid", type=_parse_grid, help="start:stop:step or comma list")
    p.add_argument("--L-list", type=_parse_ints, help="comma-separated Fibonacci sizes, ascending")
    _add_dynamics_args(p)
    p.add_argument("--observables", default=",".join(OBSERVABLES), help="subset of ImE,IPR,EE,g")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--checkpoint-interval", type=int, default=1, help="fsync the checkpoint every k points")
    p.add_argument("--config", help="JSON SweepConfig file (overrides grid flags)")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")
    p.add_argument("--no-resume", action="store_true", help="ignore an existing checkpoint")
    p.add_argument("--out", default="sweep", help="output prefix")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="scaling fit of an (x, S) CSV")
    p.add_argument("--mode", choices=list(SIZE_MODES + PROFILE_MODES), required=True)
    p.add_argument("--input", required=True, help="CSV whose first two columns are x and S")
    p.add_argument("--L", type=int, help="lattice length for profile fits")
    p.add_argument("--trim", type=int, default=0, help="drop cuts l < k and l > L - k (profile modes)")
    p.add_argument("--out", help="optional output prefix for a JSON result")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reproduce", help="regenerate the data of one figure")
    p.add_argument("figure", choices=list(FIGURES))
    p.add_argument("--scale", choices=list(SCALES), default="small")
    p.add_argument("--out-dir", default="figures")
    p.add_argument("--jobs", type=int, default=1)
    _add_dynamics_args(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return a.func(a, argv)
    except UsageError as exc:
        print(f"nhqc {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (NumericalIntegrityError, RankCollapseError, EigensolverError, PropagatorOverflowError,
            np.linalg.LinAlgError) as exc:
        print(f"nhqc {a.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"nhqc {a.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"nhqc {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
