"""Command-line front end: ``bbmeld <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure,
4 I/O failure.  Failures print one JSON object to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend
from .baselines import conventional_correct, linear_interp
from .deadreckoning import EPS_OZ, GRAVITY_NED, MAG_NED, dra_reconstruct, read_tag_csv
from .engine.meld import MeldConfig, meld
from .errors import NumericalError, ValidationError
from .geo import GeoPoint, project_pointwise, unproject_arrays
from .simulation import make_bench_instance, simulate_trip
from .timeline import BiasBasis, GpsSeries, Track1D, credible_band, read_series_csv, write_csv
from .validation import cross_validate, order_sweep

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
MODEL_KEYS = ("q_order", "sigma2_g", "delta_z", "delta_pi", "grid_cap", "dense_oracle_max_t",
              "sigma2_H", "sigma2_D", "detail_beta")

EPILOG = """\
environment:
  MELD_THREADS      default worker count for cross-validation folds (overridden by --threads)
  BBMELD_PURE_PYTHON=1  use the numpy kernels even when the compiled ones are built

exit codes: 0 ok, 2 invalid input/config, 3 numerical failure, 4 I/O error
"""


# --- helpers -------------------------------------------------------------------------


def _pair(text: str):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


def _floats(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _q_range(text: str):
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 0..6 or a list like 0,2,3, got {text!r}") from None


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("MELD_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"MELD_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ValidationError(f"threads must be >= 1, got {n}")
    return n


def _model_config(args) -> MeldConfig:
    m = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                m = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(m, dict):
            raise ValidationError(f"{args.config}: expected a JSON object")
        unknown = set(m) - set(MODEL_KEYS)
        if unknown:
            raise ValidationError(f"{args.config}: unknown keys {sorted(unknown)}")
    for key in MODEL_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            m[key] = v
    if ("sigma2_H" in m) != ("sigma2_D" in m):
        raise ValidationError("fix both sigma2_H and sigma2_D or neither")
    return MeldConfig.from_mapping(m)


def _coords(cols: dict) -> list:
    names = [c for c in cols if c != "t_index"]
    if not 1 <= len(names) <= 2:
        raise ValidationError(f"expected one or two coordinate columns, got {names}")
    return names


def _load_pair(dr_path, gps_path, sigma2_g):
    """Matching coordinate columns of the DR and GPS files as ``[(name, Track1D, GpsSeries)]``."""
    dr = read_series_csv(dr_path)
    gps = read_series_csv(gps_path)
    names = _coords(dr)
    if _coords(gps) != names:
        raise ValidationError(f"DR columns {names} and GPS columns {_coords(gps)} differ")
    t = dr["t_index"]
    if t.size < 3 or np.any(t != np.arange(1, t.size + 1)):
        raise ValidationError(f"{dr_path}: t_index must run 1..T without gaps")
    out = []
    for n in names:
        x = Track1D.from_values(dr[n])
        y = GpsSeries(gps["t_index"], gps[n], sigma2_g)
        out.append((n, x, y))
    return out


def _stem(name: str) -> str:
    return name[:-3] if name.endswith("_km") else name


def _out_dir(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_table(path: Path, columns: dict, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        _dump_json(path, {k: np.asarray(v).tolist() for k, v in columns.items()})
    else:
        write_csv(path, columns)
    return path


# --- subcommands -------------------------------------------------------------------------


def cmd_meld(args) -> int:
    config = _model_config(args)
    out = _out_dir(args)
    data = _load_pair(args.dr, args.gps, config.sigma2_g)
    report = {"command": "meld", "backend": _backend.BACKEND, "coordinates": {}}
    timings = {}
    means = {}
    for name, x, y in data:
        t0 = time.perf_counter()
        track = meld(x, y, BiasBasis(config.q_order), config)
        timings[name] = time.perf_counter() - t0
        lo, hi = credible_band(track, 0.95)
        suffix = "" if len(data) == 1 else f"_{_stem(name)}"
        _write_table(out / f"track_posterior{suffix}.csv",
                     {"t_index": np.arange(1, x.T + 1), "mean_km": track.mean, "sd_km": track.sd,
                      "lower95": lo, "upper95": hi}, args.format)
        means[name] = track.mean
        report["coordinates"][name] = {
            "T": x.T,
            "K": y.K,
            "q_order": config.q_order,
            "sigma2_H_hat": track.phi_hat.sigma2_H,
            "sigma2_D_hat": track.phi_hat.sigma2_D,
            "grid_size": track.grid_size,
            "grid_steps": track.extras["grid_steps"],
            "apse_km": track.apse,
            "beta_mean": track.beta_mean.tolist(),
            "beta_sd": track.beta_sd.tolist(),
        }
    if args.anchor is not None:
        if len(data) != 2:
            raise ValidationError("--anchor needs both easting and northing columns")
        (ne, _, _), (nn, _, _) = data
        lat, lon = unproject_arrays(np.column_stack([means[ne], means[nn]]), GeoPoint(*args.anchor))
        _write_table(out / "track_latlon.csv", {"t_index": np.arange(1, len(lat) + 1), "lat_deg": lat, "lon_deg": lon},
                     args.format)
    report["timings"] = {"meld_s": timings}
    _dump_json(out / "report.json", report)
    return EXIT_OK


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    data = _load_pair(args.dr, args.gps, args.sigma2_g)
    cols = {"t_index": np.arange(1, data[0][1].T + 1)}
    for name, x, y in data:
        track = conventional_correct(x, y) if args.method == "conventional" else linear_interp(y, x.T)
        cols[name] = track.values
    _write_table(out / f"baseline_{args.method}.csv", cols, args.format)
    return EXIT_OK


def cmd_cv(args) -> int:
    config = _model_config(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    data = _load_pair(args.dr, args.gps, config.sigma2_g)
    block = 1 if args.scheme == "loo" else 5
    threads = _threads(args)
    report = {"command": "cv", "scheme": args.scheme, "coordinates": {}}
    t0 = time.perf_counter()
    for name, x, y in data:
        need = 4 if block == 1 else 8
        if y.K < need:
            raise ValidationError(f"{args.scheme} cross-validation needs K >= {need} fixes, got {y.K}")
        reps = cross_validate(x, y, BiasBasis(config.q_order), config, methods, block, threads)
        report["coordinates"][name] = [r.to_dict() for r in reps]
    report["timings"] = {"cv_s": time.perf_counter() - t0}
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    _dump_json(path, report)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _model_config(args)
    out = _out_dir(args)
    data = _load_pair(args.dr, args.gps, config.sigma2_g)
    threads = _threads(args)
    report = {"command": "sweep", "scheme": args.scheme, "coordinates": {}}
    t0 = time.perf_counter()
    for name, x, y in data:
        rows, flagged = order_sweep(x, y, config, args.q, args.scheme, threads)
        suffix = "" if len(data) == 1 else f"_{_stem(name)}"
        fields = ("Q", "sigma2_H_hat", "sigma2_D_hat", "apse_km", "cv_rmse", "coverage")
        cols = {f: np.array([getattr(r, f) for r in rows], dtype=np.int64 if f == "Q" else float) for f in fields}
        _write_table(out / f"sweep{suffix}.csv", cols, args.format)
        report["coordinates"][name] = {"rows": [r.to_dict() for r in rows], "flagged": flagged}
    report["timings"] = {"sweep_s": time.perf_counter() - t0}
    _dump_json(out / "report.json", report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    kw = {}
    if args.beta is not None:
        kw["beta"] = args.beta
    if (args.sigma2_H is None) != (args.sigma2_D is None):
        raise ValidationError("set both --sigma2-h and --sigma2-d or neither")
    if args.sigma2_H is not None:
        kw["phi"] = (args.sigma2_H, args.sigma2_D)
    if args.sigma2_g is not None:
        kw["sigma2_G"] = args.sigma2_g
    spec = make_bench_instance(args.scale, args.seed, **kw)
    truth, x, y = simulate_trip(spec)
    t = np.arange(1, spec.T + 1)
    write_csv(out / "dr.csv", {"t_index": t, "value_km": x.values})
    write_csv(out / "truth.csv", {"t_index": t, "value_km": truth.values})
    write_csv(out / "gps.csv", {"t_index": y.indices, "value_km": y.values})
    _dump_json(out / "report.json", {
        "command": "simulate", "scale": args.scale, "seed": args.seed, "T": spec.T, "K": y.K,
        "phi": list(spec.phi), "beta": list(spec.beta), "sigma2_G": spec.sigma2_G, "timings": {},
    })
    return EXIT_OK


def cmd_dra(args) -> int:
    out = _out_dir(args)
    stream = read_tag_csv(args.tag, args.dt, args.gravity_ref, args.mag_ref)
    t0 = time.perf_counter()
    res = dra_reconstruct(stream, args.start, args.speed_mode, args.speed, args.window, args.eps_oz)
    elapsed = time.perf_counter() - t0
    _write_table(out / "dr.csv", {"t_index": np.arange(1, len(stream) + 1), "easting_km": res.easting.values,
                                  "northing_km": res.northing.values}, args.format)
    _dump_json(out / "report.json", {"command": "dra", "samples": len(stream), "flagged": res.flagged,
                                     "speed_mode": args.speed_mode, "window": args.window,
                                     "timings": {"dra_s": elapsed}})
    return EXIT_OK


def cmd_project(args) -> int:
    out = _out_dir(args)
    cols = read_series_csv(args.gps)
    for c in ("lat_deg", "lon_deg"):
        if c not in cols:
            raise ValidationError(f"{args.gps}: missing column {c!r}")
    fixes = [GeoPoint(float(a), float(b)) for a, b in zip(cols["lat_deg"], cols["lon_deg"])]
    xy = project_pointwise(fixes)
    _write_table(out / "gps.csv", {"t_index": cols["t_index"], "easting_km": xy[:, 0], "northing_km": xy[:, 1]},
                 args.format)
    _dump_json(out / "report.json", {"command": "project", "anchor": [fixes[0].lat_deg, fixes[0].lon_deg],
                                     "K": len(fixes), "timings": {}})
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--config", help="JSON file with model keys: " + ", ".join(MODEL_KEYS))
    g.add_argument("--q-order", dest="q_order", type=int, help="polynomial bias order Q in 0..6 (default 0)")
    g.add_argument("--sigma2-g", dest="sigma2_g", type=float, help="GPS error variance, km^2 (default 0.0625)")
    g.add_argument("--delta-z", dest="delta_z", type=float, help="grid step in standardized units (default 1)")
    g.add_argument("--delta-pi", dest="delta_pi", type=float, help="log-density drop that ends a grid axis (default 3)")
    g.add_argument("--grid-cap", dest="grid_cap", type=int, help="max grid steps per direction (default 25)")
    g.add_argument("--sigma2-h", dest="sigma2_H", type=float, help="fix the true-path variance (skips the fit)")
    g.add_argument("--sigma2-d", dest="sigma2_D", type=float, help="fix the DR-error variance (skips the fit)")


def _add_io_flags(p, out_dir=True):
    p.add_argument("--dr", required=True, help="DR CSV: t_index plus one or two coordinate columns in km")
    p.add_argument("--gps", required=True, help="GPS CSV with the same coordinate columns")
    if out_dir:
        p.add_argument("--out-dir", default=".", help="output directory (default .)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format (default csv)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbmeld", description="Meld dead-reckoned paths with sparse GPS fixes.",
                                 epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meld", help="posterior track per coordinate", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_io_flags(p)
    _add_model_flags(p)
    p.add_argument("--anchor", type=_pair, help="LAT,LON of the first fix; also writes track_latlon.csv")
    p.set_defaults(func=cmd_meld)

    p = sub.add_parser("baseline", help="conventional correction or linear interpolation")
    _add_io_flags(p)
    p.add_argument("--method", choices=("conventional", "linear"), required=True)
    p.add_argument("--sigma2-g", dest="sigma2_g", type=float, default=0.0625, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("cv", help="leave-one-out or leave-five-out cross-validation", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_io_flags(p, out_dir=False)
    _add_model_flags(p)
    p.add_argument("--scheme", choices=("loo", "l5o"), default="loo")
    p.add_argument("--methods", default="bm,conventional,linear", help="comma list of bm, conventional, linear")
    p.add_argument("--out", default="report.json", help="report path (default report.json)")
    p.add_argument("--threads", type=int, help="fold workers (default $MELD_THREADS or 1)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="refit and cross-validate over bias orders", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_io_flags(p)
    _add_model_flags(p)
    p.add_argument("--q", type=_q_range, default=list(range(7)), help="orders, e.g. 0..6 (default) or 0,2,4")
    p.add_argument("--scheme", choices=("loo", "l5o"), default="loo")
    p.add_argument("--threads", type=int, help="fold workers (default $MELD_THREADS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="synthetic trip from the melding model")
    p.add_argument("--scale", choices=("small", "trip1", "trip2"), default="small")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=_floats, help="bias coefficients, e.g. 2,10 (default 2,10; empty string for none)")
    p.add_argument("--sigma2-h", dest="sigma2_H", type=float)
    p.add_argument("--sigma2-d", dest="sigma2_D", type=float)
    p.add_argument("--sigma2-g", dest="sigma2_g", type=float)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dra", help="dead-reckon a tag CSV (t_index,ax,ay,az,mx,my,mz,depth_m)")
    p.add_argument("--tag", required=True)
    p.add_argument("--dt", type=float, default=1.0, help="sample interval in seconds (default 1)")
    p.add_argument("--speed-mode", choices=("from_depth", "constant"), default="from_depth")
    p.add_argument("--speed", type=float, default=1.0, help="speed in m/s for constant mode (default 1)")
    p.add_argument("--start", type=_pair, default=(0.0, 0.0), help="EASTING,NORTHING start in km (default 0,0)")
    p.add_argument("--window", type=int, default=5, help="odd running-mean window (default 5)")
    p.add_argument("--eps-oz", dest="eps_oz", type=float, default=EPS_OZ, help=argparse.SUPPRESS)
    p.add_argument("--gravity-ref", dest="gravity_ref", type=_floats, default=GRAVITY_NED,
                   help="gravity reference in NED (default 0,0,1)")
    p.add_argument("--mag-ref", dest="mag_ref", type=_floats, default=MAG_NED,
                   help="magnetic reference in NED (default 60 degree inclination)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_dra)

    p = sub.add_parser("project", help="lat/lon fixes (t_index,lat_deg,lon_deg) to easting/northing km")
    p.add_argument("--gps", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_project)
    return ap


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
