"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 input error, 3 processing error.
Failures print a one-line JSON object ``{"error", "message", "exit_code"}``
to stderr. Every output file is written to a temporary name and renamed.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__
from .ephemeris import EphemerisStore, fetch_ephemeris, parse_rinex_nav, read_nav_text
from .ephemeris.fetch import BASE_URL_ENV, CACHE_ENV
from .ephemeris.rinex import gnss_to_datetime
from .errors import GnssError, InputError, NetworkError, NoEphemeris, NotAvailable
from .formats import (
    atomic_write,
    format_fixes,
    format_poses,
    parse_features,
    parse_key_values,
    parse_poses,
    parse_positions,
    parse_tracks,
)
from .frames import Geodetic
from .measurements import ProcessingConfig, parse_raw_records
from .refine import DriveInput, refine
from .solver import FilterConfig
from .solver.pipeline import solve_epochs
from .validation import (
    Feature2D3D,
    GridFix,
    GridReport,
    GridSpec,
    compare_solutions,
    grid_altitude_report,
    horizontal_error_estimate,
    orientation_rmse,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_PROCESSING = 0, 1, 2, 3

log = logging.getLogger("rawgnss")


# --- configuration --------------------------------------------------------------

@dataclass
class RunConfig:
    """Flat ``key = value`` run configuration; see README for the schema."""

    elevation_mask_deg: float = 10.0
    cn0_floor: float = 20.0
    sigma0: float = 1.0
    rate_sigma0: float = 0.1
    use_iono: bool = True
    use_tropo: bool = True
    filter: FilterConfig = field(default_factory=FilterConfig)
    cell_size: float = 5.0
    min_passes: int = 3
    min_distinct_drives: int = 2
    bin_width: float = 0.25
    cache_dir: str | None = None
    base_url: str | None = None

    _RANGES = {
        "elevation_mask_deg": (0.0, 90.0), "cn0_floor": (0.0, 64.0), "sigma0": (1e-6, 1e4),
        "rate_sigma0": (1e-6, 1e3), "cell_size": (1e-3, 1e4), "min_passes": (2, 10**6),
        "min_distinct_drives": (1, 10**6), "bin_width": (1e-6, 1e3),
        "filter.sigma_accel_h": (0.0, 100.0), "filter.tau_accel": (1e-3, 1e5),
        "filter.sigma_accel_v": (0.0, 100.0), "filter.q_clock_bias": (0.0, 1e6),
        "filter.q_clock_drift": (0.0, 1e6), "filter.q_glonass_bias": (0.0, 1e6),
        "filter.gate_sigma": (1.0, 1e3), "filter.max_gap": (1e-3, 1e5),
        "filter.max_speed": (1.0, 1e4), "filter.max_all_gated": (1, 10**6),
    }

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values = parse_key_values(text)
        cfg = cls()
        filt = {}
        simple = {f.name: f for f in fields(cls) if f.name != "filter"}
        filter_fields = {f.name: f for f in fields(FilterConfig)}
        for key, raw in values.items():
            if key.startswith("filter."):
                name = key[len("filter."):]
                if name not in filter_fields:
                    raise InputError(f"unknown config key {key!r}")
                filt[name] = _typed(key, raw, getattr(FilterConfig(), name))
            elif key in simple:
                default = getattr(cls(), key)
                setattr(cfg, key, raw if key in ("cache_dir", "base_url") else _typed(key, raw, default))
            else:
                raise InputError(f"unknown config key {key!r}")
        cfg.filter = FilterConfig(**filt)
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def check(self) -> None:
        for key, (lo, hi) in self._RANGES.items():
            v = getattr(self.filter, key[7:]) if key.startswith("filter.") else getattr(self, key)
            if not lo <= v <= hi:
                raise InputError(f"config {key} = {v} outside [{lo}, {hi}]")

    def processing(self) -> ProcessingConfig:
        return ProcessingConfig(self.elevation_mask_deg, self.cn0_floor, self.sigma0,
                                self.rate_sigma0, self.use_iono, self.use_tropo)


def _typed(key, raw, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise InputError(f"config {key}: cannot parse {raw!r}") from None


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    # flags win over the file
    for name in ("elevation_mask_deg", "cn0_floor", "cell_size", "min_passes", "min_distinct_drives",
                 "cache_dir", "base_url"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    cfg.check()
    return cfg


# --- helpers ----------------------------------------------------------------------

def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _histogram_csv(rows, header) -> str:
    return header + "\n" + "".join(",".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n"
                                   for r in rows)


def _parse_origin(text):
    if text is None or text == "auto":
        return None
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"bad origin {text!r}; expected auto or lat,lon[,height]") from None
    if len(parts) not in (2, 3):
        raise InputError(f"bad origin {text!r}; expected auto or lat,lon[,height]")
    return Geodetic(parts[0], parts[1], parts[2] if len(parts) == 3 else 0.0)


def _nav_store(nav_arg, epochs, cfg: RunConfig):
    if nav_arg == "auto":
        if not epochs:
            raise InputError("raw file has no epochs")
        days = sorted({gnss_to_datetime(e.time).date() for e in (epochs[0], epochs[-1])})
        paths = []
        for day in days:
            try:
                paths.append(fetch_ephemeris(day, cfg.cache_dir, cfg.base_url))
            except (NotAvailable, NetworkError) as exc:
                raise NoEphemeris(f"no navigation data for {day}: {exc}") from None
    else:
        paths = [Path(nav_arg)]
    store, iono = EphemerisStore(), None
    for p in paths:
        try:
            text = read_nav_text(p)
        except OSError as exc:
            raise InputError(f"cannot read {p}: {exc}") from None
        nav = parse_rinex_nav(text)
        for sat, eph in nav.records:
            store.add(sat, eph)
        iono = iono or nav.iono
    if len(store) == 0:
        raise NoEphemeris("navigation file holds no usable records")
    return store, iono


# --- commands -----------------------------------------------------------------------

def cmd_fetch_eph(args) -> int:
    cfg = _load_config(args)
    try:
        day = dt.date.fromisoformat(args.date)
    except ValueError:
        raise InputError(f"bad date {args.date!r}; expected YYYY-MM-DD") from None
    path = fetch_ephemeris(day, cfg.cache_dir, cfg.base_url)
    print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    parsed = parse_raw_records(_read(args.raw))
    store, iono = _nav_store(args.nav, parsed.epochs, cfg)
    solutions, report = solve_epochs(parsed.epochs, store, iono, args.mode, cfg.processing(), cfg.filter)
    report.parse_skipped = parsed.skipped
    report.diagnostics = parsed.diagnostics[:50] + report.diagnostics
    atomic_write(args.out, format_fixes(solutions))
    if args.report:
        atomic_write(args.report, _json(report.as_dict()))
    print(f"{len(solutions)} fixes from {report.epochs} epochs ({args.mode})")
    return EXIT_OK


def cmd_validate_grid(args) -> int:
    cfg = _load_config(args)
    fixes = []
    for drive, path in enumerate(args.fixes):
        for t, pos, hdop, vdop in parse_positions(_read(path)):
            fixes.append(GridFix(drive, t, pos, vdop, hdop))
    spec = GridSpec(_parse_origin(args.origin), cfg.cell_size, cfg.min_passes, cfg.min_distinct_drives,
                    cfg.bin_width)
    report = grid_altitude_report(fixes, spec)
    out = report.as_dict()
    if all(f.hdop is not None and f.vdop is not None for f in fixes):
        out["horizontal_error_estimate"] = horizontal_error_estimate(fixes, None, report)
    hist = args.histogram or str(Path(args.out).with_suffix("")) + "_histogram.csv"
    atomic_write(hist, _histogram_csv(report.histogram, "bin_left,bin_right,count"))
    atomic_write(args.out, _json(out))
    print(f"altitude rmse {report.rmse:.3f} m over {len(report.cells)} cells")
    return EXIT_OK


def _load_report(path) -> GridReport:
    try:
        return GridReport.from_dict(json.loads(_read(path)))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a grid report ({exc})") from None


def cmd_compare(args) -> int:
    cmp = compare_solutions(_load_report(args.candidate), _load_report(args.baseline))
    if args.out:
        atomic_write(args.out, _json(cmp.as_dict()))
    if args.overlay:
        atomic_write(args.overlay, _histogram_csv(cmp.overlay, "bin_left,bin_right,count_candidate,count_baseline"))
    print(f"altitude rmse reduction {cmp.reduction_fraction:.4f} "
          f"(candidate {cmp.rmse_a:.4f} m, baseline {cmp.rmse_b:.4f} m)")
    return EXIT_OK


def cmd_orientation_rmse(args) -> int:
    poses = parse_poses(_read(args.poses))
    intr, rows = parse_features(_read(args.features))
    feats = [Feature2D3D(r[0], r[1], r[2], r[3], r[4:7], intr) for r in rows]
    est = orientation_rmse(poses, feats)
    atomic_write(args.out, _json(est.as_dict()))
    d = est.as_dict()["rmse_deg"]
    print(f"orientation rmse deg: roll {d['roll']:.4f} pitch {d['pitch']:.4f} yaw {d['yaw']:.4f}")
    return EXIT_OK


def cmd_refine(args) -> int:
    drives = []
    for d in args.drives:
        poses = parse_poses(_read(Path(d) / "poses.csv"))
        intr, rows = parse_tracks(_read(Path(d) / "tracks.csv"))
        drives.append(DriveInput(poses, rows, intr))
    res = refine(drives, max_iters=args.max_iters)
    out = Path(args.out)
    for k, poses in enumerate(res.poses):
        atomic_write(out / f"poses_{k:02d}.csv", format_poses(poses))
    atomic_write(out / "trace.csv", "iteration,mean_error_px,accepted\n" + "".join(
        f"{i},{e!r},{int(a)}\n" for i, e, a in res.trace))
    atomic_write(out / "refine_report.json", _json({
        "reason": res.reason, "iterations": res.state.iteration,
        "dropped_tracks": res.state.dropped_tracks,
        "flagged_frames": {f"{k[0]}:{k[1]}": v for k, v in sorted(res.state.flagged.items())},
    }))
    print(f"mean reprojection error {res.trace[0][1]:.4f} -> {res.state.errors[-1]:.4f} px ({res.reason})")
    return EXIT_OK


def cmd_synth(args) -> int:
    from dataclasses import replace

    from .testkit import SyntheticScene, generate_drive, generate_feature_scene

    scene = SyntheticScene.from_file(args.scene) if args.scene else SyntheticScene()
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    out = Path(args.out)
    paths = generate_drive(scene).write(out)
    if args.feature_drives:
        fs = generate_feature_scene(args.feature_drives, pixel_sigma=scene.pixel_sigma,
                                    pos_sigma=args.pose_sigma, rot_sigma_deg=args.rot_sigma_deg,
                                    seed=scene.seed)
        for k, d in enumerate(fs.drives):
            d.write(out / f"features_{k:02d}", fs.intrinsics, fs.points)
    msg = f"wrote {len(paths)} files to {out}"
    if args.feature_drives:
        msg += f" plus {args.feature_drives} feature drives"
    print(msg)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(_json_line("UsageError", message, EXIT_USAGE))
        sys.exit(EXIT_USAGE)


def _json_line(kind, message, code) -> str:
    return json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rawgnss", description="Raw GNSS positioning and pose validation tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value run configuration file")

    sp = sub.add_parser("fetch-eph", help="download daily broadcast navigation data into the cache")
    sp.add_argument("--date", required=True, help="UTC day, YYYY-MM-DD")
    sp.add_argument("--cache-dir", dest="cache_dir", help=f"cache root (default ${CACHE_ENV} or ~/.cache/rawgnss)")
    sp.add_argument("--base-url", dest="base_url", help=f"archive root (default ${BASE_URL_ENV} or the IGS BRDC mirror)")
    common(sp)
    sp.set_defaults(func=cmd_fetch_eph)

    sp = sub.add_parser("solve", help="position fixes from raw measurements")
    sp.add_argument("--raw", required=True, help="raw measurement CSV")
    sp.add_argument("--nav", required=True, help="RINEX navigation file, or 'auto' to fetch by date")
    sp.add_argument("--mode", choices=("wls", "kf"), default="wls", help="per-epoch WLS or Kalman filter")
    sp.add_argument("--out", required=True, help="output fix CSV")
    sp.add_argument("--report", help="optional JSON run report")
    sp.add_argument("--elevation-mask", dest="elevation_mask_deg", type=float, help="degrees")
    sp.add_argument("--cn0-floor", dest="cn0_floor", type=float, help="dB-Hz")
    sp.add_argument("--cache-dir", dest="cache_dir", help="ephemeris cache for --nav auto")
    sp.add_argument("--base-url", dest="base_url", help="archive root for --nav auto")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("validate-grid", help="altitude spread within road grid cells")
    sp.add_argument("--fixes", nargs="+", required=True, help="fix or pose CSV files, one per drive")
    sp.add_argument("--cell", dest="cell_size", type=float, help="cell size in metres (default 5.0)")
    sp.add_argument("--origin", default="auto", help="auto (centroid) or lat,lon[,height]")
    sp.add_argument("--min-passes", dest="min_passes", type=int, help="passes required per cell (default 3)")
    sp.add_argument("--min-drives", dest="min_distinct_drives", type=int, help="drives required per cell (default 2)")
    sp.add_argument("--out", required=True, help="output JSON report")
    sp.add_argument("--histogram", help="histogram CSV (default <out>_histogram.csv)")
    common(sp)
    sp.set_defaults(func=cmd_validate_grid)

    sp = sub.add_parser("compare", help="altitude RMSE reduction of a candidate against a baseline")
    sp.add_argument("--candidate", required=True, help="grid report JSON of the candidate")
    sp.add_argument("--baseline", required=True, help="grid report JSON of the baseline")
    sp.add_argument("--out", help="optional JSON result")
    sp.add_argument("--overlay", help="optional overlay histogram CSV")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("orientation-rmse", help="orientation error of poses from 2D-3D features")
    sp.add_argument("--poses", required=True, help="pose CSV (row index is the frame id)")
    sp.add_argument("--features", required=True, help="feature CSV with intrinsics line")
    sp.add_argument("--out", required=True, help="output JSON report")
    sp.set_defaults(func=cmd_orientation_rmse)

    sp = sub.add_parser("refine", help="map-based pose correction across drives")
    sp.add_argument("--drives", nargs="+", required=True, help="directories holding poses.csv and tracks.csv")
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=10, help="iteration cap (default 10)")
    sp.add_argument("--out", required=True, help="output directory for poses_XX.csv and trace.csv")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("synth", help="generate a seeded synthetic scene")
    sp.add_argument("--scene", help="scene configuration file (defaults used when omitted)")
    sp.add_argument("--seed", type=int, help="override the scene seed")
    sp.add_argument("--feature-drives", dest="feature_drives", type=int, default=0,
                    help="also write this many feature drives for refine/orientation-rmse")
    sp.add_argument("--pose-sigma", dest="pose_sigma", type=float, default=0.0, help="feature-drive pose noise, m")
    sp.add_argument("--rot-sigma-deg", dest="rot_sigma_deg", type=float, default=0.0,
                    help="feature-drive orientation noise, deg")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GnssError as exc:
        code = EXIT_INPUT if isinstance(exc, InputError) else EXIT_PROCESSING
        sys.stderr.write(_json_line(type(exc).__name__, str(exc), code))
    except (ValueError, OSError) as exc:
        code = EXIT_INPUT
        sys.stderr.write(_json_line(type(exc).__name__, str(exc), code))
    return code


if __name__ == "__main__":
    sys.exit(main())
